use nalgebra::{DMatrix, DVector};
use ndarray::Array1;
use num_complex::Complex64;
use proptest::prelude::*;
use shearlab::grid::{forward_1d, inverse_1d, signed_index, Grid, SpectralField};
use shearlab::linear::*;
use shearlab::profile::{ProfileResolution, ShearProfile};

const BUMP: &str = "gevrey-bump:0.2,1.0";
const SMOOTH_BUMP: &str = "gevrey-bump:0.2,3.0";

fn profile(spec: &str, nu: f64, n: usize) -> ShearProfile {
    ShearProfile::from_spec(spec, nu, ProfileResolution::for_v_box(n, 10.0)).unwrap()
}

/// Coefficients of `exp(-(v - c)^2 / w^2)` on the profile grid.
fn gaussian(p: &ShearProfile, c: f64, w: f64) -> Array1<Complex64> {
    let vals: Vec<Complex64> = p
        .v_points()
        .iter()
        .map(|&v| Complex64::new((-((v - c) / w).powi(2)).exp(), 0.0))
        .collect();
    Array1::from(forward_1d(&vals))
}

fn pulse(
    phi: Array1<Complex64>,
    centre: f64,
    width: f64,
) -> impl Fn(f64) -> Array1<Complex64> + Sync {
    move |tau: f64| &phi * Complex64::new((-((tau - centre) / width).powi(2)).exp(), 0.0)
}

fn norm(x: &Array1<Complex64>) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn zero_forcing_keeps_profile_zero() {
    let p = profile(BUMP, 1e-3, 128);
    let mut m = LinearMode::new(&p, 1, 1e-3).unwrap();
    let zero = |_: f64| Array1::<Complex64>::zeros(128);
    m.run_to(3.0, 0.05, &zero).unwrap();
    assert!(m.f.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
}

#[test]
fn couette_profile_is_moving_frame_heat_flow() {
    let nu = 1e-2;
    let p = ShearProfile::couette(nu, ProfileResolution::for_v_box(128, 10.0)).unwrap();
    let f0 = gaussian(&p, 0.5, 1.0);
    let mut m = LinearMode::with_initial(&p, 3, nu, f0.clone()).unwrap();
    let forcing = pulse(gaussian(&p, 0.0, 0.7), 1.0, 0.3);
    m.run_to(5.0, 0.01, &forcing).unwrap();
    for j in 0..128 {
        let eta = std::f64::consts::PI / 10.0 * signed_index(j, 128) as f64;
        let e = (-nu * shearlab::oracles::dissipation_exponent(3.0, eta, 5.0)).exp();
        assert!((m.f[j] - f0[j] * e).norm() <= 1e-8 * norm(&f0));
    }
}

#[test]
fn field_state_has_zero_mean_mode_and_conjugate_rows() {
    let p = profile(BUMP, 1e-3, 64);
    let g = Grid::new(8, 64, 10.0).unwrap();
    let mut st = LinearProfileState::new(&p, &g, 1e-3).unwrap();
    assert_eq!(st.f.max_abs(), 0.0);
    let phi = gaussian(&p, 0.2, 0.8);
    let omega = move |t: f64| {
        let mut f = SpectralField::zeros(&g);
        for k in 1..4i64 {
            for j in 0..64 {
                let m = signed_index(j, 64);
                let c = phi[j] * (-t).exp() / k as f64;
                f.set_coeff(k, m, c);
                f.set_coeff(-k, -m, c.conj());
            }
        }
        f
    };
    for _ in 0..20 {
        st.step_f(0.05, &omega).unwrap();
    }
    assert!(st.f.max_abs() > 0.0);
    assert_eq!(st.f.p0().max_abs(), 0.0);
    assert!(st.f.hermitian_defect() < 1e-15);
}

#[test]
fn tilt_guard_rejects_unresolved_times() {
    let p = profile(BUMP, 1e-3, 32);
    let mut m = LinearMode::new(&p, 2, 1e-3).unwrap();
    let zero = |_: f64| Array1::<Complex64>::zeros(32);
    assert!(matches!(
        m.run_to(20.0, 0.1, &zero),
        Err(shearlab::Error::TiltAliasing { .. })
    ));
}

#[test]
fn stepping_is_second_order_in_dt() {
    let p = profile(BUMP, 1e-3, 128);
    let forcing = pulse(gaussian(&p, 0.3, 1.0), 1.0, 0.4);
    let run = |dt: f64| {
        let mut m = LinearMode::new(&p, 1, 1e-3).unwrap();
        m.run_to(3.0, dt, &forcing).unwrap();
        m.f
    };
    let (a, b, c) = (run(0.04), run(0.02), run(0.01));
    let ratio = norm(&(&a - &b)) / norm(&(&b - &c));
    assert!((ratio - 4.0).abs() < 0.6, "{ratio}");
}

/// Dense Fourier collocation for `eps U'' + (c - i (v - w)) U = f` and `T'' - k^2 T = U` on a
/// periodic box wide enough that both have decayed at its edge.
fn couette_reference(
    l: f64,
    n: usize,
    k: f64,
    eps: f64,
    c: f64,
    w: f64,
    f: &[Complex64],
) -> (Vec<Complex64>, Vec<Complex64>) {
    let v: Vec<f64> = (0..n).map(|j| -l + 2.0 * l * j as f64 / n as f64).collect();
    let mut a = DMatrix::<Complex64>::zeros(n, n);
    for col in 0..n {
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[col] = Complex64::new(1.0, 0.0);
        let mut ce = forward_1d(&e);
        for (j, z) in ce.iter_mut().enumerate() {
            let m = signed_index(j, n);
            let eta = if m == -((n / 2) as i64) {
                0.0
            } else {
                std::f64::consts::PI / l * m as f64
            };
            *z *= -eta * eta;
        }
        let d2 = inverse_1d(&ce);
        for row in 0..n {
            a[(row, col)] = d2[row] * eps;
        }
        a[(col, col)] += Complex64::new(c, -(v[col] - w));
    }
    let u = a.lu().solve(&DVector::from_vec(f.to_vec())).unwrap();
    let u: Vec<Complex64> = u.iter().copied().collect();
    let mut cu = forward_1d(&u);
    for (j, z) in cu.iter_mut().enumerate() {
        let eta = std::f64::consts::PI / l * signed_index(j, n) as f64;
        *z /= -(eta * eta + k * k);
    }
    (u, inverse_1d(&cu))
}

#[test]
fn couette_resolvent_matches_dense_reference() {
    let (l, n) = (6.4, 1024);
    let h = 2.0 * l / n as f64;
    let (k, eps, w): (f64, f64, f64) = (3.0, 1e-2, 0.2);
    let c = DEFAULT_DELTA_LIN * eps.cbrt();
    let v: Vec<f64> = (0..n).map(|j| -l + h * j as f64).collect();
    let f: Vec<Complex64> = v
        .iter()
        .map(|&x| (-(x - 0.3f64).powi(2) / 0.08).exp() * Complex64::new(0.0, -2.0 * x).exp())
        .collect();
    let (u_ref, t_ref) = couette_reference(l, n, k, eps, c, w, &f);
    // Window [-4, 4] starts at lattice index 192.
    let (lo, np) = (192, 641);
    let col = ResolventColumn {
        b0: vec![1.0; np],
        b0p: vec![0.0; np],
        v0: v[lo],
        h,
        k,
        eps,
        c,
    };
    let (u, t) = col.solve(w, &f[lo..lo + np]).unwrap();
    let scale_u = u_ref.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale_t = t_ref.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let eu = (0..np)
        .map(|p| (u[p] - u_ref[lo + p]).norm())
        .fold(0.0, f64::max)
        / scale_u;
    let et = (0..np)
        .map(|p| (t[p] - t_ref[lo + p]).norm())
        .fold(0.0, f64::max)
        / scale_t;
    assert!(eu <= 1e-8 && et <= 1e-8, "{eu:e} {et:e}");
}

#[test]
fn resolvent_with_zero_rhs_is_zero() {
    let col = ResolventColumn {
        b0: vec![1.1; 40],
        b0p: vec![0.3; 40],
        v0: 0.0,
        h: 0.05,
        k: 1.0,
        eps: 1e-3,
        c: 1e-3,
    };
    let (u, t) = col.solve(0.4, &vec![Complex64::new(0.0, 0.0); 40]).unwrap();
    assert!(u.iter().chain(&t).all(|z| z.norm() == 0.0));
}

#[test]
fn crosscheck_is_trivial_without_forcing_and_for_couette() {
    let opts = RepresentationOptions {
        tau_nodes: 8,
        refine: 2,
        r_max: 8.0,
        ..Default::default()
    };
    let p = profile(BUMP, 1e-3, 256);
    let zero = |_: f64| Array1::<Complex64>::zeros(256);
    let r = representation_crosscheck(&p, 1, 1e-3, &zero, 2.0, 0.02, &opts).unwrap();
    assert_eq!(r.discrepancy, 0.0);
    let c = ShearProfile::couette(1e-3, ProfileResolution::for_v_box(128, 10.0)).unwrap();
    let forcing = pulse(gaussian(&c, 0.3, 1.0), 1.0, 0.3);
    let r = representation_crosscheck(&c, 2, 1e-3, &forcing, 3.0, 0.02, &opts).unwrap();
    assert!(r.discrepancy <= 1e-6);
}

#[test]
fn representation_matches_time_stepping_on_the_bump() {
    let nu = 1e-3;
    let p = profile(BUMP, nu, 256);
    let forcing = pulse(gaussian(&p, 0.3, 1.0), 1.5, 0.5);
    let disc = |nodes: usize| {
        let opts = RepresentationOptions {
            tau_nodes: nodes,
            refine: 4,
            r_max: 8.0,
            ..Default::default()
        };
        representation_crosscheck(&p, 1, nu, &forcing, 4.0, 0.01, &opts)
            .unwrap()
            .discrepancy
    };
    let d: Vec<f64> = [8, 16, 32].iter().map(|&q| disc(q)).collect();
    assert!(d[2] <= 1e-3, "{d:?}");
    assert!(d[0] > d[1] && d[2] <= d[1] * 1.01, "{d:?}");
}

#[test]
fn representation_decay_factor_is_dominated_by_measured_decay() {
    let nu = 1e-3;
    let p = profile(BUMP, nu, 128);
    let chk = decay_check(
        &p,
        1,
        nu,
        gaussian(&p, 0.3, 1.0),
        4.0,
        0.02,
        DEFAULT_DELTA_LIN,
    )
    .unwrap();
    assert!(chk.holds(), "{chk:?}");
}

#[test]
fn shift_envelope_constant_is_stable_in_eps() {
    let opts = RepresentationOptions {
        refine: 4,
        r_max: 8.0,
        ..Default::default()
    };
    let ratio = |nu: f64| {
        let p = profile(SMOOTH_BUMP, nu, 256);
        let x = forcing_x(&p, 1, 1.0, &gaussian(&p, 0.3, 1.0)).unwrap();
        shift_envelope(&p, 1, nu, 1.0, &x, 2.0, &opts)
            .unwrap()
            .ratio
    };
    let (a, b) = (ratio(1e-3), ratio(1e-4));
    assert!(a.is_finite() && b.is_finite());
    assert!((a - b).abs() <= 0.2 * a.max(b), "{a} {b}");
}

#[test]
fn profile_bound_constants_are_resolution_stable() {
    for nu in [1e-3, 1e-4] {
        let c = |n: usize, dt: f64| {
            let p = profile(BUMP, nu, n);
            let forcing = pulse(gaussian(&p, 0.3, 1.0), 1.0, 0.25);
            linear_bounds_constants(&p, 1, nu, &forcing, 10.0, dt, 2.0, 201).unwrap()
        };
        let (a, b) = (c(512, 0.02), c(1024, 0.01));
        for (x, y) in [
            (a.linpro3, b.linpro3),
            (a.linpro3_4, b.linpro3_4),
            (a.linpro3_5, b.linpro3_5),
            (a.wi, b.wi),
            (a.ck, b.ck),
        ] {
            assert!(
                x.is_finite() && (x - y).abs() <= 0.2 * y,
                "nu={nu}: {a:?} {b:?}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn response_is_linear_in_forcing(a in -2.0f64..2.0, c1 in -1.0f64..1.0, c2 in 0.5f64..2.0) {
        let p = profile(BUMP, 1e-3, 64);
        let g1 = pulse(gaussian(&p, c1, 0.8), 0.5, 0.3);
        let g2 = pulse(gaussian(&p, -c1, 1.2), c2, 0.5);
        let run = |f: &ModeForcing| {
            let mut m = LinearMode::new(&p, 1, 1e-3).unwrap();
            m.run_to(2.0, 0.05, f).unwrap();
            m.f
        };
        let sum = |t: f64| g1(t) * Complex64::new(a, 0.0) + g2(t);
        let lhs = run(&sum);
        let rhs = run(&g1) * Complex64::new(a, 0.0) + run(&g2);
        prop_assert!(norm(&(&lhs - &rhs)) <= 1e-10 * norm(&rhs).max(1e-300));
    }
}
