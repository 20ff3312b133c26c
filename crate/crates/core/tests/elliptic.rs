use ndarray::Array1;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shearlab::elliptic::*;
use shearlab::grid::signed_index;
use shearlab::profile::{ProfileResolution, ShearProfile};
use shearlab::Error;

const BUMP: &str = "gevrey-bump:0.2,1.0";
/// Wider bump whose spectrum is resolved at moderate n.
const SMOOTH_BUMP: &str = "gevrey-bump:0.2,3.0";
const NU: f64 = 1e-3;

fn bump(n: usize) -> ShearProfile {
    ShearProfile::from_spec(BUMP, NU, ProfileResolution::for_v_box(n, 10.0)).unwrap()
}

fn rhs(n: usize, seed: u64) -> Array1<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_fn(n, |j| {
        let m = signed_index(j, n).unsigned_abs() as f64;
        let d = (-(m / 16.0).powi(2)).exp();
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * d
    })
}

fn rel(a: &Array1<Complex64>, b: &Array1<Complex64>) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let n: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (d / n).sqrt()
}

#[test]
fn direct_residual_every_kind_and_k() {
    let p = bump(128).at_time(2.0).unwrap();
    for kind in [
        Kind::LapL,
        Kind::LapT,
        Kind::LapTilde,
        Kind::Lap0,
        Kind::LapB0,
    ] {
        for k in 1..=16 {
            let sp = EllipticOperatorSpec::new(kind, &p, 2.0, k);
            let b = rhs(128, k as u64);
            let x = solve(&sp, &b, Method::Direct).unwrap().x;
            let r = residual(&sp, &x, &b);
            assert!(r <= 1e-10, "{kind:?} k={k}: residual {r:e}");
        }
    }
}

#[test]
fn neumann_matches_direct_at_small_nu_t() {
    let t = 1e-3 / NU;
    let p = bump(256).at_time(t).unwrap();
    let sp = EllipticOperatorSpec::new(Kind::LapT, &p, t, 1);
    let b = rhs(256, 7);
    let d = solve(&sp, &b, Method::Direct).unwrap();
    let n = solve(&sp, &b, Method::Neumann).unwrap();
    assert!(rel(&n.x, &d.x) <= 1e-8);
}

#[test]
fn neumann_contraction_grows_with_nu_t_and_terms_decay_geometrically() {
    let base = bump(256);
    let b = rhs(256, 9);
    let mut gammas = vec![];
    for nt in [1e-3, 1e-1] {
        let t = nt / NU;
        let p = base.at_time(t).unwrap();
        let sp = EllipticOperatorSpec::new(Kind::LapT, &p, t, 1);
        let sol = solve(&sp, &b, Method::Neumann).unwrap();
        let g = sol.gamma_hat.unwrap();
        assert!(g < 1.0);
        let first = sol.term_norms[0];
        for (i, tn) in sol.term_norms.iter().enumerate() {
            assert!(*tn <= first * g.powi(i as i32) * (1.0 + 1e-12));
        }
        assert!(sol.terms.unwrap() >= 3);
        gammas.push(g);
    }
    assert!(gammas[0] < gammas[1], "{gammas:?}");
}

#[test]
fn neumann_rejects_other_kinds() {
    let p = bump(64);
    let sp = EllipticOperatorSpec::new(Kind::Lap0, &p, 0.0, 1);
    assert!(matches!(
        solve(&sp, &rhs(64, 1), Method::Neumann),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn neumann_divergence_is_reported() {
    let p = ShearProfile::from_spec(
        "gevrey-bump:3.0,1.0",
        1.0,
        ProfileResolution::for_v_box(128, 12.0),
    )
    .unwrap();
    let p = p.at_time(0.1).unwrap();
    let sp = EllipticOperatorSpec::new(Kind::LapT, &p, 0.0, 1);
    match solve(&sp, &rhs(128, 2), Method::Neumann) {
        Err(Error::NeumannDivergence { gamma }) => assert!(gamma >= 1.0),
        other => panic!("expected divergence, got {:?}", other.map(|s| s.gamma_hat)),
    }
}

#[test]
fn couette_greens_kernel_is_flat_helmholtz() {
    let p = ShearProfile::couette(NU, ProfileResolution::for_v_box(64, 8.0)).unwrap();
    let g = greens_kernel(&p, 3).unwrap();
    assert!(g.chi.iter().all(|&c| c == 1.0));
    assert!(g.g2.abs().max() < 1e-15);
    for i in 0..64 {
        for j in 0..64 {
            let e = (-3.0 * (g.v[i] - g.v[j]).abs()).exp() / 3.0;
            assert!((g.g[(i, j)] - e).abs() < 1e-15);
        }
    }
}

#[test]
fn greens_kernel_rejects_zero_k() {
    assert!(greens_kernel(&bump(64), 0).is_err());
}

#[test]
fn greens_kernel_is_point_symmetric_for_odd_profiles() {
    let g = greens_kernel(&bump(128), 2).unwrap();
    let n = 128;
    for i in 1..n {
        for j in 1..n {
            assert!((g.g[(i, j)] - g.g[(n - i, n - j)]).abs() < 1e-8);
        }
    }
}

#[test]
fn greens_weak_residual_is_small() {
    let r = greens_weak_residual(&bump(512), 1, 3, 8).unwrap();
    assert!(r <= 1e-6, "{r:e}");
    let c = ShearProfile::couette(NU, ProfileResolution::for_v_box(128, 10.0)).unwrap();
    assert!(greens_weak_residual(&c, 2, 2, 6).unwrap() <= 1e-10);
}

#[test]
fn greens_frequency_constants_are_finite_and_stable() {
    let a =
        ShearProfile::from_spec(SMOOTH_BUMP, NU, ProfileResolution::for_v_box(512, 10.0)).unwrap();
    let b =
        ShearProfile::from_spec(SMOOTH_BUMP, NU, ProfileResolution::for_v_box(1024, 10.0)).unwrap();
    let ga = greens_frequency_bounds(&a, 1, 2.0).unwrap();
    let gb = greens_frequency_bounds(&b, 1, 2.0).unwrap();
    assert!((ga.c1 - 2.0).abs() < 0.15 && (gb.c1 - 2.0).abs() < 0.15);
    assert!(gb.c2.is_finite() && gb.c2 > 0.0);
    assert!((ga.c2 - gb.c2).abs() <= 0.2 * gb.c2, "{ga:?} {gb:?}");
}

#[test]
fn couette_probe_ratio_is_one() {
    let p = ShearProfile::couette(NU, ProfileResolution::for_v_box(128, 10.0)).unwrap();
    let one = Array1::ones(128);
    let r =
        elliptic_estimate_probe(&one, &p, 2, 1.5, MTag::One, ProbeTarget::Lap0Inv, 8, 1).unwrap();
    assert!((r - 1.0).abs() < 1e-12);
}

#[test]
fn bump_probe_ratio_is_bounded_and_resolution_stable() {
    let ratio = |n: usize| {
        let p = ShearProfile::from_spec(SMOOTH_BUMP, NU, ProfileResolution::for_v_box(n, 10.0))
            .unwrap();
        let c = p.coef_b.mapv(|b| b * b);
        elliptic_estimate_probe(&c, &p, 1, 0.0, MTag::One, ProbeTarget::Lap0Inv, 64, 11).unwrap()
    };
    let (a, b) = (ratio(256), ratio(512));
    assert!(a.is_finite() && a < 10.0, "{a}");
    assert!((a - b).abs() <= 0.2 * b, "{a} {b}");
}

#[test]
fn difference_probe_vanishes_monotonically_as_nu_t_decreases() {
    let p = bump(128);
    let c = Array1::ones(128);
    let r: Vec<f64> = [1e-4, 1e-3, 1e-2]
        .iter()
        .map(|nt| {
            elliptic_estimate_probe(
                &c,
                &p,
                1,
                nt / NU,
                MTag::InvGrad,
                ProbeTarget::Difference,
                16,
                3,
            )
            .unwrap()
        })
        .collect();
    assert!(r[0] < r[1] && r[1] < r[2], "{r:?}");
    assert!(r[0] < 1e-2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn all_kinds_agree_on_couette(k in 1i64..12, t in 0.0f64..20.0, seed in 0u64..1000) {
        let p = ShearProfile::couette(NU, ProfileResolution::for_v_box(64, 8.0)).unwrap();
        let b = rhs(64, seed);
        let flat = solve(&EllipticOperatorSpec::new(Kind::LapL, &p, t, k), &b, Method::Direct).unwrap().x;
        for kind in [Kind::LapT, Kind::LapTilde, Kind::Lap0] {
            let x = solve(&EllipticOperatorSpec::new(kind, &p, t, k), &b, Method::Direct).unwrap().x;
            prop_assert!(rel(&x, &flat) < 1e-14);
        }
    }

    #[test]
    fn operators_are_linear(k in 1i64..8, seed in 0u64..1000, a in -3.0f64..3.0) {
        let p = bump(64);
        let sp = EllipticOperatorSpec::new(Kind::LapT, &p, 0.7, k);
        let x = rhs(64, seed);
        let y = rhs(64, seed + 1);
        let lhs = sp.apply(&(&x * Complex64::new(a, 0.0) + &y));
        let rhs_ = &sp.apply(&x) * Complex64::new(a, 0.0) + sp.apply(&y);
        prop_assert!(rel(&lhs, &rhs_) < 1e-12);
    }
}
