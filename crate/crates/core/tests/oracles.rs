use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shearlab::grid::{Grid, SpectralField};
use shearlab::oracles::*;

fn band_limited(grid: &Grid, kmax: i64, mmax: i64, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = SpectralField::zeros(grid);
    for k in -kmax..=kmax {
        for m in -mmax..=mmax {
            if k == 0 && m == 0 {
                continue;
            }
            let c = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            f.set_coeff(k, m, c);
        }
    }
    f
}

#[test]
fn decay_bound_holds_with_c2_delta_eighth() {
    let grid = Grid::new(32, 64, 8.0).unwrap();
    let f = band_limited(&grid, 15, 31, 1);
    let times: Vec<f64> = (0..400).map(|i| i as f64 * 0.25).collect();
    for nu in [1e-2, 1e-3, 1e-4] {
        let sol = PassiveScalarSolution::new(f.clone(), nu).unwrap();
        let times: Vec<f64> = times.iter().map(|t| t / nu.cbrt() / 10.0).collect();
        assert!(sol.decay_bound_ratio(&times, 0.125) <= 2.0);
    }
}

#[test]
fn time_integral_is_bounded_by_inviscid_quantity() {
    let grid = Grid::new(16, 32, 6.0).unwrap();
    let f = band_limited(&grid, 3, 6, 2);
    let bound: f64 = std::f64::consts::PI
        * f.coeffs
            .indexed_iter()
            .filter(|((i, _), _)| *i != 0)
            .map(|((i, _), c)| c.norm_sqr() / grid.k(i).powi(2))
            .sum::<f64>();
    let times: Vec<f64> = (0..=400).map(|i| i as f64 * 5.0).collect();
    for nu in [1e-2, 1e-4, 1e-6] {
        let sol = PassiveScalarSolution::new(f.clone(), nu).unwrap();
        let rep = damping_functionals(&sol, &times).unwrap();
        assert!(
            rep.integral > 0.0 && rep.integral <= bound,
            "nu={nu}: {} vs {bound}",
            rep.integral
        );
    }
}

#[test]
fn hminus1_decays_like_inverse_time_at_tiny_viscosity() {
    let grid = Grid::new(16, 32, 6.0).unwrap();
    let f = band_limited(&grid, 1, 2, 3);
    let sol = PassiveScalarSolution::new(f, 1e-6).unwrap();
    let times: Vec<f64> = (0..=50)
        .map(|i| 10.0 * 10f64.powf(i as f64 / 50.0))
        .collect();
    let rep = damping_functionals(&sol, &times).unwrap();
    let fit = hminus1_decay_fit(&rep, 10.0, 100.0).unwrap();
    assert!((fit.slope + 1.0).abs() <= 0.1, "slope {}", fit.slope);
}

#[test]
fn zero_mode_only_data_has_no_hminus1_content() {
    let grid = Grid::new(8, 16, 4.0).unwrap();
    let mut f = SpectralField::zeros(&grid);
    f.set_coeff(0, 3, Complex64::new(1.0, 0.0));
    let sol = PassiveScalarSolution::new(f, 1e-3).unwrap();
    assert_eq!(sol.hminus1_sqr(5.0), 0.0);
    let e = sol.exact_solution(2.0).coeff(0, 3);
    let eta = std::f64::consts::PI / 4.0 * 3.0;
    assert!((e.re - (-1e-3 * eta * eta * 2.0).exp()).abs() < 1e-15);
}

proptest! {
    #[test]
    fn evolution_is_a_semigroup(k in -6i64..=6, m in -12i64..=12, s in 0.0f64..30.0, t in 0.0f64..30.0) {
        let kf = k as f64;
        let eta = m as f64 * 0.5;
        let whole = dissipation_exponent(kf, eta, s + t);
        let split = dissipation_exponent(kf, eta, s) + dissipation_exponent(kf, eta - kf * s, t);
        prop_assert!((whole - split).abs() <= 1e-9 * whole.max(1.0));
    }

    #[test]
    fn modes_never_grow(k in -6i64..=6, m in -12i64..=12, t in 0.0f64..100.0) {
        prop_assert!(dissipation_exponent(k as f64, m as f64 * 0.3, t) >= -1e-12);
    }
}
