use ndarray::Array1;
use num_complex::Complex64;
use shearlab::grid::SpectralField;
use shearlab::oracles::PassiveScalarSolution;
use shearlab::simulator::*;

const SMOOTH_BUMP: &str = "gevrey-bump:0.2,3.0";

fn config(profile: &str) -> SimulationConfig {
    SimulationConfig {
        profile: profile.into(),
        nu: 1e-2,
        epsilon_amp: 1.0,
        n_z: 8,
        n_v: 128,
        l_v: Some(10.0),
        dt: 0.05,
        t_end: Some(2.0),
        ..Default::default()
    }
}

fn advance(sim: &mut Simulation, t_end: f64, dt: f64) {
    let n = (t_end / dt).round() as usize;
    for _ in 0..n {
        let h = sim.step(dt).unwrap();
        assert!((h - dt).abs() < 1e-14, "step limited to {h}");
    }
}

fn retained_leakage(f: &SpectralField) -> f64 {
    let g = f.grid;
    f.coeffs
        .indexed_iter()
        .filter(|((i, j), _)| !g.retained(*i, *j))
        .map(|(_, c)| c.norm())
        .fold(0.0, f64::max)
}

#[test]
fn couette_linear_mode_matches_exact_decay() {
    let c = SimulationConfig {
        nonlinear: false,
        t_end: Some(6.0),
        ..config("couette")
    };
    let p = c.build_profile().unwrap();
    let g = c.grid(&p).unwrap();
    let mut w = SpectralField::zeros(&g);
    w.set_coeff(1, 3, Complex64::new(0.3, -0.1));
    w.set_coeff(-1, -3, Complex64::new(0.3, 0.1));
    let exact = PassiveScalarSolution::new(w.clone(), c.nu)
        .unwrap()
        .exact_solution(6.0);
    let mut sim = Simulation::with_initial(c, w, Array1::zeros(g.n_v)).unwrap();
    advance(&mut sim, 6.0, 0.05);
    let err = sim.omega().sub(&exact).max_abs();
    assert!(err <= 1e-8, "{err}");
}

#[test]
fn couette_nonlinear_run_conserves_the_mean_and_stays_dealiased() {
    let c = config("couette");
    let mut sim = Simulation::new(c).unwrap();
    let mean0 = sim.omega().coeff(0, 0);
    advance(&mut sim, 2.0, 0.05);
    let w = sim.omega();
    assert!(
        (w.coeff(0, 0) - mean0).norm() <= 1e-14,
        "{}",
        (w.coeff(0, 0) - mean0).norm()
    );
    assert!(retained_leakage(&w) <= 1e-12);
    assert!(w.hermitian_defect() <= 1e-12);
}

#[test]
fn split_and_monolithic_agree_on_a_bump() {
    let base = SimulationConfig {
        t_end: Some(10.0),
        epsilon_amp: 0.5,
        ..config(SMOOTH_BUMP)
    };
    let mono = Simulation::new(base.clone());
    let mut mono = mono.unwrap();
    let mut split = Simulation::new(SimulationConfig {
        split_mode: SplitMode::Split,
        ..base
    })
    .unwrap();
    advance(&mut mono, 10.0, 0.05);
    advance(&mut split, 10.0, 0.05);
    let a = mono.omega();
    let diff = a.sub(&split.omega()).l2_norm() / a.l2_norm();
    assert!(diff <= 1e-4, "{diff}");
    assert!(split.linear_profile().l2_norm() > 0.0);
    assert!(retained_leakage(&split.omega_star()) <= 1e-12);
}

#[test]
fn time_stepping_is_second_order() {
    let c = SimulationConfig {
        epsilon_amp: 20.0,
        ..config(SMOOTH_BUMP)
    };
    let run = |dt: f64| {
        let mut sim = Simulation::new(c.clone()).unwrap();
        advance(&mut sim, 2.0, dt);
        (sim.omega(), sim.zero_mode_velocity())
    };
    let (w1, u1) = run(0.05);
    let (w2, u2) = run(0.025);
    let (w3, u3) = run(0.0125);
    let e1 = w1.sub(&w2).l2_norm() + (&u1 - &u2).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let e2 = w2.sub(&w3).l2_norm() + (&u2 - &u3).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let order = (e1 / e2).log2();
    assert!(
        order > 1.8 && order < 2.3,
        "observed order {order} ({e1:e}, {e2:e})"
    );
}

/// Centred difference of the energy against the budget sum, at two step sizes.
fn budget_defect(c: &SimulationConfig, dt: f64, t: f64) -> f64 {
    let mut sim = Simulation::new(c.clone()).unwrap();
    advance(&mut sim, t - dt, dt);
    let e_before = sim.record().unwrap().budget.energy;
    sim.step(dt).unwrap();
    let mid = sim.record().unwrap();
    sim.step(dt).unwrap();
    let e_after = sim.record().unwrap().budget.energy;
    let rate = (e_after - e_before) / (2.0 * dt);
    (rate - mid.budget.sum()).abs() / mid.budget.d.abs()
}

#[test]
fn energy_budget_closes_at_second_order() {
    for mode in [SplitMode::Split, SplitMode::Monolithic] {
        let c = SimulationConfig {
            split_mode: mode,
            epsilon_amp: 20.0,
            ..config(SMOOTH_BUMP)
        };
        let d1 = budget_defect(&c, 0.01, 1.0);
        let d2 = budget_defect(&c, 0.005, 1.0);
        let factor = d1 / d2;
        assert!(d2 < 1e-3, "{mode:?}: relative defect {d2:e}");
        assert!(
            factor > 3.0 && factor < 5.5,
            "{mode:?}: closure factor {factor} ({d1:e}, {d2:e})"
        );
    }
}

#[test]
fn couette_budget_has_no_profile_terms() {
    let c = SimulationConfig {
        split_mode: SplitMode::Split,
        ..config("couette")
    };
    let mut sim = Simulation::new(c).unwrap();
    advance(&mut sim, 0.5, 0.05);
    let b = sim.record().unwrap().budget;
    assert_eq!((b.l1, b.l2, b.l3, b.l0), (0.0, 0.0, 0.0, 0.0));
    assert_eq!(sim.linear_profile().l2_norm(), 0.0);
}

#[test]
fn zero_data_run_is_identically_zero() {
    let c = SimulationConfig {
        epsilon_amp: 0.0,
        samples: 5,
        ..config(SMOOTH_BUMP)
    };
    let rep = run(&c).unwrap();
    assert_eq!(rep.verdict, Verdict::Stable);
    for r in &rep.records {
        assert_eq!(r.norms, Norms::default());
        assert_eq!(r.budget.sum(), 0.0);
        assert_eq!(r.theorem.omega_hs, 0.0);
        assert_eq!(r.u1_neq + r.u2, 0.0);
    }
}

#[test]
fn seeds_change_the_data_and_runs_are_reproducible() {
    let c = SimulationConfig {
        samples: 4,
        t_end: Some(1.0),
        ..config("couette")
    };
    let a = run(&c).unwrap();
    let b = run(&c).unwrap();
    assert_eq!(a.records, b.records);
    let other = run(&SimulationConfig { seed: 7, ..c }).unwrap();
    assert_ne!(a.records[0].norms, other.records[0].norms);
}

#[test]
fn small_data_is_stable_and_large_data_is_not() {
    let c = SimulationConfig {
        t_end: Some(5.0),
        samples: 50,
        ..config("couette")
    };
    let small = run(&SimulationConfig {
        epsilon_amp: 1e-3,
        ..c.clone()
    })
    .unwrap();
    assert_eq!(small.verdict, Verdict::Stable);
    let worst = small
        .bootstrap
        .iter()
        .map(|b| b.worst())
        .fold(0.0, f64::max);
    assert!(worst < 1.0, "{worst}");
    let large = run(&SimulationConfig {
        epsilon_amp: 3e3,
        stop_on_exceed: true,
        ..c
    })
    .unwrap();
    assert_ne!(large.verdict, Verdict::Stable);
}

#[test]
fn checkpoint_restart_continues_the_run() {
    let c = SimulationConfig {
        split_mode: SplitMode::Split,
        ..config(SMOOTH_BUMP)
    };
    let mut sim = Simulation::new(c.clone()).unwrap();
    advance(&mut sim, 0.5, 0.05);
    let mut buf = Vec::new();
    sim.write_checkpoint(&mut buf).unwrap();
    let back = Simulation::restore(c, &mut buf.as_slice(), sim.t).unwrap();
    assert_eq!(back.omega().coeffs, sim.omega().coeffs);
    assert_eq!(back.linear_profile().coeffs, sim.linear_profile().coeffs);
    assert_eq!(back.zero_mode_velocity(), sim.zero_mode_velocity());
    let strip = |mut r: DiagnosticsRecord| {
        r.theorem.velocity_integral = 0.0;
        r
    };
    assert_eq!(strip(back.record().unwrap()), strip(sim.record().unwrap()));
}

#[test]
fn report_writes_one_csv_row_per_record() {
    let c = SimulationConfig {
        samples: 3,
        t_end: Some(0.3),
        ..config("couette")
    };
    let rep = run(&c).unwrap();
    let mut out = Vec::new();
    rep.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), rep.records.len() + 1);
    assert!(text.starts_with("t,a_star"));
}
