//! Named experiments built on the simulator and the Couette oracle.
//!
//! * [`sweep_threshold`] bisects the stable/unstable boundary in the initial amplitude for each
//!   viscosity and fits `log A* = beta log nu + c`.
//! * [`measure_enhanced_dissipation`] fits exponential decay rates of `||P_neq Omega||` on the
//!   window `[tau, 5 tau]`, `tau = (nu k^2)^{-1/3}`, and their scaling in `nu` and `k`.
//! * [`measure_inviscid_damping`] reports the `H^-1` time integral of the oracle across
//!   viscosities and the algebraic decay of the simulated velocity.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, SpectralField};
use crate::numerics::{fit_line, t_quantile_975, LineFit};
use crate::oracles::{damping_functionals, PassiveScalarSolution};
use crate::simulator::{run, Simulation, SimulationConfig, SplitMode, Verdict};

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// `t_{0.975} * stderr` of the slope, or infinity when the fit has no residual degrees of freedom.
pub fn slope_half_width(fit: &LineFit, n: usize) -> f64 {
    if n <= 2 {
        f64::INFINITY
    } else {
        t_quantile_975(n - 2) * fit.slope_stderr
    }
}

// ---- threshold sweep ----------------------------------------------------------------------

/// A threshold sweep. Amplitudes are in units of `nu^{1/3}`, the unit of `epsilon_amp`.
///
/// ```toml
/// nu_list = [1e-2, 1e-3, 1e-4]
/// amplitudes = [1.0, 10.0, 100.0, 1000.0]
/// bisection_steps = 6
/// profiles = ["couette"]
/// repetitions = 2
/// [template]
/// n_z = 8
/// n_v = 2048
/// l_v = 8.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepPlan {
    pub nu_list: Vec<f64>,
    /// Ascending scan; the boundary is bisected inside the first stable/unstable bracket.
    pub amplitudes: Vec<f64>,
    pub bisection_steps: usize,
    pub profiles: Vec<String>,
    /// Seeds `template.seed + r` for `r < repetitions`.
    pub repetitions: usize,
    pub template: SimulationConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for SweepPlan {
    fn default() -> Self {
        SweepPlan {
            nu_list: vec![1e-2, 1e-3, 1e-4],
            amplitudes: vec![1.0, 10.0, 100.0, 1000.0],
            bisection_steps: 6,
            profiles: vec!["couette".into()],
            repetitions: 1,
            template: SimulationConfig {
                n_z: 8,
                n_v: 2048,
                l_v: Some(8.0),
                stop_on_exceed: true,
                samples: 100,
                ..Default::default()
            },
            output_dir: None,
        }
    }
}

impl SweepPlan {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let plan: SweepPlan = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.nu_list.is_empty() || self.nu_list.iter().any(|&n| !(n > 0.0)) {
            return bad("nu_list must hold positive viscosities");
        }
        if self.amplitudes.is_empty()
            || self.amplitudes.iter().any(|&a| !(a > 0.0))
            || self.amplitudes.windows(2).any(|w| w[1] <= w[0])
        {
            return bad("amplitudes must be positive and strictly increasing");
        }
        if self.profiles.is_empty() || self.repetitions == 0 {
            return bad("a sweep needs at least one profile and one repetition");
        }
        Ok(())
    }

    fn config(&self, profile: &str, nu: f64, seed: u64, amp: f64) -> SimulationConfig {
        SimulationConfig {
            profile: profile.into(),
            nu,
            seed,
            epsilon_amp: amp,
            t_end: self.template.t_end,
            ..self.template.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    pub profile: String,
    pub nu: f64,
    pub seed: u64,
    pub amplitude: f64,
    pub verdict: Verdict,
    pub bisection: bool,
}

/// Outcome of one `(profile, nu, seed)` chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryRow {
    pub profile: String,
    pub nu: f64,
    pub seed: u64,
    /// Boundary in units of `nu^{1/3}`; `None` when the scan has no stable/unstable bracket.
    pub epsilon_star: Option<f64>,
    /// `epsilon_star * nu^{1/3}`.
    pub amplitude_star: Option<f64>,
    /// The amplitude scan crosses from stable to unstable at most once.
    pub monotone: bool,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub points: Vec<PhasePoint>,
    pub boundaries: Vec<BoundaryRow>,
    /// Fit of `log A*` against `log nu`.
    pub fit: Option<LineFit>,
    pub half_width: f64,
    /// Set when no chain found an unstable amplitude.
    pub no_threshold: bool,
}

impl SweepReport {
    pub fn monotone_fraction(&self) -> f64 {
        if self.boundaries.is_empty() {
            return 1.0;
        }
        self.boundaries.iter().filter(|b| b.monotone).count() as f64 / self.boundaries.len() as f64
    }

    pub fn summary(&self) -> String {
        if self.no_threshold {
            return "no threshold".into();
        }
        match self.fit {
            Some(f) => format!(
                "beta = {:.4} +- {:.4} over {} boundaries; monotone chains {:.1}%",
                f.slope,
                self.half_width,
                self.boundaries
                    .iter()
                    .filter(|b| b.amplitude_star.is_some())
                    .count(),
                100.0 * self.monotone_fraction()
            ),
            None => "boundary not bracketed at enough viscosities for a fit".into(),
        }
    }

    pub fn write_phase_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "profile",
            "nu",
            "seed",
            "epsilon_amp",
            "verdict",
            "bisection",
        ])
        .map_err(csv_err)?;
        for p in &self.points {
            out.write_record([
                p.profile.clone(),
                format!("{:e}", p.nu),
                p.seed.to_string(),
                format!("{:.10e}", p.amplitude),
                p.verdict.to_string(),
                p.bisection.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_boundary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "profile",
            "nu",
            "seed",
            "epsilon_star",
            "amplitude_star",
            "monotone",
            "note",
        ])
        .map_err(csv_err)?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.10e}")).unwrap_or_default();
        for b in &self.boundaries {
            out.write_record([
                b.profile.clone(),
                format!("{:e}", b.nu),
                b.seed.to_string(),
                opt(b.epsilon_star),
                opt(b.amplitude_star),
                b.monotone.to_string(),
                b.note.clone(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn stable(config: &SimulationConfig) -> Result<Verdict> {
    Ok(run(config)?.verdict)
}

fn sweep_chain(
    plan: &SweepPlan,
    profile: &str,
    nu: f64,
    seed: u64,
) -> Result<(Vec<PhasePoint>, BoundaryRow)> {
    let mut points = Vec::new();
    let mut eval = |amp: f64, bisection: bool| -> Result<bool> {
        let verdict = stable(&plan.config(profile, nu, seed, amp))?;
        points.push(PhasePoint {
            profile: profile.into(),
            nu,
            seed,
            amplitude: amp,
            verdict,
            bisection,
        });
        Ok(verdict == Verdict::Stable)
    };
    let scan: Vec<bool> = plan
        .amplitudes
        .iter()
        .map(|&a| eval(a, false))
        .collect::<Result<_>>()?;
    let monotone = scan.windows(2).all(|w| w[0] || !w[1]);
    let mut row = BoundaryRow {
        profile: profile.into(),
        nu,
        seed,
        epsilon_star: None,
        amplitude_star: None,
        monotone,
        note: String::new(),
    };
    let Some(first_unstable) = scan.iter().position(|s| !s) else {
        row.note = "stable over the whole scan".into();
        return Ok((points, row));
    };
    if first_unstable == 0 {
        row.note = "unstable over the whole scan".into();
        return Ok((points, row));
    }
    let (mut lo, mut hi) = (
        plan.amplitudes[first_unstable - 1],
        plan.amplitudes[first_unstable],
    );
    for _ in 0..plan.bisection_steps {
        let mid = (lo * hi).sqrt();
        if eval(mid, true)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eps = (lo * hi).sqrt();
    row.epsilon_star = Some(eps);
    row.amplitude_star = Some(eps * nu.cbrt());
    if !monotone {
        row.note = "non-monotone verdicts".into();
    }
    Ok((points, row))
}

/// Runs every chain of the plan and fits the boundary exponent.
pub fn sweep_threshold(plan: &SweepPlan) -> Result<SweepReport> {
    plan.validate()?;
    let mut chains = Vec::new();
    for p in &plan.profiles {
        for &nu in &plan.nu_list {
            for r in 0..plan.repetitions {
                chains.push((p.clone(), nu, plan.template.seed + r as u64));
            }
        }
    }
    let results: Vec<(Vec<PhasePoint>, BoundaryRow)> = chains
        .par_iter()
        .map(|(p, nu, seed)| sweep_chain(plan, p, *nu, *seed))
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    let mut boundaries = Vec::new();
    for (p, b) in results {
        points.extend(p);
        boundaries.push(b);
    }
    let no_threshold = points.iter().all(|p| p.verdict == Verdict::Stable);
    let (lx, ly): (Vec<f64>, Vec<f64>) = boundaries
        .iter()
        .filter_map(|b| b.amplitude_star.map(|a| (b.nu.ln(), a.ln())))
        .unzip();
    let fit = fit_line(&lx, &ly).ok();
    let half_width = fit
        .as_ref()
        .map(|f| slope_half_width(f, lx.len()))
        .unwrap_or(f64::INFINITY);
    let report = SweepReport {
        points,
        boundaries,
        fit,
        half_width,
        no_threshold,
    };
    if let Some(dir) = &plan.output_dir {
        std::fs::create_dir_all(dir)?;
        report.write_phase_csv(std::fs::File::create(dir.join("phase.csv"))?)?;
        report.write_boundary_csv(std::fs::File::create(dir.join("boundary.csv"))?)?;
    }
    Ok(report)
}

// ---- enhanced dissipation -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DissipationPlan {
    pub profile: String,
    pub nu_list: Vec<f64>,
    pub k_list: Vec<i64>,
    /// Closed-form decay; only valid for Couette.
    pub oracle: bool,
    pub n_v: usize,
    pub l_v: Option<f64>,
    pub dt: f64,
    /// Sample times inside the fit window.
    pub samples: usize,
}

impl Default for DissipationPlan {
    fn default() -> Self {
        DissipationPlan {
            profile: "couette".into(),
            nu_list: vec![1e-3, 10f64.powf(-3.5), 1e-4],
            k_list: vec![1],
            oracle: true,
            n_v: 1024,
            l_v: None,
            dt: 0.05,
            samples: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub nu: f64,
    pub k: i64,
    pub lambda: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

#[derive(Debug, Clone)]
pub struct DissipationReport {
    pub rows: Vec<RateRow>,
    /// `log lambda` against `log nu` for the smallest `k` of the plan.
    pub nu_fit: Option<LineFit>,
    /// `(k, lambda(k) / lambda(k_min), (k / k_min)^{2/3})` at the smallest viscosity.
    pub k_ratios: Vec<(i64, f64, f64)>,
}

impl DissipationReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["nu", "k", "lambda", "t_lo", "t_hi"])
            .map_err(csv_err)?;
        for r in &self.rows {
            out.write_record([
                format!("{:e}", r.nu),
                r.k.to_string(),
                format!("{:.10e}", r.lambda),
                format!("{:.6e}", r.t_lo),
                format!("{:.6e}", r.t_hi),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Start of the fit window, `(nu k^2)^{-1/3}`.
pub fn dissipation_time(nu: f64, k: i64) -> f64 {
    (nu * (k * k) as f64).powf(-1.0 / 3.0)
}

/// Exponential rate `-d log y / d t` by least squares.
pub fn decay_rate(times: &[f64], values: &[f64]) -> Result<f64> {
    let (t, l): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .unzip();
    Ok(-fit_line(&t, &l)?.slope)
}

fn window(nu: f64, k: i64, samples: usize) -> Vec<f64> {
    let t0 = dissipation_time(nu, k);
    let n = samples.max(2);
    (0..n)
        .map(|i| t0 * (1.0 + 4.0 * i as f64 / (n - 1) as f64))
        .collect()
}

/// Data concentrated on the rows `+-k`, Gaussian in `eta`.
fn row_data(grid: &Grid, k: i64) -> SpectralField {
    let mut f = SpectralField::zeros(grid);
    let m_max = (grid.n_v / 2) as i64 - 1;
    for m in -m_max..=m_max {
        let eta = std::f64::consts::PI * m as f64 / grid.l_v;
        let c = Complex64::new((-0.5 * eta * eta).exp(), 0.0);
        if c.re < 1e-300 {
            continue;
        }
        f.set_coeff(k, m, c);
        f.set_coeff(-k, -m, c.conj());
    }
    f.dealias()
}

fn oracle_rate(nu: f64, k: i64, samples: usize) -> Result<RateRow> {
    let grid = Grid::new(
        2 * (k.unsigned_abs() as usize + 1).next_power_of_two().max(4),
        64,
        10.0,
    )?;
    let mut f = SpectralField::zeros(&grid);
    f.set_coeff(k, 0, Complex64::new(1.0, 0.0));
    f.set_coeff(-k, 0, Complex64::new(1.0, 0.0));
    let sol = PassiveScalarSolution::new(f, nu)?;
    let times = window(nu, k, samples);
    let vals: Vec<f64> = times
        .iter()
        .map(|&t| sol.exact_solution(t).pneq().l2_norm())
        .collect();
    Ok(RateRow {
        nu,
        k,
        lambda: decay_rate(&times, &vals)?,
        t_lo: times[0],
        t_hi: *times.last().unwrap(),
    })
}

fn simulated_rate(plan: &DissipationPlan, nu: f64, k: i64) -> Result<RateRow> {
    let times = window(nu, k, plan.samples);
    let t_hi = *times.last().unwrap();
    let n_z = (4 * k.unsigned_abs() as usize).next_power_of_two().max(4);
    let config = SimulationConfig {
        profile: plan.profile.clone(),
        nu,
        n_z,
        n_v: plan.n_v,
        l_v: plan.l_v,
        dt: plan.dt,
        t_end: Some(t_hi),
        nonlinear: false,
        split_mode: SplitMode::Monolithic,
        ..Default::default()
    };
    let profile = config.build_profile()?;
    let grid = config.grid(&profile)?;
    let data = row_data(&grid, k);
    let mut sim = Simulation::with_initial(config, data, Array1::zeros(grid.n_v))?;
    let mut vals = Vec::with_capacity(times.len());
    for &t in &times {
        while sim.t < t * (1.0 - 1e-12) {
            sim.step(plan.dt.min(t - sim.t))?;
        }
        vals.push(sim.omega().pneq().l2_norm());
    }
    Ok(RateRow {
        nu,
        k,
        lambda: decay_rate(&times, &vals)?,
        t_lo: times[0],
        t_hi,
    })
}

pub fn measure_enhanced_dissipation(plan: &DissipationPlan) -> Result<DissipationReport> {
    if plan.nu_list.is_empty() || plan.k_list.is_empty() || plan.k_list.iter().any(|&k| k == 0) {
        return Err(Error::InvalidParameter(
            "need viscosities and nonzero wavenumbers".into(),
        ));
    }
    if plan.oracle && plan.profile != "couette" {
        return Err(Error::InvalidParameter(
            "the closed-form decay exists only for Couette".into(),
        ));
    }
    let jobs: Vec<(f64, i64)> = plan
        .nu_list
        .iter()
        .flat_map(|&nu| plan.k_list.iter().map(move |&k| (nu, k)))
        .collect();
    let rows: Vec<RateRow> = jobs
        .par_iter()
        .map(|&(nu, k)| {
            if plan.oracle {
                oracle_rate(nu, k, plan.samples)
            } else {
                simulated_rate(plan, nu, k)
            }
        })
        .collect::<Result<_>>()?;
    let k0 = *plan.k_list.iter().min_by_key(|k| k.abs()).unwrap();
    let (lx, ly): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.k == k0 && r.lambda > 0.0)
        .map(|r| (r.nu.ln(), r.lambda.ln()))
        .unzip();
    let nu_fit = fit_line(&lx, &ly).ok();
    let nu_min = plan.nu_list.iter().cloned().fold(f64::INFINITY, f64::min);
    let at = |k: i64| {
        rows.iter()
            .find(|r| r.k == k && r.nu == nu_min)
            .map(|r| r.lambda)
    };
    let base = at(k0).unwrap_or(f64::NAN);
    let k_ratios = plan
        .k_list
        .iter()
        .map(|&k| {
            (
                k,
                at(k).unwrap_or(f64::NAN) / base,
                (k as f64 / k0 as f64).abs().powf(2.0 / 3.0),
            )
        })
        .collect();
    Ok(DissipationReport {
        rows,
        nu_fit,
        k_ratios,
    })
}

// ---- inviscid damping ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DampingPlan {
    /// Viscosities for the oracle time integral.
    pub oracle_nu_list: Vec<f64>,
    /// The integral runs to `horizon * nu^{-1/3}`.
    pub horizon: f64,
    /// Linear run for the pointwise velocity decay; its `t_end` defaults to `nu^{-1/3}`.
    pub simulation: SimulationConfig,
    pub fit_start: f64,
    /// Number of log-spaced samples of the velocity.
    pub samples: usize,
}

impl Default for DampingPlan {
    fn default() -> Self {
        DampingPlan {
            oracle_nu_list: vec![1e-2, 1e-4, 1e-6],
            horizon: 10.0,
            simulation: SimulationConfig {
                nu: 1e-6,
                nonlinear: false,
                n_z: 4,
                n_v: 1024,
                l_v: Some(10.0),
                data_k_max: Some(1),
                ..Default::default()
            },
            fit_start: 10.0,
            samples: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VelocitySample {
    pub t: f64,
    pub u1: f64,
    pub u2: f64,
}

#[derive(Debug, Clone)]
pub struct DampingReport {
    /// `(nu, int ||P_neq f||^2_{H^-1} dt)`.
    pub oracle: Vec<(f64, f64)>,
    /// `(max - min) / min` of the oracle integrals.
    pub oracle_spread: f64,
    pub velocity: Vec<VelocitySample>,
    /// Log-log fits on `[fit_start, t_end]` of `||P_neq U^1||`, `||U^2||` and `||P_neq U||`.
    pub u1_fit: Option<LineFit>,
    pub u2_fit: Option<LineFit>,
    pub velocity_fit: Option<LineFit>,
    /// `int ||P_neq U||^2_{H^s}` over the run.
    pub velocity_integral: f64,
}

impl DampingReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "u1_neq", "u2"]).map_err(csv_err)?;
        for v in &self.velocity {
            out.write_record([
                format!("{:.6e}", v.t),
                format!("{:.10e}", v.u1),
                format!("{:.10e}", v.u2),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Oracle data: the nonzero band of `data` from the simulation config, or a unit `(1, 0)` mode
/// when that band is empty.
fn oracle_data(config: &SimulationConfig, nu: f64) -> Result<SpectralField> {
    let c = SimulationConfig {
        nu,
        ..config.clone()
    };
    let profile = c.build_profile()?;
    let grid = c.grid(&profile)?;
    let (w, _) = crate::simulator::init_data(&c, &profile, &grid)?;
    Ok(w.pneq())
}

fn loglog_fit(
    samples: &[VelocitySample],
    t_lo: f64,
    pick: impl Fn(&VelocitySample) -> f64,
) -> Option<LineFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter(|s| s.t >= t_lo && pick(s) > 0.0)
        .map(|s| (s.t.ln(), pick(s).ln()))
        .unzip();
    fit_line(&x, &y).ok()
}

pub fn measure_inviscid_damping(plan: &DampingPlan) -> Result<DampingReport> {
    let mut oracle = Vec::new();
    for &nu in &plan.oracle_nu_list {
        // Unit-size data so the integrals are comparable across viscosities.
        let data = oracle_data(
            &SimulationConfig {
                epsilon_amp: 1.0,
                ..plan.simulation.clone()
            },
            1.0,
        )?;
        let sol = PassiveScalarSolution::new(data, nu)?;
        let t_end = plan.horizon * nu.powf(-1.0 / 3.0);
        let rep = damping_functionals(&sol, &[0.0, t_end])?;
        oracle.push((nu, rep.integral));
    }
    let (lo, hi) = oracle
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), (_, v)| {
            (lo.min(*v), hi.max(*v))
        });
    let oracle_spread = if oracle.is_empty() || hi == 0.0 {
        0.0
    } else {
        (hi - lo) / lo
    };

    let nu = plan.simulation.nu;
    let t_end = plan.simulation.t_end.unwrap_or(nu.powf(-1.0 / 3.0));
    let config = SimulationConfig {
        t_end: Some(t_end),
        ..plan.simulation.clone()
    };
    let dt = config.dt;
    let mut sim = Simulation::new(config)?;
    let n = plan.samples.max(2);
    let t_first = plan.fit_start.min(t_end).max(dt) / 4.0;
    let times: Vec<f64> = (0..n)
        .map(|i| t_first * (t_end / t_first).powf(i as f64 / (n - 1) as f64))
        .collect();
    let mut velocity = Vec::with_capacity(n);
    let mut velocity_integral = 0.0;
    for &t in &times {
        while sim.t < t * (1.0 - 1e-12) {
            sim.step(dt.min(t - sim.t))?;
        }
        let (u1, u2) = sim.velocity_norms()?;
        velocity.push(VelocitySample { t: sim.t, u1, u2 });
    }
    if let Ok(r) = sim.record() {
        velocity_integral = r.theorem.velocity_integral;
    }
    let u1_fit = loglog_fit(&velocity, plan.fit_start, |s| s.u1);
    let u2_fit = loglog_fit(&velocity, plan.fit_start, |s| s.u2);
    let velocity_fit = loglog_fit(&velocity, plan.fit_start, |s| s.u1.hypot(s.u2));
    Ok(DampingReport {
        oracle,
        oracle_spread,
        velocity,
        u1_fit,
        u2_fit,
        velocity_fit,
        velocity_integral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_rate_recovers_an_exponential() {
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let v: Vec<f64> = t.iter().map(|x| 3.0 * (-0.25 * x).exp()).collect();
        assert!((decay_rate(&t, &v).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn sweep_plan_rejects_unsorted_amplitudes() {
        let plan = SweepPlan {
            amplitudes: vec![2.0, 1.0],
            ..Default::default()
        };
        assert!(plan.validate().is_err());
        let text = toml::to_string(&SweepPlan::default()).unwrap();
        assert_eq!(
            SweepPlan::from_toml_str(&text).unwrap(),
            SweepPlan::default()
        );
    }

    #[test]
    fn dissipation_time_is_the_unit_window_for_k_one() {
        assert!((dissipation_time(1e-3, 1) - 10.0).abs() < 1e-9);
    }
}
