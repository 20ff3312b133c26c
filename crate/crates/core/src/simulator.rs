//! Nonlinear perturbation dynamics in the moving frame.
//!
//! The vorticity `Omega` and the zero-mode velocity `U = P0 U^1` evolve by
//!
//! ```text
//! d_t Omega = nu Lap~_t Omega + B' d_z Psi - (U + u1) d_z Omega - w D Omega
//! d_t U     = nu B^2 d_v^2 U - P0 (u1 d_z u1 + w D u1)
//! ```
//!
//! with `D = d_v - t d_z`, `Psi = Lap_t^{-1} P_neq Omega`, `u1 = -B D Psi`, `w = B d_z Psi`.
//! In split mode `Omega = F + Omega*`, where `F` follows the linear-profile equation and
//! `Omega*` takes the remainder.
//!
//! Time stepping is integrating-factor AB2: `nu Lap_L` (and `nu d_v^2` for `U`) is propagated
//! exactly, all other terms are explicit and dealiased. The background `B(t)` is the exact heat
//! evolution, interpolated in time by cubic Lagrange polynomials between refreshed nodes.

use std::cell::RefCell;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elliptic::{zero_mode_velocity, Kind};
use crate::error::{Error, Result};
use crate::grid::{forward_1d, inverse_1d, signed_index, Grid, SpectralField, Transformer};
use crate::linear::{lap0_minus_lapl, lap_inverse, nonlocal_b0};
use crate::multipliers::{
    bracket, eval_zeta, m_jet, w_e_jet, w_i_jet, w_nu_jet, zeta_rate, MultiplierSpec, Regime,
    DEFAULT_DELTA, DEFAULT_K,
};
use crate::oracles::dissipation_exponent;
use crate::profile::{ProfileResolution, ProfileShape, ShearProfile};

type C = Complex64;
const I: C = C { re: 0.0, im: 1.0 };
const ZERO: C = C { re: 0.0, im: 0.0 };

/// Coefficient norm beyond which a run counts as blown up, relative to the initial data size.
const BLOWUP_FACTOR: f64 = 1e8;
/// Spacing of the profile refresh nodes in units of `nu t`.
const PROFILE_NODE_SPACING: f64 = 5e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Monolithic,
    Split,
}

/// Bootstrap multiples of the initial size; `2 c1` bounds the long-time weighted energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub short_energy: f64,
    pub short_u1: f64,
    pub long_zeta: f64,
    pub c1: f64,
    pub long_u1: f64,
    pub c_star: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            short_energy: 8.0,
            short_u1: 8.0,
            long_zeta: 16.0,
            c1: 4.0,
            long_u1: 8.0,
            c_star: 0.05,
        }
    }
}

/// Run parameters, read from TOML.
///
/// ```toml
/// profile = "gevrey-bump:0.2,1.0"
/// nu = 1e-3
/// epsilon_amp = 0.01
/// n_z = 8
/// n_v = 1024
/// dt = 0.05
/// split_mode = "split"
/// [thresholds]
/// c1 = 4.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub profile: String,
    pub nu: f64,
    pub s: f64,
    /// Initial data size in units of `nu^{1/3}`.
    pub epsilon_amp: f64,
    pub seed: u64,
    pub n_z: usize,
    pub n_v: usize,
    /// Half-width of the v-box; `8 / sigma0` when absent.
    pub l_v: Option<f64>,
    pub dealias: f64,
    pub dt: f64,
    /// Defaults to `min(5 nu^{-1/3}, c_star / nu)`.
    pub t_end: Option<f64>,
    pub split_mode: SplitMode,
    pub k_ghost: f64,
    pub delta: f64,
    pub nonlinear: bool,
    /// Keeps the `b''` terms `B' d_z Lap_t^{-1}` and `B0' d_z Lap0^{-1}`.
    pub nonlocal: bool,
    /// Largest `|k|` in the initial data; all retained modes when absent.
    pub data_k_max: Option<i64>,
    /// Approximate number of diagnostic rows.
    pub samples: usize,
    pub cfl_safety: f64,
    pub stop_on_exceed: bool,
    pub thresholds: Thresholds,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            profile: "couette".into(),
            nu: 1e-3,
            s: 2.0,
            epsilon_amp: 1e-2,
            seed: 0,
            n_z: 8,
            n_v: 1024,
            l_v: None,
            dealias: 2.0 / 3.0,
            dt: 0.05,
            t_end: None,
            split_mode: SplitMode::Monolithic,
            k_ghost: DEFAULT_K,
            delta: DEFAULT_DELTA,
            nonlinear: true,
            nonlocal: true,
            data_k_max: None,
            samples: 100,
            cfl_safety: 0.5,
            stop_on_exceed: false,
            thresholds: Thresholds::default(),
        }
    }
}

impl SimulationConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn t_end(&self) -> f64 {
        self.t_end.unwrap_or_else(|| {
            (5.0 * self.nu.powf(-1.0 / 3.0)).min(self.thresholds.c_star / self.nu)
        })
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.epsilon_amp >= 0.0) {
            return bad(format!(
                "epsilon_amp must be nonnegative, got {}",
                self.epsilon_amp
            ));
        }
        if !(self.t_end() > 0.0) {
            return bad(format!("t_end must be positive, got {}", self.t_end()));
        }
        if !(self.cfl_safety > 0.0) {
            return bad(format!(
                "cfl_safety must be positive, got {}",
                self.cfl_safety
            ));
        }
        Ok(())
    }

    /// The background shear on the v-box of the run.
    pub fn build_profile(&self) -> Result<ShearProfile> {
        let shape = ProfileShape::parse(&self.profile)?;
        let l_v = match self.l_v {
            Some(l) => l,
            None => {
                let probe = ShearProfile::new(
                    shape.clone(),
                    self.nu,
                    ProfileResolution::for_v_box(256, 10.0),
                    None,
                )?;
                8.0 / probe.sigma0
            }
        };
        ShearProfile::new(
            shape,
            self.nu,
            ProfileResolution::for_v_box(self.n_v, l_v),
            None,
        )
    }

    pub fn grid(&self, profile: &ShearProfile) -> Result<Grid> {
        Grid::with_dealias(self.n_z, self.n_v, profile.resolution.l_v, self.dealias)
    }

    pub fn multiplier(&self) -> Result<MultiplierSpec> {
        MultiplierSpec::new(self.nu, self.k_ghost, self.delta, self.s, Regime::Short)
    }
}

/// `sum <k, eta>^{2s} |c|^2`.
pub fn hs_norm_sqr(f: &SpectralField, s: f64) -> f64 {
    let g = f.grid;
    f.coeffs
        .indexed_iter()
        .map(|((i, j), c)| bracket(g.k(i), g.eta(j), s).powi(2) * c.norm_sqr())
        .sum()
}

fn l2_sqr_1d(u: &Array1<C>) -> f64 {
    u.iter().map(|c| c.norm_sqr()).sum()
}

fn dealias_1d(u: &mut Array1<C>, g: &Grid) {
    for (j, c) in u.iter_mut().enumerate() {
        if !g.retained(0, j) {
            *c = ZERO;
        }
    }
}

/// Largest retained `|k|`.
fn retained_k_max(g: &Grid) -> i64 {
    (0..g.n_z)
        .filter(|&i| g.retained(i, 0))
        .map(|i| signed_index(i, g.n_z).abs())
        .max()
        .unwrap_or(0)
}

/// Random initial vorticity and the matching zero-mode velocity, scaled so that
/// `||Omega||_{H^s} + ||U|| = epsilon_amp nu^{1/3}`.
///
/// Coefficients are complex Gaussians with envelope `(1 + k^2 + eta^2)^{-(s + 1.6)/2}` on the
/// retained modes with `|k| <= data_k_max`. The mean of `Omega_0 / B` is removed so that the
/// zero mode has a periodic velocity.
pub fn init_data(
    config: &SimulationConfig,
    profile: &ShearProfile,
    grid: &Grid,
) -> Result<(SpectralField, Array1<C>)> {
    let (nz, nv) = grid.shape();
    let mut f = SpectralField::zeros(grid);
    let u0 = Array1::<C>::zeros(nv);
    if config.epsilon_amp == 0.0 {
        return Ok((f, u0));
    }
    let kd = config.data_k_max.unwrap_or(i64::MAX);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let p = -(config.s + 1.6) / 2.0;
    for i in 0..nz {
        for j in 0..nv {
            let (ii, jj) = ((nz - i) % nz, (nv - j) % nv);
            if (ii, jj) < (i, j) {
                continue;
            }
            let (k, eta) = (grid.k(i), grid.eta(j));
            let g1: f64 = StandardNormal.sample(&mut rng);
            let g2: f64 = StandardNormal.sample(&mut rng);
            if !grid.retained(i, j) || k.abs() as i64 > kd || (i, j) == (0, 0) {
                continue;
            }
            let amp = (1.0 + k * k + eta * eta).powf(p);
            if (ii, jj) == (i, j) {
                f.coeffs[(i, j)] = C::new(amp * g1, 0.0);
            } else {
                let c = C::new(g1, g2) * (amp / 2f64.sqrt());
                f.coeffs[(i, j)] = c;
                f.coeffs[(ii, jj)] = c.conj();
            }
        }
    }
    let b = &profile.coef_b;
    let row0: Vec<C> = f.coeffs.row(0).to_vec();
    let vals = inverse_1d(&row0);
    let n = nv as f64;
    let mean_ratio: f64 = vals
        .iter()
        .zip(b.iter())
        .map(|(w, bb)| w.re / bb)
        .sum::<f64>()
        / n;
    let mean_inv: f64 = b.iter().map(|bb| 1.0 / bb).sum::<f64>() / n;
    f.coeffs[(0, 0)] -= C::new(mean_ratio / mean_inv, 0.0);
    let (mut u, _) = zero_mode_velocity(b, &f.coeffs.row(0).to_owned(), grid.l_v);
    dealias_1d(&mut u, grid);
    let size = hs_norm_sqr(&f, config.s).sqrt() + l2_sqr_1d(&u).sqrt();
    if size == 0.0 {
        return Ok((SpectralField::zeros(grid), u0));
    }
    let scale = config.epsilon_amp * config.nu.cbrt() / size;
    Ok((f.scaled(scale), u.mapv(|c| c * scale)))
}

/// Background coefficients `(B, B')` along the run.
struct ProfileClock {
    base: ShearProfile,
    tau: f64,
    nodes: RefCell<HashMap<usize, (Array1<f64>, Array1<f64>)>>,
}

impl ProfileClock {
    fn new(base: ShearProfile) -> Self {
        let tau = PROFILE_NODE_SPACING / base.nu.max(f64::MIN_POSITIVE);
        ProfileClock {
            base,
            tau,
            nodes: RefCell::new(HashMap::new()),
        }
    }

    fn frozen(&self) -> bool {
        self.base.is_couette() || self.base.nu == 0.0
    }

    fn node(&self, j: usize) -> Result<(Array1<f64>, Array1<f64>)> {
        if let Some(v) = self.nodes.borrow().get(&j) {
            return Ok(v.clone());
        }
        let p = self.base.at_time(j as f64 * self.tau)?;
        let v = (p.coef_b, p.coef_bprime);
        self.nodes.borrow_mut().insert(j, v.clone());
        Ok(v)
    }

    /// The profile at `t` with interpolated `B`, `B'`; `B0`, `B0'` are untouched.
    fn at(&self, t: f64) -> Result<ShearProfile> {
        let mut p = self.base.clone();
        p.t = t;
        if self.frozen() || t == 0.0 {
            return Ok(p);
        }
        let x = t / self.tau;
        let lo = (x.floor() as usize).saturating_sub(1);
        let mut b = Array1::<f64>::zeros(p.coef_b.len());
        let mut bp = Array1::<f64>::zeros(p.coef_b.len());
        for a in 0..4 {
            let mut w = 1.0;
            for c in 0..4 {
                if c != a {
                    w *= (x - (lo + c) as f64) / (a as f64 - c as f64);
                }
            }
            let (nb, nbp) = self.node(lo + a)?;
            b.scaled_add(w, &nb);
            bp.scaled_add(w, &nbp);
        }
        p.coef_b = b;
        p.coef_bprime = bp;
        Ok(p)
    }
}

#[derive(Debug, Clone)]
struct State {
    /// `Omega*` in split mode, `Omega` otherwise.
    aux: Array2<C>,
    /// `F`; identically zero in monolithic mode.
    lin: Array2<C>,
    u: Array1<C>,
}

impl State {
    fn axpy(&mut self, a: f64, x: &State) {
        self.aux.scaled_add(C::new(a, 0.0), &x.aux);
        self.lin.scaled_add(C::new(a, 0.0), &x.lin);
        self.u.scaled_add(C::new(a, 0.0), &x.u);
    }

    fn total(&self) -> Array2<C> {
        &self.aux + &self.lin
    }

    fn finite(&self) -> bool {
        self.aux
            .iter()
            .chain(self.lin.iter())
            .chain(self.u.iter())
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    fn norm_sqr(&self) -> f64 {
        self.aux
            .iter()
            .chain(self.lin.iter())
            .chain(self.u.iter())
            .map(|c| c.norm_sqr())
            .sum()
    }
}

/// Velocity of the nonzero modes, in coefficients and on the physical grid.
struct Flow {
    /// `i k Psi`
    dz_psi: Array2<C>,
    u1_hat: Array2<C>,
    w_hat: Array2<C>,
    u1: Array2<f64>,
    w: Array2<f64>,
}

/// Per-step kinematic scalars.
#[derive(Debug, Clone, Copy, Default)]
struct Kinematics {
    /// Upper bound on `|grad_L u|_inf` from coefficient sums.
    grad_bound: f64,
    velocity_hs_sqr: f64,
    u1_l2_sqr: f64,
    u2_l2_sqr: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Norms {
    /// `||A Omega*||^2`
    pub a_star: f64,
    /// `||A F||^2`
    pub a_lin: f64,
    /// `||zeta P_neq Omega*||^2`
    pub zeta_star: f64,
    /// `||P0 U^1||^2`
    pub u1_zero: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CkTerms {
    pub nu_star: f64,
    pub i_star: f64,
    pub e_star: f64,
    pub nu_lin: f64,
    pub i_lin: f64,
    pub e_lin: f64,
}

/// Terms of `d/dt (1/2 ||A Omega*||^2)`, each an inner product `<A Omega*, A X>`.
///
/// `zeta_growth` is the contribution of `d_t zeta`, and `l0` the term `B0' d_z Lap0^{-1} Omega`
/// that the monolithic equation carries for `Omega* = Omega`, `F = 0`; it vanishes in split mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Budget {
    pub energy: f64,
    pub ck_m: f64,
    pub zeta_growth: f64,
    pub d: f64,
    pub nl_0a: f64,
    pub nl_a: f64,
    pub nl_0l: f64,
    pub nl_l: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l0: f64,
}

impl Budget {
    /// Signed sum, which equals `d/dt (1/2 ||A Omega*||^2)` for the exact semi-discrete flow.
    pub fn sum(&self) -> f64 {
        -self.ck_m + self.zeta_growth + self.d
            - self.nl_0a
            - self.nl_a
            - self.nl_0l
            - self.nl_l
            - self.l1
            - self.l2
            - self.l3
            + self.l0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TheoremQuantities {
    /// `||Omega||_{H^s}`
    pub omega_hs: f64,
    /// `||exp(delta nu^{1/3} |k|^{2/3} t) P_neq Omega||_{H^s}`
    pub omega_ed_hs: f64,
    /// `int_0^t ||P_neq U||^2_{H^s}`
    pub velocity_integral: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub norms: Norms,
    pub ck: CkTerms,
    pub budget: Budget,
    pub theorem: TheoremQuantities,
    /// `nu ||A sqrt(-Lap_L) Omega*||^2`
    pub diss_a: f64,
    /// `nu ||zeta sqrt(-Lap_L) P_neq Omega*||^2`
    pub diss_zeta: f64,
    /// `||P_neq U^1||`, `||U^2||` in coefficient `l^2`.
    pub u1_neq: f64,
    pub u2: f64,
}

pub const CSV_HEADER: [&str; 32] = [
    "t",
    "a_star",
    "a_lin",
    "zeta_star",
    "u1_zero",
    "ck_nu_star",
    "ck_i_star",
    "ck_e_star",
    "ck_nu_lin",
    "ck_i_lin",
    "ck_e_lin",
    "energy",
    "ck_m",
    "zeta_growth",
    "d",
    "nl_0a",
    "nl_a",
    "nl_0l",
    "nl_l",
    "l1",
    "l2",
    "l3",
    "l0",
    "budget_sum",
    "omega_hs",
    "omega_ed_hs",
    "velocity_integral",
    "diss_a",
    "diss_zeta",
    "u1_neq",
    "u2",
    "ratio_max",
];

impl DiagnosticsRecord {
    fn csv_row(&self, ratio: f64) -> Vec<String> {
        let (n, c, b, q) = (self.norms, self.ck, self.budget, self.theorem);
        [
            self.t,
            n.a_star,
            n.a_lin,
            n.zeta_star,
            n.u1_zero,
            c.nu_star,
            c.i_star,
            c.e_star,
            c.nu_lin,
            c.i_lin,
            c.e_lin,
            b.energy,
            b.ck_m,
            b.zeta_growth,
            b.d,
            b.nl_0a,
            b.nl_a,
            b.nl_0l,
            b.nl_l,
            b.l1,
            b.l2,
            b.l3,
            b.l0,
            b.sum(),
            q.omega_hs,
            q.omega_ed_hs,
            q.velocity_integral,
            self.diss_a,
            self.diss_zeta,
            self.u1_neq,
            self.u2,
            ratio,
        ]
        .iter()
        .map(|x| format!("{x:.12e}"))
        .collect()
    }
}

pub struct Simulation {
    pub config: SimulationConfig,
    pub grid: Grid,
    pub t: f64,
    pub steps: usize,
    state: State,
    profile0: ShearProfile,
    clock: ProfileClock,
    spec: MultiplierSpec,
    prev: Option<(f64, State)>,
    k_ret: i64,
    k_guard: i64,
    /// `||Omega_in||_{H^s} + ||U_in||`.
    pub data_size: f64,
    /// Trapezoid integral of `||P_neq U||^2_{H^s}` up to `last_velocity.0`.
    velocity_integral: f64,
    last_velocity: Option<(f64, f64)>,
}

impl Simulation {
    pub fn new(config: SimulationConfig) -> Result<Self> {
        config.validate()?;
        let profile = config.build_profile()?;
        let grid = config.grid(&profile)?;
        let (omega, u) = init_data(&config, &profile, &grid)?;
        let sim = Self::assemble(config, profile, grid, omega, u)?;
        let tilt = (sim.k_guard as f64) * sim.config.t_end();
        if tilt > grid.eta_max() {
            return Err(Error::TiltAliasing {
                tilt,
                eta_max: grid.eta_max(),
            });
        }
        Ok(sim)
    }

    /// Starts from given data; `omega` must live on the configured grid.
    pub fn with_initial(
        config: SimulationConfig,
        omega: SpectralField,
        u: Array1<C>,
    ) -> Result<Self> {
        config.validate()?;
        let profile = config.build_profile()?;
        let grid = config.grid(&profile)?;
        if omega.grid.shape() != grid.shape()
            || (omega.grid.l_v - grid.l_v).abs() > 1e-12 * grid.l_v
        {
            return Err(Error::Dimension {
                expected: format!("{:?} on L_v = {}", grid.shape(), grid.l_v),
                got: format!("{:?} on L_v = {}", omega.grid.shape(), omega.grid.l_v),
            });
        }
        if u.len() != grid.n_v {
            return Err(Error::Dimension {
                expected: grid.n_v.to_string(),
                got: u.len().to_string(),
            });
        }
        Self::assemble(config, profile, grid, omega.dealias(), u)
    }

    fn assemble(
        config: SimulationConfig,
        profile: ShearProfile,
        grid: Grid,
        omega: SpectralField,
        u: Array1<C>,
    ) -> Result<Self> {
        let spec = config.multiplier()?;
        let k_ret = retained_k_max(&grid);
        let k_data = omega
            .coeffs
            .axis_iter(Axis(0))
            .enumerate()
            .filter(|(_, r)| r.iter().any(|c| *c != ZERO))
            .map(|(i, _)| signed_index(i, grid.n_z).abs())
            .max()
            .unwrap_or(0);
        let k_guard = if config.nonlinear { k_ret } else { k_data };
        let data_size = hs_norm_sqr(&omega, config.s).sqrt() + l2_sqr_1d(&u).sqrt();
        let state = State {
            aux: omega.coeffs,
            lin: Array2::zeros(grid.shape()),
            u,
        };
        Ok(Simulation {
            config,
            grid,
            t: 0.0,
            steps: 0,
            state,
            clock: ProfileClock::new(profile.clone()),
            profile0: profile,
            spec,
            prev: None,
            k_ret,
            k_guard,
            data_size,
            velocity_integral: 0.0,
            last_velocity: None,
        })
    }

    pub fn profile(&self) -> &ShearProfile {
        &self.profile0
    }

    fn field(&self, c: Array2<C>) -> SpectralField {
        SpectralField {
            grid: self.grid,
            coeffs: c,
            reality_flag: true,
        }
    }

    /// `Omega = F + Omega*`.
    pub fn omega(&self) -> SpectralField {
        self.field(self.state.total())
    }

    pub fn omega_star(&self) -> SpectralField {
        self.field(self.state.aux.clone())
    }

    pub fn linear_profile(&self) -> SpectralField {
        self.field(self.state.lin.clone())
    }

    pub fn zero_mode_velocity(&self) -> Array1<C> {
        self.state.u.clone()
    }

    fn split(&self) -> bool {
        self.config.split_mode == SplitMode::Split
    }

    // ---- spectral helpers -------------------------------------------------------------

    fn symbol(&self, c: &Array2<C>, t: f64, f: impl Fn(f64, f64) -> C) -> Array2<C> {
        let g = self.grid;
        let mut out = c.clone();
        for ((i, j), x) in out.indexed_iter_mut() {
            if *x != ZERO {
                let k = g.k(i);
                *x *= f(k, g.eta(j) - k * t);
            }
        }
        out
    }

    fn phys(&self, c: &Array2<C>) -> Array2<f64> {
        Transformer::for_grid(&self.grid)
            .inverse(c.clone())
            .mapv(|x| x.re)
    }

    fn coeffs(&self, p: &Array2<f64>) -> Array2<C> {
        let mut c = Transformer::for_grid(&self.grid).forward(p.mapv(|x| C::new(x, 0.0)));
        crate::grid::dealias_in_place(&mut c, &self.grid);
        c
    }

    /// `P[g(v) * phys(c)]`.
    fn times_v(&self, c: &Array2<C>, g: &Array1<f64>) -> Array2<C> {
        let mut p = self.phys(c);
        for mut row in p.axis_iter_mut(Axis(0)) {
            row *= g;
        }
        self.coeffs(&p)
    }

    /// Row-wise map over `k = 1..=k_ret`, with `-k` rows filled by conjugate symmetry.
    fn rowwise<F>(&self, src: &[&Array2<C>], f: F) -> Result<Array2<C>>
    where
        F: Fn(i64, &[Array1<C>]) -> Result<Array1<C>> + Sync,
    {
        let g = self.grid;
        let n = g.n_v;
        let rows: Vec<(i64, Array1<C>)> = (1..=self.k_ret)
            .into_par_iter()
            .map(|k| {
                let i = g.k_index(k).expect("retained k on grid");
                let inputs: Vec<Array1<C>> = src.iter().map(|a| a.row(i).to_owned()).collect();
                if inputs.iter().all(|r| r.iter().all(|c| *c == ZERO)) {
                    return Ok((k, Array1::zeros(n)));
                }
                let mut r = f(k, &inputs)?;
                for (j, c) in r.iter_mut().enumerate() {
                    if !g.retained(i, j) {
                        *c = ZERO;
                    }
                }
                Ok((k, r))
            })
            .collect::<Result<_>>()?;
        let mut out = Array2::<C>::zeros(g.shape());
        for (k, r) in rows {
            let (ip, im) = (g.k_index(k).unwrap(), g.k_index(-k).unwrap());
            for j in 0..n {
                out[(ip, j)] = r[j];
                out[(im, (n - j) % n)] = r[j].conj();
            }
        }
        Ok(out)
    }

    fn flow(&self, frame: &ShearProfile, t: f64, omega: &Array2<C>) -> Result<Flow> {
        let psi = self.rowwise(&[omega], |k, r| lap_inverse(Kind::LapT, frame, k, t, &r[0]))?;
        let couette = frame.is_couette();
        let d_psi = self.symbol(&psi, t, |_, s| I * s);
        let dz_psi = self.symbol(&psi, t, |k, _| I * k);
        let (u1_hat, w_hat) = if couette {
            let mut a = d_psi.mapv(|c| -c);
            let mut b = dz_psi.clone();
            crate::grid::dealias_in_place(&mut a, &self.grid);
            crate::grid::dealias_in_place(&mut b, &self.grid);
            (a, b)
        } else {
            let minus_b = frame.coef_b.mapv(|x| -x);
            (
                self.times_v(&d_psi, &minus_b),
                self.times_v(&dz_psi, &frame.coef_b),
            )
        };
        let u1 = self.phys(&u1_hat);
        let w = self.phys(&w_hat);
        Ok(Flow {
            dz_psi,
            u1_hat,
            w_hat,
            u1,
            w,
        })
    }

    /// `P[(zero U + nonzero u1) d_z G + nonzero w D G]`.
    fn transport(
        &self,
        flow: &Flow,
        t: f64,
        g: &Array2<C>,
        u0: Option<&Array1<f64>>,
        neq: bool,
    ) -> Array2<C> {
        let gz = self.phys(&self.symbol(g, t, |k, _| I * k));
        let mut prod = Array2::<f64>::zeros(gz.dim());
        if let Some(u0) = u0 {
            for ((i, j), p) in prod.indexed_iter_mut() {
                *p += u0[j] * gz[(i, j)];
            }
        }
        if neq {
            let gd = self.phys(&self.symbol(g, t, |_, s| I * s));
            prod = prod + &flow.u1 * &gz + &flow.w * &gd;
        }
        self.coeffs(&prod)
    }

    fn zero_velocity_phys(&self) -> Array1<f64> {
        Array1::from_iter(
            inverse_1d(self.state.u.as_slice().unwrap())
                .iter()
                .map(|c| c.re),
        )
    }

    /// `nu (B^2 - 1) D^2 G`.
    fn diffusion_correction(&self, frame: &ShearProfile, t: f64, g: &Array2<C>) -> Array2<C> {
        if frame.is_couette() {
            return Array2::zeros(g.dim());
        }
        let d2 = self.symbol(g, t, |_, s| C::new(-s * s, 0.0));
        let b2m1 = frame.coef_b.mapv(|b| b * b - 1.0);
        self.times_v(&d2, &b2m1).mapv(|c| c * self.config.nu)
    }

    /// `B0' d_z Lap0^{-1} P_neq G`.
    fn b0_nonlocal(&self, t: f64, g: &Array2<C>) -> Result<Array2<C>> {
        if self.profile0.is_couette() || !self.config.nonlocal {
            return Ok(Array2::zeros(g.dim()));
        }
        let p = &self.profile0;
        self.rowwise(&[g], |k, r| nonlocal_b0(p, k, t, &r[0]))
    }

    /// `nu (Lap0 - Lap_L) F`.
    fn lap0_correction(&self, t: f64, f: &Array2<C>) -> Result<Array2<C>> {
        if self.profile0.is_couette() {
            return Ok(Array2::zeros(f.dim()));
        }
        let (p, nu) = (&self.profile0, self.config.nu);
        self.rowwise(&[f], |k, r| Ok(lap0_minus_lapl(p, k, t, &r[0]) * nu))
    }

    fn kinematics(&self, flow: &Flow, t: f64) -> Kinematics {
        let g = self.grid;
        let s = self.config.s;
        let mut kin = Kinematics::default();
        let mut grad = 0.0;
        for ((i, j), a) in flow.u1_hat.indexed_iter() {
            let b = flow.w_hat[(i, j)];
            let (k, eta) = (g.k(i), g.eta(j));
            let sh = (eta - k * t).abs();
            grad += (k.abs() + sh) * (a.norm() + b.norm());
            let (na, nb) = (a.norm_sqr(), b.norm_sqr());
            kin.u1_l2_sqr += na;
            kin.u2_l2_sqr += nb;
            kin.velocity_hs_sqr += bracket(k, eta, s).powi(2) * (na + nb);
        }
        let u0 = &self.state.u;
        grad += u0
            .iter()
            .enumerate()
            .map(|(j, c)| g.eta(j).abs() * c.norm())
            .sum::<f64>();
        kin.grad_bound = grad;
        kin
    }

    fn explicit(&self, t: f64, st: &State) -> Result<(State, Kinematics)> {
        let frame = self.clock.at(t)?;
        let total = st.total();
        let flow = self.flow(&frame, t, &total)?;
        let kin = self.kinematics(&flow, t);
        let mut n_omega = self.diffusion_correction(&frame, t, &total);
        if self.config.nonlocal && !frame.is_couette() {
            n_omega += &self.times_v(&flow.dz_psi, &frame.coef_bprime);
        }
        let mut n_u = Array1::<C>::zeros(self.grid.n_v);
        if !frame.is_couette() {
            let g = self.grid;
            let lap: Vec<C> =
                st.u.iter()
                    .enumerate()
                    .map(|(j, c)| c * -(g.eta(j) * g.eta(j)))
                    .collect();
            let vals = inverse_1d(&lap);
            let prod: Vec<C> = vals
                .iter()
                .zip(frame.coef_b.iter())
                .map(|(x, b)| x * (b * b - 1.0))
                .collect();
            n_u = Array1::from(forward_1d(&prod)).mapv(|c| c * self.config.nu);
            dealias_1d(&mut n_u, &g);
        }
        if self.config.nonlinear {
            let u0 = self.zero_velocity_phys();
            n_omega -= &self.transport(&flow, t, &total, Some(&u0), true);
            let self_adv = self.transport(&flow, t, &flow.u1_hat, None, true);
            n_u -= &self_adv.row(0);
        }
        let mut out = State {
            aux: n_omega,
            lin: Array2::zeros(self.grid.shape()),
            u: n_u,
        };
        if self.split() {
            let n_f = self.b0_nonlocal(t, &total)? + self.lap0_correction(t, &st.lin)?;
            out.aux -= &n_f;
            out.lin = n_f;
        }
        Ok((out, kin))
    }

    /// Applies the exact `nu Lap_L` flow from `t0` to `t1`.
    fn propagate(&self, st: &mut State, t0: f64, t1: f64) {
        let g = self.grid;
        let nu = self.config.nu;
        for ((i, j), c) in st.aux.indexed_iter_mut() {
            let (k, eta) = (g.k(i), g.eta(j));
            let e = (-nu * dissipation_exponent(k, eta - k * t0, t1 - t0)).exp();
            *c *= e;
            st.lin[(i, j)] *= e;
        }
        for (j, c) in st.u.iter_mut().enumerate() {
            *c *= (-nu * g.eta(j).powi(2) * (t1 - t0)).exp();
        }
    }

    fn admissible_dt(&self, dt_max: f64, kin: &Kinematics, t: f64) -> f64 {
        let safety = self.config.cfl_safety;
        let mut dt = dt_max;
        if kin.grad_bound > 0.0 {
            dt = dt.min(safety / kin.grad_bound);
        }
        if !self.profile0.is_couette() {
            let g = self.grid;
            let eta_ret = self.grid.dealias_fraction.min(1.0) * g.eta_max();
            let kr = self.k_ret as f64;
            let smax = kr * kr + (eta_ret + kr * t.max(0.0)).powi(2);
            let b2 = self
                .clock
                .base
                .coef_b
                .iter()
                .map(|b| (b * b - 1.0).abs())
                .fold(0.0, f64::max);
            if b2 > 0.0 {
                dt = dt.min(safety / (self.config.nu * b2 * smax));
            }
        }
        dt
    }

    /// One IF-AB2 step of length at most `dt_max`; returns the step taken.
    pub fn step(&mut self, dt_max: f64) -> Result<f64> {
        if !(dt_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {dt_max}"
            )));
        }
        let t = self.t;
        let (n0, kin) = self.explicit(t, &self.state)?;
        self.note_velocity(t, kin.velocity_hs_sqr);
        let dt = self.admissible_dt(dt_max, &kin, t);
        if dt < 1e-9 * dt_max {
            return Err(Error::BlowUp {
                t,
                reason: format!("time step collapsed to {dt:.3e}"),
            });
        }
        let tilt = self.k_guard as f64 * (t + dt);
        if tilt > self.grid.eta_max() {
            return Err(Error::TiltAliasing {
                tilt,
                eta_max: self.grid.eta_max(),
            });
        }
        let mut next = self.state.clone();
        match &self.prev {
            None => {
                let mut star = self.state.clone();
                star.axpy(dt, &n0);
                self.propagate(&mut star, t, t + dt);
                let (n1, _) = self.explicit(t + dt, &star)?;
                next.axpy(0.5 * dt, &n0);
                self.propagate(&mut next, t, t + dt);
                next.axpy(0.5 * dt, &n1);
            }
            Some((dt_prev, nm1)) => {
                let w = dt / dt_prev;
                next.axpy(dt * (1.0 + 0.5 * w), &n0);
                self.propagate(&mut next, t, t + dt);
                let mut old = nm1.clone();
                self.propagate(&mut old, t - dt_prev, t + dt);
                next.axpy(-0.5 * dt * w, &old);
            }
        }
        let size = next.norm_sqr().sqrt();
        if !next.finite() || size > BLOWUP_FACTOR * self.data_size.max(f64::MIN_POSITIVE) {
            return Err(Error::BlowUp {
                t: t + dt,
                reason: format!("coefficient norm {size:.3e}"),
            });
        }
        self.state = next;
        self.prev = Some((dt, n0));
        self.t = t + dt;
        self.steps += 1;
        Ok(dt)
    }

    fn note_velocity(&mut self, t: f64, v: f64) {
        if let Some((t0, v0)) = self.last_velocity {
            if t > t0 {
                self.velocity_integral += 0.5 * (t - t0) * (v0 + v);
            }
        }
        self.last_velocity = Some((t, v));
    }

    fn running_velocity_integral(&self, t: f64, v: f64) -> f64 {
        match self.last_velocity {
            Some((t0, v0)) if t > t0 => self.velocity_integral + 0.5 * (t - t0) * (v0 + v),
            _ => self.velocity_integral,
        }
    }

    /// `(||P_neq U^1||, ||U^2||)` at the current time, in coefficient `l^2`.
    pub fn velocity_norms(&self) -> Result<(f64, f64)> {
        let frame = self.clock.at(self.t)?;
        let flow = self.flow(&frame, self.t, &self.state.total())?;
        let kin = self.kinematics(&flow, self.t);
        Ok((kin.u1_l2_sqr.sqrt(), kin.u2_l2_sqr.sqrt()))
    }

    /// `(||A Omega||^2, ||zeta P_neq Omega||^2)` with the weights of the regime containing `t`.
    pub fn weighted_energies(&self, omega: &SpectralField, t: f64) -> (f64, f64) {
        let sp = self.spec.at(t);
        let g = omega.grid;
        let (mut a, mut z) = (0.0, 0.0);
        for ((i, j), c) in omega.coeffs.indexed_iter() {
            let n2 = c.norm_sqr();
            if n2 == 0.0 {
                continue;
            }
            let (k, eta) = (g.k(i), g.eta(j));
            let zeta = eval_zeta(&sp, t, k);
            let m = m_jet(&sp, t, k, eta).value;
            a += (zeta * m * bracket(k, eta, sp.s)).powi(2) * n2;
            if k != 0.0 {
                z += zeta * zeta * n2;
            }
        }
        (a, z)
    }

    /// Diagnostics at the current time.
    pub fn record(&self) -> Result<DiagnosticsRecord> {
        let t = self.t;
        let st = &self.state;
        let g = self.grid;
        let nu = self.config.nu;
        let frame = self.clock.at(t)?;
        let total = st.total();
        let flow = self.flow(&frame, t, &total)?;
        let kin = self.kinematics(&flow, t);

        let zero = || Array2::<C>::zeros(g.shape());
        let diff_star = self.diffusion_correction(&frame, t, &st.aux);
        let (t0_star, tn_star, t0_lin, tn_lin) = if self.config.nonlinear {
            let u0 = self.zero_velocity_phys();
            (
                self.transport(&flow, t, &st.aux, Some(&u0), false),
                self.transport(&flow, t, &st.aux, None, true),
                self.transport(&flow, t, &st.lin, Some(&u0), false),
                self.transport(&flow, t, &st.lin, None, true),
            )
        } else {
            (zero(), zero(), zero(), zero())
        };
        let local = self.config.nonlocal && !frame.is_couette();
        let (nb0, b0_psi, bt_psi) = if local {
            (
                self.b0_nonlocal(t, &total)?,
                self.times_v(&flow.dz_psi, &frame.coef_b0prime),
                self.times_v(&flow.dz_psi, &frame.coef_bprime),
            )
        } else {
            (zero(), zero(), zero())
        };
        let l3_field = if self.split() {
            self.lap0_correction(t, &st.lin)? - self.diffusion_correction(&frame, t, &st.lin)
        } else {
            zero()
        };

        let sp = self.spec.at(t);
        let ed_rate = sp.delta * nu.cbrt();
        let mut r = DiagnosticsRecord {
            t,
            ..Default::default()
        };
        let mut hs = 0.0;
        let mut ed = 0.0;
        let mut b = Budget::default();
        let pair =
            |a2: f64, c: C, x: &Array2<C>, i: usize, j: usize| a2 * (c.conj() * x[(i, j)]).re;
        for ((i, j), cs) in st.aux.indexed_iter() {
            let cf = st.lin[(i, j)];
            let ct = cs + cf;
            let (ns, nf) = (cs.norm_sqr(), cf.norm_sqr());
            let (k, eta) = (g.k(i), g.eta(j));
            let br2 = bracket(k, eta, sp.s).powi(2);
            hs += br2 * ct.norm_sqr();
            if k != 0.0 {
                ed += (2.0 * ed_rate * k.abs().powf(2.0 / 3.0) * t).exp() * br2 * ct.norm_sqr();
            }
            if ns == 0.0 && nf == 0.0 {
                continue;
            }
            let zeta = eval_zeta(&sp, t, k);
            let mj = m_jet(&sp, t, k, eta);
            let a2 = (zeta * mj.value).powi(2) * br2;
            let jn = w_nu_jet(&sp, t, k, eta);
            let ji = w_i_jet(&sp, t, k, eta);
            let je = w_e_jet(&sp, t, k, eta);
            let lapl = k * k + (eta - k * t).powi(2);
            r.norms.a_star += a2 * ns;
            r.norms.a_lin += a2 * nf;
            r.ck.nu_star += a2 * (-jn.dt / jn.value) * ns;
            r.ck.i_star += a2 * (-ji.dt / ji.value) * ns;
            r.ck.e_star += a2 * (-je.dt / je.value) * ns;
            r.ck.nu_lin += a2 * (-jn.dt / jn.value) * nf;
            r.ck.i_lin += a2 * (-ji.dt / ji.value) * nf;
            r.ck.e_lin += a2 * (-je.dt / je.value) * nf;
            r.diss_a += nu * a2 * lapl * ns;
            if k != 0.0 {
                r.norms.zeta_star += zeta * zeta * ns;
                r.diss_zeta += nu * zeta * zeta * lapl * ns;
            }
            if ns == 0.0 {
                continue;
            }
            b.ck_m += a2 * (-mj.dt / mj.value) * ns;
            b.zeta_growth += a2 * zeta_rate(&sp, k) * ns;
            b.d += -nu * a2 * lapl * ns + pair(a2, *cs, &diff_star, i, j);
            b.nl_0a += pair(a2, *cs, &t0_star, i, j);
            b.nl_a += pair(a2, *cs, &tn_star, i, j);
            b.nl_0l += pair(a2, *cs, &t0_lin, i, j);
            b.nl_l += pair(a2, *cs, &tn_lin, i, j);
            if local {
                b.l1 += pair(a2, *cs, &nb0, i, j) - pair(a2, *cs, &b0_psi, i, j);
                b.l2 += pair(a2, *cs, &b0_psi, i, j) - pair(a2, *cs, &bt_psi, i, j);
                if !self.split() {
                    b.l0 += pair(a2, *cs, &nb0, i, j);
                }
            }
            b.l3 += pair(a2, *cs, &l3_field, i, j);
        }
        b.energy = 0.5 * r.norms.a_star;
        r.budget = b;
        r.norms.u1_zero = l2_sqr_1d(&st.u);
        r.theorem = TheoremQuantities {
            omega_hs: hs.sqrt(),
            omega_ed_hs: ed.sqrt(),
            velocity_integral: self.running_velocity_integral(t, kin.velocity_hs_sqr),
        };
        r.u1_neq = kin.u1_l2_sqr.sqrt();
        r.u2 = kin.u2_l2_sqr.sqrt();
        Ok(r)
    }

    /// Writes `Omega*`, `F` and the zero-mode velocity (as the `k = 0` row of a field) in the
    /// binary field format, one after another.
    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<()> {
        self.omega_star().write_binary(w)?;
        self.linear_profile().write_binary(w)?;
        let mut u = SpectralField::zeros(&self.grid);
        u.coeffs.row_mut(0).assign(&self.state.u);
        u.write_binary(w)
    }

    /// Restores a checkpoint written by [`write_checkpoint`](Self::write_checkpoint) at time `t`.
    /// The step history is not stored, so the next step is a starting step.
    pub fn restore<R: Read>(config: SimulationConfig, r: &mut R, t: f64) -> Result<Self> {
        let aux = SpectralField::read_binary(r)?;
        let lin = SpectralField::read_binary(r)?;
        let u = SpectralField::read_binary(r)?;
        let mut sim = Self::with_initial(config, aux, u.coeffs.row(0).to_owned())?;
        sim.state.lin = lin.coeffs;
        sim.t = t;
        Ok(sim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Stable,
    ThresholdExceeded,
    BlowUp,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Stable => "stable",
            Verdict::ThresholdExceeded => "threshold-exceeded",
            Verdict::BlowUp => "blow-up",
        })
    }
}

/// Bootstrap quantities as fractions of their allowed size; the run is stable while all are `<= 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BootstrapSample {
    pub t: f64,
    pub energy: f64,
    pub zeta: f64,
    pub u1: f64,
}

impl BootstrapSample {
    pub fn worst(&self) -> f64 {
        self.energy.max(self.zeta).max(self.u1)
    }
}

/// Running check of the bootstrap hypotheses.
///
/// Each hypothesis bounds a quantity by a multiple of the same norm of the initial data: the
/// short-time `A`-weighted energy by `short_energy * ||A(0) Omega_in||^2`, the long-time one by
/// `2 c1 * ||A(T0) Omega_in||^2` with `T0 = nu^{-1/6}`, the `zeta` energy by
/// `long_zeta * ||zeta(T0) P_neq Omega_in||^2` and `||P0 U^1||^2` by a multiple of the squared data size.
#[derive(Debug, Clone)]
pub struct BootstrapMonitor {
    th: Thresholds,
    t_switch: f64,
    scale_short: f64,
    scale_long: f64,
    scale_zeta: f64,
    scale_u1: f64,
    int_short: f64,
    int_long: f64,
    int_zeta: f64,
    last: Option<DiagnosticsRecord>,
}

impl BootstrapMonitor {
    pub fn new(sim: &Simulation) -> Self {
        let om = sim.omega_star();
        let t_switch = sim.spec.t_switch();
        let (scale_short, _) = sim.weighted_energies(&om, 0.0);
        let t_long = t_switch * (1.0 + 1e-12);
        let (scale_long, scale_zeta) = sim.weighted_energies(&om, t_long);
        BootstrapMonitor {
            th: sim.config.thresholds,
            t_switch,
            scale_short,
            scale_long,
            scale_zeta,
            scale_u1: sim.data_size * sim.data_size,
            int_short: 0.0,
            int_long: 0.0,
            int_zeta: 0.0,
            last: None,
        }
    }

    fn ratio(q: f64, bound: f64) -> f64 {
        if q == 0.0 {
            0.0
        } else if bound == 0.0 {
            f64::INFINITY
        } else {
            q / bound
        }
    }

    pub fn update(&mut self, r: &DiagnosticsRecord) -> BootstrapSample {
        let long = r.t > self.t_switch;
        if let Some(p) = self.last {
            let h = r.t - p.t;
            if long && p.t > self.t_switch {
                self.int_long += 0.5 * h * (p.budget.ck_m + p.diss_a + r.budget.ck_m + r.diss_a);
                self.int_zeta += 0.5 * h * (p.diss_zeta + r.diss_zeta);
            } else if !long {
                self.int_short += 0.5 * h * (p.ck.i_star + p.diss_a + r.ck.i_star + r.diss_a);
            }
        }
        self.last = Some(*r);
        let th = self.th;
        let mut s = BootstrapSample {
            t: r.t,
            ..Default::default()
        };
        if long {
            s.energy = Self::ratio(
                r.norms.a_star + self.int_long,
                2.0 * th.c1 * self.scale_long,
            );
            s.zeta = Self::ratio(
                r.norms.zeta_star + self.int_zeta,
                th.long_zeta * self.scale_zeta,
            );
            s.u1 = Self::ratio(r.norms.u1_zero, th.long_u1 * self.scale_u1);
        } else {
            s.energy = Self::ratio(
                r.norms.a_star + self.int_short,
                th.short_energy * self.scale_short,
            );
            s.u1 = Self::ratio(r.norms.u1_zero, th.short_u1 * self.scale_u1);
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub records: Vec<DiagnosticsRecord>,
    pub bootstrap: Vec<BootstrapSample>,
    pub verdict: Verdict,
    /// Time of the first exceeded hypothesis, or of the blow-up.
    pub event_time: Option<f64>,
    pub message: Option<String>,
    pub data_size: f64,
    pub t_final: f64,
}

impl RunReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Parse(e.to_string());
        out.write_record(CSV_HEADER).map_err(err)?;
        for (r, b) in self.records.iter().zip(&self.bootstrap) {
            out.write_record(r.csv_row(b.worst())).map_err(err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs to `t_end`, sampling diagnostics about `samples` times.
pub fn run(config: &SimulationConfig) -> Result<RunReport> {
    let sim = Simulation::new(config.clone())?;
    run_simulation(sim)
}

pub fn run_simulation(mut sim: Simulation) -> Result<RunReport> {
    let config = sim.config.clone();
    let t_end = config.t_end();
    let n_steps = (t_end / config.dt).ceil().max(1.0) as usize;
    let h = t_end / n_steps as f64;
    let every = (n_steps / config.samples.max(1)).max(1);
    let mut monitor = BootstrapMonitor::new(&sim);
    let mut report = RunReport {
        records: Vec::new(),
        bootstrap: Vec::new(),
        verdict: Verdict::Stable,
        event_time: None,
        message: None,
        data_size: sim.data_size,
        t_final: 0.0,
    };
    let sample = |sim: &Simulation,
                  report: &mut RunReport,
                  monitor: &mut BootstrapMonitor|
     -> Result<bool> {
        let r = sim.record()?;
        let b = monitor.update(&r);
        report.records.push(r);
        report.bootstrap.push(b);
        if b.worst() > 1.0 && report.verdict == Verdict::Stable {
            report.verdict = Verdict::ThresholdExceeded;
            report.event_time = Some(r.t);
        }
        Ok(report.verdict != Verdict::Stable && config.stop_on_exceed)
    };
    let mut stop = sample(&sim, &mut report, &mut monitor)?;
    let mut since = 0;
    while !stop && sim.t < t_end * (1.0 - 1e-12) {
        match sim.step(h.min(t_end - sim.t)) {
            Ok(_) => {}
            Err(Error::BlowUp { t, reason }) => {
                report.verdict = Verdict::BlowUp;
                report.event_time = Some(t);
                report.message = Some(reason);
                break;
            }
            Err(e) => return Err(e),
        }
        since += 1;
        if since >= every || sim.t >= t_end * (1.0 - 1e-12) {
            since = 0;
            stop = sample(&sim, &mut report, &mut monitor)?;
        }
    }
    report.t_final = sim.t;
    Ok(report)
}
