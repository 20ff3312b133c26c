//! Linear profile `F` driven by the auxiliary vorticity `Omega*`, mode by mode:
//! `d_t F_k - i k B0' Lap0^{-1} F_k - nu Lap0 F_k = i k B0' Lap0^{-1} Omega*_k`, `F(0) = 0`.
//!
//! Besides time stepping, `F_k` is reconstructed from its resolvent representation. In the
//! shifted variables `r = v - w` the resolvent unknowns `(U, T)` solve
//!
//! ```text
//! eps B0^2 U'' + eps B0' U' + (c - i r) U + i B0' T = exp(-i k tau r) B0' X(r + w)
//! B0^2 T'' + B0' T' - k^2 T = U
//! ```
//!
//! with `B0 = B0(r + w)`, `eps = nu / k`, `c = delta_lin eps^{1/3}`, `X = i k Lap0(tau)^{-1} Omega*_k(tau)`,
//! and `F_k(t, v) = -(1/2 pi) int_0^t exp(-a (t - tau)) int exp(i k t r) U_tau(r, v - r) dr dtau`,
//! `a = delta_lin nu^{1/3} k^{2/3} + nu k^2`.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::elliptic::{solve, y0_of, EllipticOperatorSpec, Kind, Method};
use crate::error::{Error, Result};
use crate::grid::{forward_1d, inverse_1d, signed_index, Grid, SpectralField};
use crate::multipliers::{bracket, weight_sqr, Extra, MultiplierSpec, Which};
use crate::numerics::{gauss_legendre, gmres, BandMatrix, BandedLu};
use crate::oracles::dissipation_exponent;
use crate::profile::ShearProfile;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub const DEFAULT_DELTA_LIN: f64 = 1.0 / 128.0;
/// Largest `eps = nu / k` accepted by the resolvent solver.
pub const EPS_MAX: f64 = 0.1;
const LAP0_TOL: f64 = 1e-13;
/// `|B0 - 1| + |B0'|` below this fraction of its maximum counts as the flat Couette region;
/// it sits above the ringing of series-represented profiles.
const FLAT_TOL: f64 = 1e-4;

/// Forcing history of one mode: the coefficient vector of `Omega*_k(tau)`.
pub type ModeForcing<'f> = dyn Fn(f64) -> Array1<Complex64> + Sync + 'f;

fn eta_of(j: usize, n: usize, l_v: f64) -> f64 {
    PI / l_v * signed_index(j, n) as f64
}

/// `Lap0(t)^{-1} rhs` by GMRES preconditioned with the flat `Lap_L(t)^{-1}`.
pub fn lap0_inverse(
    profile: &ShearProfile,
    k: i64,
    t: f64,
    rhs: &Array1<Complex64>,
) -> Result<Array1<Complex64>> {
    lap_inverse(Kind::Lap0, profile, k, t, rhs)
}

/// Inverse of a variable-coefficient operator of the moving frame on one `k`-row.
pub fn lap_inverse(
    kind: Kind,
    profile: &ShearProfile,
    k: i64,
    t: f64,
    rhs: &Array1<Complex64>,
) -> Result<Array1<Complex64>> {
    let op = EllipticOperatorSpec::new(kind, profile, t, k);
    let flat = EllipticOperatorSpec::new(Kind::LapL, profile, t, k);
    let mut x = solve(&flat, rhs, Method::Direct)?.x;
    if profile.is_couette() || rhs.iter().all(|c| *c == ZERO) {
        return Ok(x);
    }
    let xs = x.as_slice_mut().expect("contiguous");
    gmres(
        |y| op.apply(&Array1::from(y.to_vec())).to_vec(),
        |y| {
            let n = y.len();
            (0..n).map(|j| y[j] / flat_symbol(&flat, j, n)).collect()
        },
        rhs.as_slice().expect("contiguous"),
        xs,
        LAP0_TOL,
        40,
        600,
    )?;
    Ok(x)
}

/// `i k B0' Lap0(t)^{-1} x` on one row.
pub fn nonlocal_b0(
    profile: &ShearProfile,
    k: i64,
    t: f64,
    x: &Array1<Complex64>,
) -> Result<Array1<Complex64>> {
    if profile.is_couette() {
        return Ok(Array1::zeros(x.len()));
    }
    let y = lap0_inverse(profile, k, t, x)?;
    let yv = inverse_1d(y.as_slice().expect("contiguous"));
    let prod: Vec<Complex64> = yv
        .iter()
        .zip(profile.coef_b0prime.iter())
        .map(|(a, b)| a * *b)
        .collect();
    let ik = I * k as f64;
    Ok(Array1::from_iter(
        forward_1d(&prod).into_iter().map(|c| ik * c),
    ))
}

/// `(Lap0(t) - Lap_L(t)) f` on one row.
pub fn lap0_minus_lapl(
    profile: &ShearProfile,
    k: i64,
    t: f64,
    f: &Array1<Complex64>,
) -> Array1<Complex64> {
    if profile.is_couette() {
        return Array1::zeros(f.len());
    }
    let lap0 = EllipticOperatorSpec::new(Kind::Lap0, profile, t, k).apply(f);
    let lapl = EllipticOperatorSpec::new(Kind::LapL, profile, t, k).apply(f);
    lap0 - lapl
}

fn flat_symbol(sp: &EllipticOperatorSpec, j: usize, n: usize) -> Complex64 {
    let eta = eta_of(j, n, sp.profile.resolution.l_v);
    let kf = sp.k as f64;
    Complex64::new(-(kf * kf + (eta - kf * sp.t).powi(2)), 0.0)
}

/// One mode `k >= 1` of the linear profile, advanced by an integrating-factor AB2 scheme in
/// which `nu Lap_L` is exact and `nu (Lap0 - Lap_L) F + i k B0' Lap0^{-1} (F + Omega*)` is explicit.
#[derive(Debug, Clone)]
pub struct LinearMode<'p> {
    profile: &'p ShearProfile,
    pub k: i64,
    pub nu: f64,
    pub t: f64,
    pub f: Array1<Complex64>,
    /// Previous step length and explicit term, for the two-step formula.
    prev: Option<(f64, Array1<Complex64>)>,
}

impl<'p> LinearMode<'p> {
    pub fn new(profile: &'p ShearProfile, k: i64, nu: f64) -> Result<Self> {
        let n = profile.resolution.n_v;
        Self::with_initial(profile, k, nu, Array1::zeros(n))
    }

    /// Nonzero initial data; the profile equation itself always starts from `F = 0`.
    pub fn with_initial(
        profile: &'p ShearProfile,
        k: i64,
        nu: f64,
        f0: Array1<Complex64>,
    ) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidParameter(format!(
                "linear modes are stored for k >= 1, got {k}"
            )));
        }
        if profile.t != 0.0 {
            return Err(Error::InvalidParameter(
                "the linear profile uses the initial shear B0".into(),
            ));
        }
        if !(nu >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "nu must be nonnegative, got {nu}"
            )));
        }
        if f0.len() != profile.resolution.n_v {
            return Err(Error::Dimension {
                expected: profile.resolution.n_v.to_string(),
                got: f0.len().to_string(),
            });
        }
        Ok(LinearMode {
            profile,
            k,
            nu,
            t: 0.0,
            f: f0,
            prev: None,
        })
    }

    fn n(&self) -> usize {
        self.profile.resolution.n_v
    }

    /// Exact factor of `nu Lap_L` from `t0` to `t1`.
    fn propagator(&self, t0: f64, t1: f64) -> Array1<f64> {
        let (n, l, kf) = (self.n(), self.profile.resolution.l_v, self.k as f64);
        Array1::from_shape_fn(n, |j| {
            let eta = eta_of(j, n, l);
            (-self.nu * dissipation_exponent(kf, eta - kf * t0, t1 - t0)).exp()
        })
    }

    pub fn explicit_term(
        &self,
        t: f64,
        f: &Array1<Complex64>,
        omega: &Array1<Complex64>,
    ) -> Result<Array1<Complex64>> {
        if self.profile.is_couette() {
            return Ok(Array1::zeros(self.n()));
        }
        let nonlocal = nonlocal_b0(self.profile, self.k, t, &(f + omega))?;
        Ok(nonlocal + lap0_minus_lapl(self.profile, self.k, t, f) * self.nu)
    }

    /// Advances by `dt`; the first step uses the integrating-factor Heun scheme.
    pub fn step(&mut self, dt: f64, forcing: &ModeForcing) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        let eta_max = PI / self.profile.resolution.l_v * (self.n() / 2) as f64;
        let tilt = self.k as f64 * (self.t + dt);
        if tilt > eta_max {
            return Err(Error::TiltAliasing { tilt, eta_max });
        }
        let t = self.t;
        let n0 = self.explicit_term(t, &self.f, &forcing(t))?;
        let e1 = self.propagator(t, t + dt).mapv(|x| Complex64::new(x, 0.0));
        let f_new = match &self.prev {
            None => {
                let star = &e1 * &(&self.f + &(&n0 * dt));
                let n1 = self.explicit_term(t + dt, &star, &forcing(t + dt))?;
                &e1 * &(&self.f + &(&n0 * (0.5 * dt))) + &n1 * (0.5 * dt)
            }
            Some((dt_prev, nm1)) => {
                let w = dt / dt_prev;
                let e2 = self
                    .propagator(t - dt_prev, t + dt)
                    .mapv(|x| Complex64::new(x, 0.0));
                &e1 * &(&self.f + &(&n0 * (dt * (1.0 + 0.5 * w)))) - &e2 * &(nm1 * (0.5 * dt * w))
            }
        };
        self.f = f_new;
        self.prev = Some((dt, n0));
        self.t += dt;
        Ok(())
    }

    /// Steps to `t_end` with the largest uniform step not exceeding `dt`.
    pub fn run_to(&mut self, t_end: f64, dt: f64, forcing: &ModeForcing) -> Result<()> {
        let span = t_end - self.t;
        if span <= 0.0 {
            return Ok(());
        }
        let steps = (span / dt).ceil() as usize;
        let h = span / steps as f64;
        for _ in 0..steps {
            self.step(h, forcing)?;
        }
        Ok(())
    }
}

/// The profile `F` on a full spectral grid; rows `k < 0` are kept as conjugates of `k > 0`.
#[derive(Debug, Clone)]
pub struct LinearProfileState<'p> {
    pub f: SpectralField,
    pub t: f64,
    pub delta_lin: f64,
    modes: Vec<LinearMode<'p>>,
}

impl<'p> LinearProfileState<'p> {
    pub fn new(profile: &'p ShearProfile, grid: &Grid, nu: f64) -> Result<Self> {
        let r = profile.resolution;
        if grid.n_v != r.n_v || (grid.l_v - r.l_v).abs() > 1e-12 * r.l_v {
            return Err(Error::Dimension {
                expected: format!("n_v = {}, L_v = {}", r.n_v, r.l_v),
                got: format!("n_v = {}, L_v = {}", grid.n_v, grid.l_v),
            });
        }
        let kmax = (grid.n_z / 2) as i64 - 1;
        let modes = (1..=kmax)
            .map(|k| LinearMode::new(profile, k, nu))
            .collect::<Result<Vec<_>>>()?;
        Ok(LinearProfileState {
            f: SpectralField::zeros(grid),
            t: 0.0,
            delta_lin: DEFAULT_DELTA_LIN,
            modes,
        })
    }

    /// Advances every mode by `dt` with forcing `Omega*(t)` read from `omega_star`.
    pub fn step_f(
        &mut self,
        dt: f64,
        omega_star: &(dyn Fn(f64) -> SpectralField + Sync),
    ) -> Result<()> {
        let g = self.f.grid;
        self.modes.par_iter_mut().try_for_each(|m| {
            let row = g.k_index(m.k).expect("mode on grid");
            let forcing = |t: f64| omega_star(t).coeffs.row(row).to_owned();
            m.step(dt, &forcing)
        })?;
        self.t += dt;
        let n = g.n_v;
        let mut coeffs = Array2::<Complex64>::zeros(g.shape());
        for m in &self.modes {
            let (ip, im) = (g.k_index(m.k).unwrap(), g.k_index(-m.k).unwrap());
            for j in 0..n {
                coeffs[(ip, j)] = m.f[j];
                coeffs[(im, (n - j) % n)] = m.f[j].conj();
            }
        }
        self.f = SpectralField {
            grid: g,
            coeffs,
            reality_flag: true,
        };
        Ok(())
    }
}

// 8th-order central differences; index = distance from the centre.
const D2: [f64; 5] = [
    -205.0 / 72.0,
    8.0 / 5.0,
    -1.0 / 5.0,
    8.0 / 315.0,
    -1.0 / 560.0,
];
const D1: [f64; 5] = [0.0, 4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
const HALF_STENCIL: usize = 4;

/// The coupled `(U, T)` system in `r` at fixed `w`, discretized on the lattice nodes
/// `v_p = v0 + p h` of a window outside which `B0 = 1`, `B0' = 0`.
///
/// `U` vanishes beyond the window; `T` continues as `exp(-k |r|)`, which is exact there
/// once `U` has decayed.
#[derive(Debug, Clone)]
pub struct ResolventColumn {
    pub b0: Vec<f64>,
    pub b0p: Vec<f64>,
    pub v0: f64,
    pub h: f64,
    pub k: f64,
    pub eps: f64,
    pub c: f64,
}

impl ResolventColumn {
    pub fn len(&self) -> usize {
        self.b0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b0.is_empty()
    }

    pub fn factor(&self, w: f64) -> Result<BandedLu> {
        let np = self.len();
        if np <= 2 * HALF_STENCIL {
            return Err(Error::InvalidParameter(
                "resolvent window is too short".into(),
            ));
        }
        let bw = 2 * HALF_STENCIL;
        let mut m = BandMatrix::zeros(2 * np, bw, bw);
        let (h, h2) = (self.h, self.h * self.h);
        for p in 0..np {
            let (b2, bp) = (self.b0[p] * self.b0[p], self.b0p[p]);
            for o in -(HALF_STENCIL as i64)..=(HALF_STENCIL as i64) {
                let a = o.unsigned_abs() as usize;
                let d = b2 * D2[a] / h2 + bp * o.signum() as f64 * D1[a] / h;
                let q = p as i64 + o;
                if q >= 0 && (q as usize) < np {
                    let q = q as usize;
                    m.add(2 * p, 2 * q, Complex64::new(self.eps * d, 0.0));
                    m.add(2 * p + 1, 2 * q + 1, Complex64::new(d, 0.0));
                } else {
                    let (qb, dist) = if q < 0 {
                        (0, (-q) as f64)
                    } else {
                        (np - 1, (q - np as i64 + 1) as f64)
                    };
                    m.add(
                        2 * p + 1,
                        2 * qb + 1,
                        Complex64::new(d * (-self.k * dist * h).exp(), 0.0),
                    );
                }
            }
            let r = self.v0 + h * p as f64 - w;
            m.add(2 * p, 2 * p, Complex64::new(self.c, -r));
            m.add(2 * p, 2 * p + 1, I * bp);
            m.add(2 * p + 1, 2 * p + 1, Complex64::new(-self.k * self.k, 0.0));
            m.add(2 * p + 1, 2 * p, Complex64::new(-1.0, 0.0));
        }
        m.factor()
    }

    /// Solves with right-hand side `rhs` (the `U` equation) using a factorization from [`Self::factor`].
    pub fn solve_factored(
        &self,
        lu: &BandedLu,
        rhs: &[Complex64],
    ) -> (Vec<Complex64>, Vec<Complex64>) {
        let np = self.len();
        let mut b = vec![ZERO; 2 * np];
        for (p, r) in rhs.iter().enumerate() {
            b[2 * p] = *r;
        }
        lu.solve_in_place(&mut b);
        (
            (0..np).map(|p| b[2 * p]).collect(),
            (0..np).map(|p| b[2 * p + 1]).collect(),
        )
    }

    pub fn solve(&self, w: f64, rhs: &[Complex64]) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        if rhs.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len().to_string(),
                got: rhs.len().to_string(),
            });
        }
        if rhs.iter().all(|z| *z == ZERO) {
            return Ok((vec![ZERO; self.len()], vec![ZERO; self.len()]));
        }
        let lu = self.factor(w)?;
        Ok(self.solve_factored(&lu, rhs))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RepresentationOptions {
    /// Gauss-Legendre nodes in `tau`.
    pub tau_nodes: usize,
    /// Lattice refinement of the v-grid for the `r` discretization.
    pub refine: usize,
    /// The `r`-integral runs over `|r| <= r_max` after removing its `1/r` and `1/r^2` tails.
    pub r_max: f64,
    /// Margin added around the non-flat region of `B0`.
    pub margin: f64,
    pub delta_lin: f64,
}

impl Default for RepresentationOptions {
    fn default() -> Self {
        RepresentationOptions {
            tau_nodes: 32,
            refine: 8,
            r_max: 16.0,
            margin: 1.0,
            delta_lin: DEFAULT_DELTA_LIN,
        }
    }
}

/// Lattice of spacing `h = 2L / (n refine)` and the window of nodes where `B0` is not flat.
struct Lattice {
    l: f64,
    h: f64,
    refine: usize,
    /// Window `[lo, hi]` in lattice indices of `[-L, L)`; `None` for Couette.
    window: Option<(usize, usize)>,
    b0: Vec<f64>,
    b0p: Vec<f64>,
}

impl Lattice {
    fn new(profile: &ShearProfile, refine: usize, margin: f64) -> Result<Self> {
        let r = profile.resolution;
        let nf = r.n_v * refine;
        let h = 2.0 * r.l_v / nf as f64;
        if profile.is_couette() {
            return Ok(Lattice {
                l: r.l_v,
                h,
                refine,
                window: None,
                b0: vec![],
                b0p: vec![],
            });
        }
        let vals: Vec<(f64, f64)> = (0..nf)
            .map(|j| {
                let y = y0_of(profile, -r.l_v + h * j as f64);
                let b = profile.b0_derivative(y);
                (b, profile.b0_second_derivative(y))
            })
            .collect();
        let dev = |j: usize| (vals[j].0 - 1.0).abs() + vals[j].1.abs();
        let peak = (0..nf).map(dev).fold(0.0, f64::max);
        let active: Vec<usize> = (0..nf).filter(|&j| dev(j) > FLAT_TOL * peak).collect();
        let Some((&first, &last)) = active.first().zip(active.last()) else {
            return Ok(Lattice {
                l: r.l_v,
                h,
                refine,
                window: None,
                b0: vec![],
                b0p: vec![],
            });
        };
        let pad = (margin / h).ceil() as usize;
        if first < pad || last + pad >= nf {
            return Err(Error::InvalidParameter(
                "the shear is not flat near the box edge; no window for the shifted resolvent"
                    .into(),
            ));
        }
        let (lo, hi) = (first - pad, last + pad);
        Ok(Lattice {
            l: r.l_v,
            h,
            refine,
            window: Some((lo, hi)),
            b0: (lo..=hi).map(|j| vals[j].0).collect(),
            b0p: (lo..=hi).map(|j| vals[j].1).collect(),
        })
    }

    fn v(&self, j: i64) -> f64 {
        -self.l + self.h * j as f64
    }

    fn column(&self, k: f64, eps: f64, c: f64) -> ResolventColumn {
        let (lo, _) = self.window.expect("window");
        ResolventColumn {
            b0: self.b0.clone(),
            b0p: self.b0p.clone(),
            v0: self.v(lo as i64),
            h: self.h,
            k,
            eps,
            c,
        }
    }

    /// Trigonometric interpolant of a v-grid coefficient vector, sampled on the window.
    fn interpolate(&self, coeffs: &Array1<Complex64>) -> Vec<Complex64> {
        let n = coeffs.len();
        let nf = n * self.refine;
        let mut fine = vec![ZERO; nf];
        for (j, c) in coeffs.iter().enumerate() {
            let m = signed_index(j, n);
            if m == -((n / 2) as i64) {
                fine[nf - n / 2] += 0.5 * c;
                fine[n / 2] += 0.5 * c;
            } else {
                fine[m.rem_euclid(nf as i64) as usize] += *c;
            }
        }
        let vals = inverse_1d(&fine);
        let (lo, hi) = self.window.expect("window");
        vals[lo..=hi].to_vec()
    }
}

fn check_eps(nu: f64, k: i64) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidParameter(format!(
            "the resolvent is set up for k >= 1, got {k}"
        )));
    }
    let eps = nu / k as f64;
    if !(eps > 0.0 && eps <= EPS_MAX) {
        return Err(Error::InvalidParameter(format!(
            "eps = nu/k = {eps} outside (0, {EPS_MAX}]"
        )));
    }
    Ok(eps)
}

/// `X_k(tau) = i k Lap0(tau)^{-1} Omega*_k(tau)`.
pub fn forcing_x(
    profile: &ShearProfile,
    k: i64,
    tau: f64,
    omega: &Array1<Complex64>,
) -> Result<Array1<Complex64>> {
    Ok(lap0_inverse(profile, k, tau, omega)? * (I * k as f64))
}

/// Pointwise product of a coefficient vector with `B0'` on the v-grid.
fn times_b0p(profile: &ShearProfile, x: &Array1<Complex64>) -> Array1<Complex64> {
    let xv = inverse_1d(x.as_slice().expect("contiguous"));
    let prod: Vec<Complex64> = xv
        .iter()
        .zip(profile.coef_b0prime.iter())
        .map(|(a, b)| a * *b)
        .collect();
    Array1::from(forward_1d(&prod))
}

/// Per-node data of the tail of `U`: `s / (1 - i r) + p / (1 - i r)^2`, both times `exp(-i k tau r)`.
struct TailData {
    s: Vec<Complex64>,
    p: Vec<Complex64>,
    s_window: Vec<Complex64>,
}

fn tail_data(
    profile: &ShearProfile,
    lat: &Lattice,
    k: i64,
    tau: f64,
    x: &Array1<Complex64>,
    eps: f64,
    c: f64,
) -> Result<TailData> {
    let s_coef = times_b0p(profile, x);
    let q = inverse_1d(lap0_inverse(profile, k, tau, &s_coef)?.as_slice().unwrap());
    let ls = inverse_1d(
        EllipticOperatorSpec::new(Kind::Lap0, profile, tau, k)
            .apply(&s_coef)
            .as_slice()
            .unwrap(),
    );
    let s = inverse_1d(s_coef.as_slice().unwrap());
    let kk = (k * k) as f64;
    let p = (0..s.len())
        .map(|j| (1.0 - c) * s[j] - I * profile.coef_b0prime[j] * q[j] - eps * (ls[j] + kk * s[j]))
        .collect();
    Ok(TailData {
        s,
        p,
        s_window: lat.interpolate(&s_coef),
    })
}

/// `F_k(t)` on the v-grid from the resolvent representation.
pub fn representation_formula(
    profile: &ShearProfile,
    k: i64,
    nu: f64,
    forcing: &ModeForcing,
    t: f64,
    opts: &RepresentationOptions,
) -> Result<Array1<Complex64>> {
    let eps = check_eps(nu, k)?;
    if !(t > 0.0) || opts.tau_nodes == 0 || opts.refine == 0 {
        return Err(Error::InvalidParameter(
            "need t > 0, tau_nodes >= 1 and refine >= 1".into(),
        ));
    }
    let n = profile.resolution.n_v;
    let lat = Lattice::new(profile, opts.refine, opts.margin)?;
    let Some((lo, hi)) = lat.window else {
        return Ok(Array1::zeros(n));
    };
    let (kf, dl) = (k as f64, opts.delta_lin);
    let c = dl * eps.cbrt();
    let a = dl * nu.cbrt() * kf.powf(2.0 / 3.0) + nu * kf * kf;
    let (taus, weights) = gauss_legendre(opts.tau_nodes, 0.0, t);
    let tails = taus
        .iter()
        .map(|&tau| {
            tail_data(
                profile,
                &lat,
                k,
                tau,
                &forcing_x(profile, k, tau, &forcing(tau))?,
                eps,
                c,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let col = lat.column(kf, eps, c);
    let h = lat.h;
    let m_r = (opts.r_max / h).floor() as i64;
    let refine = lat.refine as i64;
    let (lo_i, hi_i) = (lo as i64, hi as i64);
    let j_in_window: Vec<i64> = (0..n as i64)
        .filter(|j| (lo_i..=hi_i).contains(&(j * refine)))
        .collect();
    let nq = taus.len();
    let acc = ((lo_i - m_r)..=(hi_i + m_r))
        .into_par_iter()
        .try_fold(
            || vec![ZERO; nq * n],
            |mut acc, iw| -> Result<Vec<Complex64>> {
                let targets: Vec<i64> = j_in_window
                    .iter()
                    .copied()
                    .filter(|j| (j * refine - iw).abs() <= m_r)
                    .collect();
                if targets.is_empty() {
                    return Ok(acc);
                }
                let w = lat.v(iw);
                let lu = col.factor(w)?;
                let rs: Vec<f64> = (lo_i..=hi_i).map(|jv| h * (jv - iw) as f64).collect();
                for (q, (&tau, td)) in taus.iter().zip(&tails).enumerate() {
                    let rhs: Vec<Complex64> = rs
                        .iter()
                        .zip(&td.s_window)
                        .map(|(r, s)| (-I * kf * tau * r).exp() * s)
                        .collect();
                    let (u, _) = col.solve_factored(&lu, &rhs);
                    for &j in &targets {
                        let p = (j * refine - lo_i) as usize;
                        let r = rs[p];
                        let d = Complex64::new(1.0, -r);
                        let tail = (-I * kf * tau * r).exp()
                            * (td.s[j as usize] / d + td.p[j as usize] / (d * d));
                        acc[q * n + j as usize] += h * (I * kf * t * r).exp() * (u[p] - tail);
                    }
                }
                Ok(acc)
            },
        )
        .try_reduce(
            || vec![ZERO; nq * n],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    let vals: Vec<Complex64> = (0..n)
        .map(|j| {
            (0..nq)
                .map(|q| weights[q] * (-a * (t - taus[q])).exp() * acc[q * n + j])
                .sum::<Complex64>()
                * (-1.0 / (2.0 * PI))
        })
        .collect();
    Ok(Array1::from(forward_1d(&vals)))
}

#[derive(Debug, Clone)]
pub struct CrosscheckReport {
    /// `||F_step - F_rep|| / ||F_step||`, or the absolute difference when `F_step = 0`.
    pub discrepancy: f64,
    pub stepped: Array1<Complex64>,
    pub represented: Array1<Complex64>,
}

pub fn representation_crosscheck(
    profile: &ShearProfile,
    k: i64,
    nu: f64,
    forcing: &ModeForcing,
    t: f64,
    dt: f64,
    opts: &RepresentationOptions,
) -> Result<CrosscheckReport> {
    let mut mode = LinearMode::new(profile, k, nu)?;
    mode.run_to(t, dt, forcing)?;
    let rep = representation_formula(profile, k, nu, forcing, t, opts)?;
    let norm = |x: &Array1<Complex64>| x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let diff = norm(&(&mode.f - &rep));
    let base = norm(&mode.f);
    let discrepancy = if base > 0.0 { diff / base } else { diff };
    Ok(CrosscheckReport {
        discrepancy,
        stepped: mode.f,
        represented: rep,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct DecayCheck {
    /// Averaged decay rate of the unforced evolution over `[0, t_end]`.
    pub measured: f64,
    /// `delta_lin nu^{1/3} k^{2/3} + nu k^2`.
    pub assumed: f64,
}

impl DecayCheck {
    pub fn holds(&self) -> bool {
        self.measured >= self.assumed
    }
}

/// Compares the exponential factor of the representation with the decay of the unforced
/// evolution from `f0`.
pub fn decay_check(
    profile: &ShearProfile,
    k: i64,
    nu: f64,
    f0: Array1<Complex64>,
    t_end: f64,
    dt: f64,
    delta_lin: f64,
) -> Result<DecayCheck> {
    let n0 = f0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut mode = LinearMode::with_initial(profile, k, nu, f0)?;
    let n = profile.resolution.n_v;
    let zero = move |_: f64| Array1::<Complex64>::zeros(n);
    mode.run_to(t_end, dt, &zero)?;
    let n1 = mode.f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let kf = k as f64;
    Ok(DecayCheck {
        measured: -(n1 / n0).ln() / t_end,
        assumed: delta_lin * nu.cbrt() * kf.powf(2.0 / 3.0) + nu * kf * kf,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct EnvelopeReport {
    pub eps: f64,
    /// `|| <k,eta>^s <k,eta - k tau> sup_xi |U^(xi, eta)| ||_{L^2_eta}`
    pub lhs: f64,
    /// `|| <k,xi>^s <k,xi - k tau> X^(xi) ||_{L^2_xi}`
    pub rhs: f64,
    pub ratio: f64,
}

/// Frequency envelope of `U_tau` on the tensor lattice `|r| <= r_max`, `r + w` in the window.
pub fn shift_envelope(
    profile: &ShearProfile,
    k: i64,
    nu: f64,
    tau: f64,
    x: &Array1<Complex64>,
    s: f64,
    opts: &RepresentationOptions,
) -> Result<EnvelopeReport> {
    let eps = check_eps(nu, k)?;
    let res = profile.resolution;
    let n = res.n_v;
    if x.len() != n {
        return Err(Error::Dimension {
            expected: n.to_string(),
            got: x.len().to_string(),
        });
    }
    let kf = k as f64;
    let rhs = {
        let dxi = PI / res.l_v;
        let sum: f64 = x
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let xi = eta_of(j, n, res.l_v);
                (bracket(kf, xi, s) * bracket(kf, xi - kf * tau, 1.0) * 2.0 * res.l_v * c.norm())
                    .powi(2)
            })
            .sum();
        (dxi * sum).sqrt()
    };
    let lat = Lattice::new(profile, opts.refine, opts.margin)?;
    let Some((lo, hi)) = lat.window else {
        return Ok(EnvelopeReport {
            eps,
            lhs: 0.0,
            rhs,
            ratio: 0.0,
        });
    };
    let c = opts.delta_lin * eps.cbrt();
    let col = lat.column(kf, eps, c);
    let s_window = lat.interpolate(&times_b0p(profile, x));
    let h = lat.h;
    let m_r = (opts.r_max / h).floor() as i64;
    let (lo_i, hi_i) = (lo as i64, hi as i64);
    let n_r = (2 * m_r + 1) as usize;
    let ws: Vec<i64> = ((lo_i - m_r)..=(hi_i + m_r)).collect();
    let rows = ws
        .par_iter()
        .map(|&iw| -> Result<Vec<Complex64>> {
            let w = lat.v(iw);
            let rhs: Vec<Complex64> = (lo_i..=hi_i)
                .zip(&s_window)
                .map(|(jv, sv)| (-I * kf * tau * h * (jv - iw) as f64).exp() * sv)
                .collect();
            let (u, _) = col.solve(w, &rhs)?;
            let mut row = vec![ZERO; n_r];
            for (p, up) in u.iter().enumerate() {
                let m = lo_i + p as i64 - iw;
                if m.abs() <= m_r {
                    row[(m + m_r) as usize] = *up * h * h;
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let n_w = ws.len();
    let mut planner = FftPlanner::<f64>::new();
    let fr = planner.plan_fft_forward(n_r);
    let fw = planner.plan_fft_forward(n_w);
    let mut grid = Array2::<Complex64>::zeros((n_w, n_r));
    for (i, mut row) in rows.into_iter().enumerate() {
        fr.process(&mut row);
        grid.row_mut(i).assign(&Array1::from(row));
    }
    let mut sup = vec![0.0_f64; n_w];
    for a in 0..n_r {
        let mut colv: Vec<Complex64> = grid.column(a).to_vec();
        fw.process(&mut colv);
        for (sv, z) in sup.iter_mut().zip(&colv) {
            *sv = sv.max(z.norm());
        }
    }
    let deta = 2.0 * PI / (n_w as f64 * h);
    let sum: f64 = sup
        .iter()
        .enumerate()
        .map(|(b, sv)| {
            let eta = deta * signed_index(b, n_w) as f64;
            (bracket(kf, eta, s) * bracket(kf, eta - kf * tau, 1.0) * sv).powi(2)
        })
        .sum();
    let lhs = (deta * sum).sqrt();
    Ok(EnvelopeReport {
        eps,
        lhs,
        rhs,
        ratio: lhs / rhs,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct LinearBounds {
    /// `sup_t ||A F|| / ||A (-Lap_L)^{-1/2} Omega*||_{L^2_t}`
    pub linpro3: f64,
    /// `sup_t ||<t>^{-1} A (-Lap_L)^{1/2} F||` over the same denominator.
    pub linpro3_4: f64,
    /// `||k (-Lap_L)^{-1/2} A F||_{L^2_t}` over the same denominator.
    pub linpro3_5: f64,
    /// `sup ||k A F|| + sup ||<t>^{-1} k A F|| + ||k A sqrt(-d_t W_I / W_I) F||_{L^2_t}` over
    /// `||A sqrt(-d_t W_I / W_I) Omega*||_{L^2_t}`.
    pub wi: f64,
    /// `sup_t ||A F||` over `||A sqrt(-d_t W_I / W_I) Omega*||_{L^2_t}`.
    pub ck: f64,
}

/// Ratios of the linear-profile norms to the forcing norms for one mode over `[0, t_end]`.
/// Norms are coefficient `l^2` sums; time integrals use the trapezoid rule on `samples` times.
pub fn linear_bounds_constants(
    profile: &ShearProfile,
    k: i64,
    nu: f64,
    forcing: &ModeForcing,
    t_end: f64,
    dt: f64,
    s: f64,
    samples: usize,
) -> Result<LinearBounds> {
    let spec = MultiplierSpec::with_defaults(nu, s)?;
    let mut mode = LinearMode::new(profile, k, nu)?;
    let (n, l) = (profile.resolution.n_v, profile.resolution.l_v);
    let kf = k as f64;
    let samples = samples.max(2);
    let mut sup3 = 0.0_f64;
    let mut sup34 = 0.0_f64;
    let mut sup_k = 0.0_f64;
    let mut sup_kt = 0.0_f64;
    let mut prev: Option<(f64, [f64; 4])> = None;
    let mut ints = [0.0_f64; 4];
    for i in 0..samples {
        let t = t_end * i as f64 / (samples - 1) as f64;
        mode.run_to(t, dt, forcing)?;
        let om = forcing(t);
        let mut d = [0.0_f64; 4];
        let (mut a_f, mut a_grad) = (0.0, 0.0);
        for j in 0..n {
            let eta = eta_of(j, n, l);
            let w = weight_sqr(&spec, t, kf, eta, Extra::One);
            let ck = weight_sqr(&spec, t, kf, eta, Extra::Ck(Which::I));
            let lap = kf * kf + (eta - kf * t).powi(2);
            let (f2, o2) = (mode.f[j].norm_sqr(), om[j].norm_sqr());
            a_f += w * f2;
            a_grad += w * lap * f2;
            d[0] += w * o2 / lap;
            d[1] += ck * o2;
            d[2] += kf * kf * w * f2 / lap;
            d[3] += kf * kf * ck * f2;
        }
        let bt2 = 1.0 + t * t;
        sup3 = sup3.max(a_f);
        sup34 = sup34.max(a_grad / bt2);
        sup_k = sup_k.max(kf * kf * a_f);
        sup_kt = sup_kt.max(kf * kf * a_f / bt2);
        if let Some((tp, dp)) = prev {
            for q in 0..4 {
                ints[q] += 0.5 * (t - tp) * (d[q] + dp[q]);
            }
        }
        prev = Some((t, d));
    }
    let den3 = ints[0].sqrt();
    let den_ck = ints[1].sqrt();
    if !(den3 > 0.0 && den_ck > 0.0) {
        return Err(Error::InvalidParameter(
            "forcing has zero norm on [0, t_end]".into(),
        ));
    }
    Ok(LinearBounds {
        linpro3: sup3.sqrt() / den3,
        linpro3_4: sup34.sqrt() / den3,
        linpro3_5: ints[2].sqrt() / den3,
        wi: (sup_k.sqrt() + sup_kt.sqrt() + ints[3].sqrt()) / den_ck,
        ck: sup3.sqrt() / den_ck,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::ProfileResolution;

    #[test]
    fn couette_mode_is_exact_heat_factor() {
        let p = ShearProfile::couette(1e-2, ProfileResolution::for_v_box(64, 8.0)).unwrap();
        let f0 = Array1::from_shape_fn(64, |j| Complex64::new(1.0 / (1.0 + j as f64), 0.5));
        let mut m = LinearMode::with_initial(&p, 2, 1e-2, f0.clone()).unwrap();
        let f = |_: f64| Array1::from_elem(64, Complex64::new(1.0, 0.0));
        m.run_to(3.0, 0.1, &f).unwrap();
        for j in 0..64 {
            let eta = eta_of(j, 64, 8.0);
            let e = (-1e-2 * dissipation_exponent(2.0, eta, 3.0)).exp();
            assert!((m.f[j] - f0[j] * e).norm() < 1e-13);
        }
    }

    #[test]
    fn rejects_nonpositive_k_and_large_eps() {
        let p = ShearProfile::couette(1e-3, ProfileResolution::for_v_box(32, 8.0)).unwrap();
        assert!(LinearMode::new(&p, 0, 1e-3).is_err());
        assert!(check_eps(0.5, 1).is_err());
        assert!(check_eps(1e-3, 1).is_ok());
    }

    #[test]
    fn lattice_interpolation_reproduces_grid_values() {
        let p = ShearProfile::from_spec(
            "gevrey-bump:0.2,1.0",
            1e-3,
            ProfileResolution::for_v_box(256, 10.0),
        )
        .unwrap();
        let lat = Lattice::new(&p, 4, 1.0).unwrap();
        let (lo, _) = lat.window.unwrap();
        let vals: Vec<Complex64> = (0..256)
            .map(|j| Complex64::new((0.3 * j as f64).sin(), 0.0))
            .collect();
        let fine = lat.interpolate(&Array1::from(forward_1d(&vals)));
        for (p_, z) in fine.iter().enumerate() {
            let jf = lo + p_;
            if jf % 4 == 0 {
                assert!((z - vals[jf / 4]).norm() < 1e-12);
            }
        }
    }
}
