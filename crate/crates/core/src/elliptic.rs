//! Per-mode elliptic operators of the moving frame and their inversion.
//!
//! Per-k data are coefficient vectors in `eta` (FFT order) on the profile's v-grid. With
//! `D = d_v - i k t` the kinds are
//!
//! | kind | operator |
//! |------|----------|
//! | `LapL` | `D^2 - k^2` |
//! | `LapT` | `B^2 D^2 + B' D - k^2` |
//! | `LapTilde` | `B^2 D^2 - k^2` |
//! | `Lap0` | `B0^2 D^2 + B0' D - k^2` |
//! | `LapB0` | `B0^2 d_v^2 + B0' d_v - k^2` |
//!
//! `B, B'` are taken from the profile at its current time; `t` only sets the tilt.

use nalgebra::{DMatrix, DVector};
use ndarray::Array1;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{dv_1d, forward_1d, inverse_1d, signed_index};
use crate::multipliers::bracket;
use crate::numerics::gauss_legendre;
use crate::profile::ShearProfile;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    LapL,
    LapT,
    LapTilde,
    Lap0,
    LapB0,
}

#[derive(Debug, Clone, Copy)]
pub struct EllipticOperatorSpec<'a> {
    pub kind: Kind,
    pub profile: &'a ShearProfile,
    pub t: f64,
    pub k: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Direct,
    Neumann,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Array1<Complex64>,
    /// Estimated contraction ratio of the Neumann remainder (Neumann only).
    pub gamma_hat: Option<f64>,
    /// Number of Neumann terms summed (Neumann only).
    pub terms: Option<usize>,
    /// Weighted norms of the successive terms `R^n X` (Neumann only).
    pub term_norms: Vec<f64>,
}

impl<'a> EllipticOperatorSpec<'a> {
    pub fn new(kind: Kind, profile: &'a ShearProfile, t: f64, k: i64) -> Self {
        EllipticOperatorSpec {
            kind,
            profile,
            t,
            k,
        }
    }

    fn n(&self) -> usize {
        self.profile.resolution.n_v
    }

    fn l_v(&self) -> f64 {
        self.profile.resolution.l_v
    }

    fn eta(&self, j: usize) -> f64 {
        std::f64::consts::PI / self.l_v() * signed_index(j, self.n()) as f64
    }

    /// Symbol of `D` (or `d_v` for `LapB0`) on coefficient `j`.
    fn d_symbol(&self, j: usize) -> Complex64 {
        let shift = if self.kind == Kind::LapB0 {
            0.0
        } else {
            self.k as f64 * self.t
        };
        I * (self.eta(j) - shift)
    }

    /// Variable coefficients `(c2, c1)` multiplying `D^2` and `D`, or `None` when both are constant `(1, 0)`.
    fn coefficients(&self) -> Option<(Array1<f64>, Array1<f64>)> {
        let p = self.profile;
        if p.is_couette() || self.kind == Kind::LapL {
            return None;
        }
        let (b, bp) = match self.kind {
            Kind::LapT | Kind::LapTilde => (&p.coef_b, &p.coef_bprime),
            _ => (&p.coef_b0, &p.coef_b0prime),
        };
        let c2 = b.mapv(|x| x * x);
        let c1 = if self.kind == Kind::LapTilde {
            Array1::zeros(b.len())
        } else {
            bp.clone()
        };
        Some((c2, c1))
    }

    /// Constant-coefficient symbol, used when the coefficients are trivial.
    fn flat_symbol(&self, j: usize) -> Complex64 {
        let d = self.d_symbol(j);
        d * d - (self.k * self.k) as f64
    }

    /// Applies the operator to a coefficient vector.
    pub fn apply(&self, x: &Array1<Complex64>) -> Array1<Complex64> {
        let n = self.n();
        match self.coefficients() {
            None => Array1::from_shape_fn(n, |j| self.flat_symbol(j) * x[j]),
            Some((c2, c1)) => {
                let d1: Vec<Complex64> = (0..n).map(|j| self.d_symbol(j) * x[j]).collect();
                let d2: Vec<Complex64> = (0..n).map(|j| self.d_symbol(j) * d1[j]).collect();
                let p1 = inverse_1d(&d1);
                let p2 = inverse_1d(&d2);
                let prod: Vec<Complex64> = (0..n).map(|j| p2[j] * c2[j] + p1[j] * c1[j]).collect();
                let f = forward_1d(&prod);
                let kk = (self.k * self.k) as f64;
                Array1::from_shape_fn(n, |j| f[j] - kk * x[j])
            }
        }
    }

    /// Dense matrix of the operator in coefficient space.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        let n = self.n();
        let mut m = DMatrix::<Complex64>::zeros(n, n);
        let mut e = Array1::<Complex64>::zeros(n);
        for j in 0..n {
            e[j] = Complex64::new(1.0, 0.0);
            let col = self.apply(&e);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
            e[j] = Complex64::new(0.0, 0.0);
        }
        m
    }

    fn check(&self, rhs: &Array1<Complex64>) -> Result<()> {
        if self.k == 0 {
            return Err(Error::DegenerateSymbol(
                "elliptic inversion needs k != 0; use zero_mode_velocity for k = 0".into(),
            ));
        }
        if rhs.len() != self.n() {
            return Err(Error::Dimension {
                expected: self.n().to_string(),
                got: rhs.len().to_string(),
            });
        }
        Ok(())
    }

    fn direct(&self, rhs: &Array1<Complex64>) -> Result<Array1<Complex64>> {
        if self.coefficients().is_none() {
            return Ok(Array1::from_shape_fn(self.n(), |j| {
                rhs[j] / self.flat_symbol(j)
            }));
        }
        let lu = self.matrix().lu();
        let b = DVector::from_iterator(self.n(), rhs.iter().copied());
        let x = lu
            .solve(&b)
            .ok_or_else(|| Error::Singular(format!("{:?} at k = {}", self.kind, self.k)))?;
        Ok(Array1::from_iter(x.iter().copied()))
    }
}

/// Weighted norm `||<k, xi>^s M X^||` of a coefficient vector, `M = 1` or `(k^2 + (xi - kt)^2)^{-1/2}`.
pub fn weighted_norm_1d(x: &Array1<Complex64>, k: i64, t: f64, l_v: f64, s: f64, m: MTag) -> f64 {
    let n = x.len();
    let kf = k as f64;
    x.iter()
        .enumerate()
        .map(|(j, c)| {
            let xi = std::f64::consts::PI / l_v * signed_index(j, n) as f64;
            let w = bracket(kf, xi, s)
                * match m {
                    MTag::One => 1.0,
                    MTag::InvGrad => 1.0 / (kf * kf + (xi - kf * t).powi(2)).sqrt(),
                };
            w * w * c.norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MTag {
    One,
    /// `(k^2 + (xi - k t)^2)^{-1/2}`
    InvGrad,
}

/// Regularity used for the Neumann contraction norm.
pub const NEUMANN_S: f64 = 2.0;
pub const NEUMANN_TOL: f64 = 1e-14;
pub const NEUMANN_MAX_TERMS: usize = 200;

/// Solves `spec(x) = rhs` for `k != 0`.
///
/// `Neumann` requires `kind = LapT` and expands `Delta_t^{-1} = Delta_0^{-1} sum R^n` with
/// `R = ((B0^2 - B^2) D^2 + (B0' - B') D) Delta_0^{-1}`.
pub fn solve(
    spec: &EllipticOperatorSpec,
    rhs: &Array1<Complex64>,
    method: Method,
) -> Result<Solution> {
    spec.check(rhs)?;
    match method {
        Method::Direct => Ok(Solution {
            x: spec.direct(rhs)?,
            gamma_hat: None,
            terms: None,
            term_norms: vec![],
        }),
        Method::Neumann => neumann(spec, rhs),
    }
}

fn neumann(spec: &EllipticOperatorSpec, rhs: &Array1<Complex64>) -> Result<Solution> {
    if spec.kind != Kind::LapT {
        return Err(Error::InvalidParameter(
            "the Neumann path inverts Delta_t only".into(),
        ));
    }
    let p = spec.profile;
    let n = spec.n();
    let l0 = EllipticOperatorSpec {
        kind: Kind::Lap0,
        ..*spec
    };
    let norm = |x: &Array1<Complex64>| {
        weighted_norm_1d(x, spec.k, spec.t, spec.l_v(), NEUMANN_S, MTag::One)
    };
    if p.is_couette() {
        let x = l0.direct(rhs)?;
        return Ok(Solution {
            x,
            gamma_hat: Some(0.0),
            terms: Some(1),
            term_norms: vec![norm(rhs)],
        });
    }
    let dc2: Array1<f64> = &p.coef_b0.mapv(|b| b * b) - &p.coef_b.mapv(|b| b * b);
    let dc1: Array1<f64> = &p.coef_b0prime - &p.coef_bprime;
    let lu = l0.matrix().lu();
    let inv0 = |x: &Array1<Complex64>| -> Result<Array1<Complex64>> {
        let b = DVector::from_iterator(n, x.iter().copied());
        let y = lu
            .solve(&b)
            .ok_or_else(|| Error::Singular("Delta_0".into()))?;
        Ok(Array1::from_iter(y.iter().copied()))
    };
    let apply_r = |x: &Array1<Complex64>| -> Result<Array1<Complex64>> {
        let y = inv0(x)?;
        let d1: Vec<Complex64> = (0..n).map(|j| spec.d_symbol(j) * y[j]).collect();
        let d2: Vec<Complex64> = (0..n).map(|j| spec.d_symbol(j) * d1[j]).collect();
        let p1 = inverse_1d(&d1);
        let p2 = inverse_1d(&d2);
        let prod: Vec<Complex64> = (0..n).map(|j| p2[j] * dc2[j] + p1[j] * dc1[j]).collect();
        Ok(Array1::from(forward_1d(&prod)))
    };
    let mut term = rhs.clone();
    let mut sum = rhs.clone();
    let mut norms = vec![norm(&term)];
    let mut gamma: f64 = 0.0;
    let mut terms = 1;
    while terms < NEUMANN_MAX_TERMS {
        term = apply_r(&term)?;
        let tn = norm(&term);
        let prev = *norms.last().unwrap();
        norms.push(tn);
        terms += 1;
        if prev > 0.0 {
            gamma = gamma.max(tn / prev);
        }
        if terms >= 3 && gamma >= 1.0 {
            return Err(Error::NeumannDivergence { gamma });
        }
        sum += &term;
        if tn <= NEUMANN_TOL * norms[0] {
            break;
        }
    }
    if terms >= NEUMANN_MAX_TERMS {
        return Err(Error::NeumannDivergence { gamma });
    }
    Ok(Solution {
        x: inv0(&sum)?,
        gamma_hat: Some(gamma),
        terms: Some(terms),
        term_norms: norms,
    })
}

/// Zero-mode velocity from `-B d_v U = Omega_0` in the zero-mean gauge.
///
/// On the periodic box the right side is first projected to make `Omega_0 / B` mean-free
/// (the solvability condition); the removed mean is returned alongside.
pub fn zero_mode_velocity(
    b: &Array1<f64>,
    omega0: &Array1<Complex64>,
    l_v: f64,
) -> (Array1<Complex64>, Complex64) {
    let n = b.len();
    let samples = inverse_1d(omega0.as_slice().unwrap());
    let q: Vec<Complex64> = samples
        .iter()
        .zip(b.iter())
        .map(|(w, bb)| -w / bb)
        .collect();
    let mut qc = forward_1d(&q);
    let mean = qc[0];
    qc[0] = Complex64::new(0.0, 0.0);
    let u = Array1::from_shape_fn(n, |j| {
        let m = signed_index(j, n);
        if m == 0 || m == -((n / 2) as i64) {
            Complex64::new(0.0, 0.0)
        } else {
            qc[j] / (I * (std::f64::consts::PI / l_v * m as f64))
        }
    });
    (u, -mean)
}

/// Relative residual `||spec(x) - rhs|| / ||rhs||`.
pub fn residual(
    spec: &EllipticOperatorSpec,
    x: &Array1<Complex64>,
    rhs: &Array1<Complex64>,
) -> f64 {
    let r = &spec.apply(x) - rhs;
    let rn: f64 = r.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let bn: f64 = rhs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if bn == 0.0 {
        rn
    } else {
        rn / bn
    }
}

/// Green's function of `Delta_{B0}` with its split `G = chi(w) G1(v - w) + G2`.
#[derive(Debug, Clone)]
pub struct GreensKernel {
    pub k: i64,
    /// Grid points `v_i` (rows) = `w_j` (columns).
    pub v: Array1<f64>,
    /// `G_k(v_i, w_j) = exp(-|k| |y(v_i) - y(w_j)|) / |k|`, `y = b^{-1}(0, .)`.
    pub g: DMatrix<f64>,
    pub chi: Array1<f64>,
    pub g2: DMatrix<f64>,
    /// Measured support radius of `d_v B0`.
    pub l_b: f64,
}

/// `G1(r) = exp(-|k||r|)/|k|`.
pub fn g1(k: i64, r: f64) -> f64 {
    let ka = k.unsigned_abs() as f64;
    (-ka * r.abs()).exp() / ka
}

/// Smooth cutoff equal to 1 (to round-off) on `[-inner, inner]` and 0 (to round-off) beyond
/// `inner + width`, with an erfc transition.
pub fn cutoff(v: f64, inner: f64, width: f64) -> f64 {
    0.5 * libm::erfc(12.0 * (v.abs() - inner) / width - 6.0)
}

fn support_radius_dvb0(p: &ShearProfile) -> f64 {
    let r = p.resolution;
    let d = dv_1d(&p.coef_b0, r.l_v);
    let mx = d.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    if mx == 0.0 {
        return 0.0;
    }
    p.v_points()
        .iter()
        .zip(d.iter())
        .filter(|(_, dd)| dd.abs() > 1e-10 * mx)
        .map(|(v, _)| v.abs())
        .fold(0.0, f64::max)
}

/// Cutoff parameters `(inner, width)` of `chi`: inner edge `1 + L_B`, transition of width 2,
/// shrunk if needed to end inside 0.9 of the box.
fn chi_params(p: &ShearProfile) -> (f64, f64, f64) {
    let l_b = support_radius_dvb0(p);
    let inner = 1.0 + l_b;
    let width = 2.0_f64.min((0.9 * p.resolution.l_v - inner).max(0.25));
    (inner, width, l_b)
}

pub(crate) fn y0_of(p: &ShearProfile, v: f64) -> f64 {
    // Newton on b(0, y) = v from the identity guess; used off the stored grid.
    let mut y = v;
    for _ in 0..60 {
        let (b, db) = b0_and_derivative(p, y);
        let step = (b - v) / db;
        y -= step;
        if step.abs() < 1e-15 * (1.0 + y.abs()) {
            break;
        }
    }
    y
}

fn b0_and_derivative(p: &ShearProfile, y: f64) -> (f64, f64) {
    if p.is_couette() {
        return (y, 1.0);
    }
    debug_assert!(p.t == 0.0);
    let (b, db, _) = p.eval_b(y);
    (b, db)
}

pub fn greens_kernel(profile: &ShearProfile, k: i64) -> Result<GreensKernel> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "Green's function needs k != 0".into(),
        ));
    }
    let p0 = if profile.t == 0.0 {
        profile.clone()
    } else {
        profile.at_time(0.0)?
    };
    let v = p0.v_points();
    let n = v.len();
    let y = &p0.y_of_v;
    let (inner, width, l_b) = chi_params(&p0);
    let chi = v.mapv(|w| {
        if p0.is_couette() {
            1.0
        } else {
            cutoff(w, inner, width)
        }
    });
    let ka = k.unsigned_abs() as f64;
    let g = DMatrix::from_fn(n, n, |i, j| (-ka * (y[i] - y[j]).abs()).exp() / ka);
    let g2 = DMatrix::from_fn(n, n, |i, j| g[(i, j)] - chi[j] * g1(k, v[i] - v[j]));
    Ok(GreensKernel {
        k,
        v,
        g,
        chi,
        g2,
        l_b,
    })
}

/// Weak-form residual of the Green's equation,
/// `max_w |int G(v,w) (L* psi)(v) dv + 2 B0(w) psi(w)| / max_w |2 B0(w) psi(w)|`,
/// with `L* psi = d_v^2(B0^2 psi) - d_v(B0' psi) - k^2 psi` and Gaussian test functions.
pub fn greens_weak_residual(
    profile: &ShearProfile,
    k: i64,
    n_tests: usize,
    n_w: usize,
) -> Result<f64> {
    let p0 = if profile.t == 0.0 {
        profile.clone()
    } else {
        profile.at_time(0.0)?
    };
    let r = p0.resolution;
    let l = r.l_v;
    let vgrid = p0.v_points();
    let ka = k.unsigned_abs() as f64;
    let b0 = &p0.coef_b0;
    let b0p = &p0.coef_b0prime;
    let mut worst_num = 0.0_f64;
    let mut worst_den = 0.0_f64;
    let (gx, gw) = gauss_legendre(16, 0.0, 1.0);
    for t in 0..n_tests {
        let c = -0.3 * l + 0.6 * l * (t as f64 + 0.5) / n_tests as f64;
        let sig = 0.8 + 0.2 * t as f64;
        let psi = vgrid.mapv(|v| (-(v - c) * (v - c) / (2.0 * sig * sig)).exp());
        let a: Array1<f64> = &psi * &b0.mapv(|b| b * b);
        let d2a = dv_1d(&dv_1d(&a, l), l);
        let d1 = dv_1d(&(&psi * b0p), l);
        let lstar: Array1<f64> = &d2a - &d1 - &psi.mapv(|x| ka * ka * x);
        let series = forward_1d(
            &lstar
                .iter()
                .map(|&x| Complex64::new(x, 0.0))
                .collect::<Vec<_>>(),
        );
        let eval = |v: f64| -> f64 {
            let n = series.len();
            let mut s = series[0].re;
            for m in 1..n / 2 {
                let eta = std::f64::consts::PI / l * m as f64;
                s += 2.0 * (series[m] * Complex64::from_polar(1.0, eta * v)).re;
            }
            s
        };
        for iw in 0..n_w {
            let w = -0.5 * l + l * (iw as f64 + 0.5) / n_w as f64;
            let yw = y0_of(&p0, w);
            let mut integral = 0.0;
            let panels = 64;
            for (a0, a1) in [(-l, w), (w, l)] {
                let hp = (a1 - a0) / panels as f64;
                for pn in 0..panels {
                    for (x, wt) in gx.iter().zip(&gw) {
                        let v = a0 + hp * (pn as f64 + x);
                        let gv = (-ka * (y0_of(&p0, v) - yw).abs()).exp() / ka;
                        integral += hp * wt * gv * eval(v);
                    }
                }
            }
            let b0w = p0.b0_derivative(yw);
            let psiw = (-(w - c) * (w - c) / (2.0 * sig * sig)).exp();
            worst_num = worst_num.max((integral + 2.0 * b0w * psiw).abs());
            worst_den = worst_den.max((2.0 * b0w * psiw).abs());
        }
    }
    Ok(worst_num / worst_den)
}

/// Fitted constants of the frequency bounds
/// `|G1^(xi)| <= C1/(k^2+xi^2)` and `|h^(xi, zeta)| <= C2/((k^2+xi^2) <zeta>^{ceil(s)+2})`,
/// where `h(r, w) = chi_L(w + r) G2(w + r, w) chi_L(w)` is `G2` in `(r = v - w, w)` coordinates
/// localized by a wide cutoff `chi_L` (1 on half the box, 0 beyond 0.9 of it).
///
/// The sup in `xi` runs over the lowest quarter of the resolved band: near the Nyquist
/// frequency the `|r|` kink aliases and inflates the ratio by up to `pi^2 / 4`. Coefficients
/// below `GREENS_NOISE_FLOOR` times the peak are round-off and are skipped.
#[derive(Debug, Clone, Copy)]
pub struct GreensBounds {
    pub c1: f64,
    pub c2: f64,
}

pub const GREENS_NOISE_FLOOR: f64 = 1e-12;

pub fn greens_frequency_bounds(profile: &ShearProfile, k: i64, s: f64) -> Result<GreensBounds> {
    let p0 = if profile.t == 0.0 {
        profile.clone()
    } else {
        profile.at_time(0.0)?
    };
    let r = p0.resolution;
    let n = r.n_v;
    let l = r.l_v;
    let h = 2.0 * l / n as f64;
    let ka = k.unsigned_abs() as f64;
    let (inner, width, _) = chi_params(&p0);
    let chi = |w: f64| {
        if p0.is_couette() {
            1.0
        } else {
            cutoff(w, inner, width)
        }
    };
    let wide = |v: f64| cutoff(v, 0.5 * l, 0.4 * l);
    // G1 on the doubled r-box [-2L, 2L)
    let nr = 2 * n;
    let r_pts: Vec<f64> = (0..nr).map(|i| -2.0 * l + h * i as f64).collect();
    let g1s: Vec<Complex64> = r_pts
        .iter()
        .map(|&rr| Complex64::new(g1(k, rr), 0.0))
        .collect();
    let g1h = forward_1d(&g1s);
    let in_band = |m: usize| signed_index(m, nr).unsigned_abs() < (nr / 8) as u64;
    let c1 = (0..nr)
        .filter(|&m| in_band(m))
        .map(|m| {
            let xi = std::f64::consts::PI / (2.0 * l) * signed_index(m, nr) as f64;
            g1h[m].norm() * 4.0 * l * (ka * ka + xi * xi)
        })
        .fold(0.0, f64::max);
    // y(v) on the lattice v = -3L + j h, where w = -L + iw h sits at j = iw + n and w + r at iw + ir
    let nl = 3 * n + 1;
    let ylat: Vec<f64> = (0..nl)
        .map(|j| {
            let v = -3.0 * l + h * j as f64;
            if wide(v) > 0.0 {
                y0_of(&p0, v)
            } else {
                f64::NAN
            }
        })
        .collect();
    let power = s.ceil() + 2.0;
    let mut hmat = vec![Complex64::new(0.0, 0.0); nr * n];
    for iw in 0..n {
        let w = -l + h * iw as f64;
        let jw = iw + n;
        for ir in 0..nr {
            let rr = r_pts[ir];
            let v = w + rr;
            let cut = wide(v) * wide(w);
            if cut == 0.0 {
                continue;
            }
            let g = (-ka * (ylat[iw + ir] - ylat[jw]).abs()).exp() / ka;
            let g2 = g - chi(w) * g1(k, rr);
            hmat[ir * n + iw] = Complex64::new(cut * g2, 0.0);
        }
    }
    // 2D transform: rows r (nr), columns w (n)
    let rows: Vec<Vec<Complex64>> = (0..nr)
        .map(|ir| forward_1d(&hmat[ir * n..(ir + 1) * n]))
        .collect();
    let mut col = vec![Complex64::new(0.0, 0.0); nr];
    let mut spectrum = Vec::with_capacity(nr * n);
    for jz in 0..n {
        for ir in 0..nr {
            col[ir] = rows[ir][jz];
        }
        let tc = forward_1d(&col);
        let zeta = std::f64::consts::PI / l * signed_index(jz, n) as f64;
        for (m, c) in tc.iter().enumerate().filter(|(m, _)| in_band(*m)) {
            let xi = std::f64::consts::PI / (2.0 * l) * signed_index(m, nr) as f64;
            let amp = c.norm() * (4.0 * l) * (2.0 * l);
            spectrum.push((
                amp,
                (ka * ka + xi * xi) * (1.0 + zeta * zeta).powf(0.5 * power),
            ));
        }
    }
    let peak = spectrum.iter().map(|x| x.0).fold(0.0, f64::max);
    let c2 = spectrum
        .iter()
        .filter(|(amp, _)| *amp > GREENS_NOISE_FLOOR * peak)
        .map(|(amp, w)| amp * w)
        .fold(0.0, f64::max);
    Ok(GreensBounds { c1, c2 })
}

/// Which inverse a probe measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeTarget {
    /// `Delta_0^{-1}`
    Lap0Inv,
    /// `Delta_t^{-1}`
    LapTInv,
    /// `Delta_t^{-1} - Delta_0^{-1}`
    Difference,
}

/// Largest physical frequency carried by probe vectors.
pub const PROBE_BAND: f64 = 3.0;

/// Worst ratio `||<k,xi>^s M (Delta_L (c phi))^|| / ||<k,xi>^s M X^||` over random normalized
/// probes `X` supported on `|xi| <= PROBE_BAND`, with `phi` the chosen inverse applied to `X`.
/// `s = 2`; the profile passed in is moved to time `t` if needed.
#[allow(clippy::too_many_arguments)]
pub fn elliptic_estimate_probe(
    coeff: &Array1<f64>,
    profile: &ShearProfile,
    k: i64,
    t: f64,
    m: MTag,
    target: ProbeTarget,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    let s = 2.0;
    let n = profile.resolution.n_v;
    let l = profile.resolution.l_v;
    let pt = if profile.t == t {
        profile.clone()
    } else {
        profile.at_time(t)?
    };
    let lap_l = EllipticOperatorSpec::new(Kind::LapL, &pt, t, k);
    let lap_0 = EllipticOperatorSpec::new(Kind::Lap0, &pt, t, k);
    let lap_t = EllipticOperatorSpec::new(Kind::LapT, &pt, t, k);
    let lu0 = if pt.is_couette() {
        None
    } else {
        Some(lap_0.matrix().lu())
    };
    let lut = if pt.is_couette() {
        None
    } else {
        Some(lap_t.matrix().lu())
    };
    let solve_with = |lu: &Option<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>>,
                      sp: &EllipticOperatorSpec,
                      x: &Array1<Complex64>|
     -> Result<Array1<Complex64>> {
        match lu {
            None => sp.direct(x),
            Some(lu) => {
                let b = DVector::from_iterator(n, x.iter().copied());
                let y = lu
                    .solve(&b)
                    .ok_or_else(|| Error::Singular("probe inverse".into()))?;
                Ok(Array1::from_iter(y.iter().copied()))
            }
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band = (PROBE_BAND * l / std::f64::consts::PI).floor() as i64;
    if 4 * band >= n as i64 {
        return Err(Error::InvalidParameter(format!(
            "probe band |xi| <= {PROBE_BAND} needs n_v > {} on this box",
            4 * band
        )));
    }
    let mut worst = 0.0_f64;
    for _ in 0..probes {
        // drawn in signed-frequency order so the probe set does not depend on n_v
        let mut x = Array1::<Complex64>::zeros(n);
        for m in -band..=band {
            let j = if m < 0 {
                (m + n as i64) as usize
            } else {
                m as usize
            };
            x[j] = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
        let scale = weighted_norm_1d(&x, k, t, l, s, m);
        x.mapv_inplace(|c| c / scale);
        let phi = match target {
            ProbeTarget::Lap0Inv => solve_with(&lu0, &lap_0, &x)?,
            ProbeTarget::LapTInv => solve_with(&lut, &lap_t, &x)?,
            ProbeTarget::Difference => {
                &solve_with(&lut, &lap_t, &x)? - &solve_with(&lu0, &lap_0, &x)?
            }
        };
        let samples = inverse_1d(phi.as_slice().unwrap());
        let prod: Vec<Complex64> = samples
            .iter()
            .zip(coeff.iter())
            .map(|(a, c)| a * c)
            .collect();
        let cphi = Array1::from(forward_1d(&prod));
        let lhs = lap_l.apply(&cphi);
        let num = weighted_norm_1d(&lhs, k, t, l, s, m);
        let den = weighted_norm_1d(&x, k, t, l, s, m);
        worst = worst.max(num / den);
    }
    Ok(worst)
}
