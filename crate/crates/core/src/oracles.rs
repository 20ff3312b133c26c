//! Exact Couette passive scalar `d_t F + y d_x F = nu Lap F` in the moving frame, where each
//! Fourier mode decays by `exp(-nu int_0^t (k^2 + (eta - k tau)^2) dtau)`.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::SpectralField;
use crate::numerics::{fit_line, gauss_legendre, LineFit};

/// `int_0^t (k^2 + (eta - k tau)^2) dtau` in closed form.
pub fn dissipation_exponent(k: f64, eta: f64, t: f64) -> f64 {
    if k == 0.0 {
        return eta * eta * t;
    }
    let s = eta - k * t;
    k * k * t + (eta.powi(3) - s.powi(3)) / (3.0 * k)
}

#[derive(Debug, Clone)]
pub struct PassiveScalarSolution {
    pub initial: SpectralField,
    pub nu: f64,
}

#[derive(Debug, Clone)]
pub struct DampingReport {
    pub times: Vec<f64>,
    /// `||P_neq f(t)||_{H^-1}` at each time.
    pub hminus1: Vec<f64>,
    /// `int ||P_neq f||^2_{H^-1} dt` over the span of `times`.
    pub integral: f64,
}

impl PassiveScalarSolution {
    pub fn new(initial: SpectralField, nu: f64) -> Result<Self> {
        if !(nu >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "nu must be nonnegative, got {nu}"
            )));
        }
        Ok(PassiveScalarSolution { initial, nu })
    }

    fn modes(&self) -> impl Iterator<Item = (f64, f64, Complex64, (usize, usize))> + '_ {
        let g = self.initial.grid;
        self.initial
            .coeffs
            .indexed_iter()
            .filter(|(_, c)| c.norm_sqr() > 0.0)
            .map(move |((i, j), c)| (g.k(i), g.eta(j), *c, (i, j)))
    }

    pub fn exact_solution(&self, t: f64) -> SpectralField {
        let g = self.initial.grid;
        let mut coeffs = Array2::<Complex64>::zeros(g.shape());
        for (k, eta, c, idx) in self.modes() {
            coeffs[idx] = c * (-self.nu * dissipation_exponent(k, eta, t)).exp();
        }
        SpectralField {
            grid: g,
            coeffs,
            reality_flag: self.initial.reality_flag,
        }
    }

    /// `sum_{k != 0} |F^(t)|^2 / (k^2 + (eta - k t)^2)`.
    pub fn hminus1_sqr(&self, t: f64) -> f64 {
        self.modes()
            .filter(|m| m.0 != 0.0)
            .map(|(k, eta, c, _)| {
                let e = (-2.0 * self.nu * dissipation_exponent(k, eta, t)).exp();
                c.norm_sqr() * e / (k * k + (eta - k * t).powi(2))
            })
            .sum()
    }

    /// Largest `|F^(t)| / (|F^_in| exp(-delta nu^{1/3} t))` over nonzero `k` modes and `times`.
    pub fn decay_bound_ratio(&self, times: &[f64], delta: f64) -> f64 {
        let rate = delta * self.nu.cbrt();
        let mut worst = 0.0_f64;
        for (k, eta, _, _) in self.modes().filter(|m| m.0 != 0.0) {
            for &t in times {
                let log_ratio = -self.nu * dissipation_exponent(k, eta, t) + rate * t;
                worst = worst.max(log_ratio.exp());
            }
        }
        worst
    }
}

/// Panel length of the time quadrature; the integrand varies on unit time scales near `t = eta/k`.
const PANEL: f64 = 0.5;

pub fn damping_functionals(sol: &PassiveScalarSolution, times: &[f64]) -> Result<DampingReport> {
    if times.len() < 2 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "time grid must be strictly increasing with >= 2 points".into(),
        ));
    }
    let hminus1 = times.iter().map(|&t| sol.hminus1_sqr(t).sqrt()).collect();
    let (x, w) = gauss_legendre(16, 0.0, 1.0);
    let mut integral = 0.0;
    for win in times.windows(2) {
        let panels = ((win[1] - win[0]) / PANEL).ceil().max(1.0) as usize;
        let h = (win[1] - win[0]) / panels as f64;
        for p in 0..panels {
            for (xi, wi) in x.iter().zip(&w) {
                integral += h * wi * sol.hminus1_sqr(win[0] + h * (p as f64 + xi));
            }
        }
    }
    Ok(DampingReport {
        times: times.to_vec(),
        hminus1,
        integral,
    })
}

/// Log-log fit of `||P_neq f||_{H^-1}` against `t` restricted to `[t_lo, t_hi]`.
pub fn hminus1_decay_fit(report: &DampingReport, t_lo: f64, t_hi: f64) -> Result<LineFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = report
        .times
        .iter()
        .zip(&report.hminus1)
        .filter(|(t, h)| **t >= t_lo && **t <= t_hi && **h > 0.0)
        .map(|(t, h)| (t.ln(), h.ln()))
        .unzip();
    fit_line(&lx, &ly)
}
