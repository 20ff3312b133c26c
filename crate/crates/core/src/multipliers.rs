//! Fourier weights of the energy method: the ghost multipliers `W_nu`, `W_I`, `W_I°`, `W_E`,
//! the enhanced-dissipation weight `zeta`, their product `M`, and `A = zeta M <k, eta>^s`.
//!
//! All time derivatives are closed-form. Norms here are coefficient `l^2` sums.

use std::f64::consts::PI;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::grid::{multiply_by_v_function, SpectralField};

pub const DEFAULT_K: f64 = 32.0;
pub const DEFAULT_DELTA: f64 = 1.0 / 64.0;
/// Truncation of the echo sum `|l| <= L`.
pub const DEFAULT_L_SUM: usize = 128;

/// `<x, y>^s := (1 + x^2)^{s/2} + (1 + y^2)^{s/2}`.
#[inline]
pub fn bracket(x: f64, y: f64, s: f64) -> f64 {
    (1.0 + x * x).powf(0.5 * s) + (1.0 + y * y).powf(0.5 * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `t <= nu^{-1/6}`
    Short,
    /// `t > nu^{-1/6}`
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Nu,
    I,
    ICirc,
    E,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierSpec {
    pub nu: f64,
    pub k_ghost: f64,
    pub delta: f64,
    pub s: f64,
    pub regime: Regime,
    pub l_sum: usize,
}

impl MultiplierSpec {
    pub fn new(nu: f64, k_ghost: f64, delta: f64, s: f64, regime: Regime) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "nu must be positive, got {nu}"
            )));
        }
        if !(k_ghost >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "K must be >= 1, got {k_ghost}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0,1), got {delta}"
            )));
        }
        if !(s >= 2.0) {
            return Err(Error::InvalidParameter(format!("s must be >= 2, got {s}")));
        }
        Ok(MultiplierSpec {
            nu,
            k_ghost,
            delta,
            s,
            regime,
            l_sum: DEFAULT_L_SUM,
        })
    }

    pub fn with_defaults(nu: f64, s: f64) -> Result<Self> {
        Self::new(nu, DEFAULT_K, DEFAULT_DELTA, s, Regime::Short)
    }

    /// Regime switch time `nu^{-1/6}`.
    pub fn t_switch(&self) -> f64 {
        self.nu.powf(-1.0 / 6.0)
    }

    pub fn regime_at(&self, t: f64) -> Regime {
        if t <= self.t_switch() {
            Regime::Short
        } else {
            Regime::Long
        }
    }

    /// Copy of the spec tagged with the regime that contains `t`.
    pub fn at(&self, t: f64) -> Self {
        MultiplierSpec {
            regime: self.regime_at(t),
            ..*self
        }
    }

    fn check_regime(&self, t: f64) -> Result<()> {
        if self.regime_at(t) != self.regime {
            return Err(Error::Regime(format!(
                "t = {t} lies in the {:?} regime but the spec is tagged {:?}",
                self.regime_at(t),
                self.regime
            )));
        }
        Ok(())
    }

    fn nu_active(&self, k: f64) -> bool {
        k != 0.0 && k.abs() <= self.nu.powf(-0.5)
    }

    fn e_active(&self, k: f64) -> bool {
        k.abs() < self.nu.powf(-0.5)
    }

    fn nu_rate(&self, k: f64) -> f64 {
        self.nu.powf(1.0 / 3.0) * k.abs().powf(2.0 / 3.0) / self.k_ghost
    }

    /// Certified bound on the omitted part `|l| > L` of the echo sum: `(1/pi) sum_{l>L} 2 l^{-2} / 2 <= 1/(pi L)`.
    pub fn we_tail_bound(&self) -> f64 {
        1.0 / (PI * self.l_sum as f64)
    }
}

/// Value and first derivatives in `t` and `eta` of one weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub dt: f64,
    pub deta: f64,
}

impl Jet {
    const PI_CONST: Jet = Jet {
        value: PI,
        dt: 0.0,
        deta: 0.0,
    };

    pub fn mul(self, o: Jet) -> Jet {
        Jet {
            value: self.value * o.value,
            dt: self.dt * o.value + self.value * o.dt,
            deta: self.deta * o.value + self.value * o.deta,
        }
    }
}

/// `pi - arctan(c (t - eta/k))` and its derivatives.
fn arctan_tilt(c: f64, t: f64, k: f64, eta: f64) -> Jet {
    let x = c * (t - eta / k);
    let d = 1.0 / (1.0 + x * x);
    Jet {
        value: PI - x.atan(),
        dt: -c * d,
        deta: c / k * d,
    }
}

pub fn w_nu_jet(spec: &MultiplierSpec, t: f64, k: f64, eta: f64) -> Jet {
    if !spec.nu_active(k) {
        return Jet::PI_CONST;
    }
    arctan_tilt(spec.nu_rate(k), t, k, eta)
}

pub fn w_i_jet(spec: &MultiplierSpec, t: f64, k: f64, eta: f64) -> Jet {
    if k == 0.0 {
        return Jet::PI_CONST;
    }
    arctan_tilt(1.0 / spec.k_ghost, t, k, eta)
}

/// `pi + arctan(2 (eta - t/2) / K)`; independent of `k`, used at `k = 0` in the short regime.
pub fn w_icirc_jet(spec: &MultiplierSpec, t: f64, eta: f64) -> Jet {
    let kk = spec.k_ghost;
    let x = 2.0 * (eta - 0.5 * t) / kk;
    let d = 1.0 / (1.0 + x * x);
    Jet {
        value: PI + x.atan(),
        dt: -d / kk,
        deta: 2.0 * d / kk,
    }
}

pub fn w_e_jet(spec: &MultiplierSpec, t: f64, k: f64, eta: f64) -> Jet {
    if !spec.e_active(k) {
        return Jet::PI_CONST;
    }
    let kk = spec.k_ghost;
    let (mut v, mut dt, mut de) = (0.0, 0.0, 0.0);
    for l in 1..=spec.l_sum {
        let lf = l as f64;
        let w = 1.0 / (lf * lf);
        for sgn in [1.0, -1.0] {
            let ell = sgn * lf;
            let dd = kk * (1.0 + (k - ell).abs() + lf);
            let x = (eta - ell * t) / dd;
            let q = 1.0 / (1.0 + x * x);
            v += w * sgn * x.atan();
            dt += w * sgn * (-ell / dd) * q;
            de += w * sgn * q / dd;
        }
    }
    let c = 1.0 / (PI * PI);
    Jet {
        value: PI + c * v,
        dt: c * dt,
        deta: c * de,
    }
}

/// Evaluates one ghost weight. `W_I°` is only defined in the short regime.
pub fn eval_w(spec: &MultiplierSpec, which: Which, t: f64, k: f64, eta: f64) -> Result<f64> {
    Ok(jet_w(spec, which, t, k, eta)?.value)
}

pub fn jet_w(spec: &MultiplierSpec, which: Which, t: f64, k: f64, eta: f64) -> Result<Jet> {
    Ok(match which {
        Which::Nu => w_nu_jet(spec, t, k, eta),
        Which::I => w_i_jet(spec, t, k, eta),
        Which::E => w_e_jet(spec, t, k, eta),
        Which::ICirc => {
            if spec.regime_at(t) != Regime::Short {
                return Err(Error::Regime(format!(
                    "W_I° requested at t = {t} beyond nu^(-1/6)"
                )));
            }
            w_icirc_jet(spec, t, eta)
        }
    })
}

/// `zeta_k(t)`.
pub fn eval_zeta(spec: &MultiplierSpec, t: f64, k: f64) -> f64 {
    if k == 0.0 {
        1.0
    } else {
        (zeta_rate(spec, k) * t).exp()
    }
}

/// `d_t zeta_k / zeta_k`.
pub fn zeta_rate(spec: &MultiplierSpec, k: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        spec.delta * spec.nu.powf(1.0 / 3.0) * (k.abs().powf(2.0 / 3.0) + 1.0)
    }
}

/// `M` with its derivatives, in the regime of the spec tag.
pub fn m_jet(spec: &MultiplierSpec, t: f64, k: f64, eta: f64) -> Jet {
    match spec.regime {
        Regime::Short => {
            if k == 0.0 {
                w_icirc_jet(spec, t, eta)
            } else {
                w_i_jet(spec, t, k, eta)
            }
        }
        Regime::Long => w_nu_jet(spec, t, k, eta)
            .mul(w_i_jet(spec, t, k, eta))
            .mul(w_e_jet(spec, t, k, eta)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MandA {
    pub m: f64,
    /// `M <k, eta>^s`
    pub a_tilde: f64,
    /// `zeta M <k, eta>^s`
    pub a: f64,
}

pub fn eval_m_and_a(spec: &MultiplierSpec, t: f64, k: f64, eta: f64) -> Result<MandA> {
    spec.check_regime(t)?;
    let m = m_jet(spec, t, k, eta).value;
    let a_tilde = m * bracket(k, eta, spec.s);
    Ok(MandA {
        m,
        a_tilde,
        a: eval_zeta(spec, t, k) * a_tilde,
    })
}

/// `d_t M`.
pub fn dt_m(spec: &MultiplierSpec, t: f64, k: f64, eta: f64) -> Result<f64> {
    spec.check_regime(t)?;
    Ok(m_jet(spec, t, k, eta).dt)
}

/// `d_eta M`.
pub fn deta_m(spec: &MultiplierSpec, t: f64, k: f64, eta: f64) -> Result<f64> {
    spec.check_regime(t)?;
    Ok(m_jet(spec, t, k, eta).deta)
}

/// `-d_t W / W` for `W in {W_nu, W_I, W_E}`, the density of the corresponding CK term.
pub fn ck_weight(spec: &MultiplierSpec, which: Which, t: f64, k: f64, eta: f64) -> f64 {
    let j = match which {
        Which::Nu => w_nu_jet(spec, t, k, eta),
        Which::I => w_i_jet(spec, t, k, eta),
        Which::E => w_e_jet(spec, t, k, eta),
        Which::ICirc => w_icirc_jet(spec, t, eta),
    };
    (-j.dt / j.value).max(0.0)
}

/// Extra symbol multiplying `A` inside a weighted norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extra {
    One,
    /// `|d_z|^{1/3}`
    Dz13,
    /// `sqrt(-Delta_L)`
    SqrtNegLapL,
    /// `sqrt(-d_t W / W)`
    Ck(Which),
    /// `sqrt(-d_t M / M)`
    CkM,
}

/// Per-mode weight `A(t,k,eta)^2 * extra^2`, in the regime that contains `t`.
pub fn weight_sqr(spec: &MultiplierSpec, t: f64, k: f64, eta: f64, extra: Extra) -> f64 {
    let sp = spec.at(t);
    let jm = m_jet(&sp, t, k, eta);
    let a = eval_zeta(&sp, t, k) * jm.value * bracket(k, eta, sp.s);
    let e2 = match extra {
        Extra::One => 1.0,
        Extra::Dz13 => k.abs().powf(2.0 / 3.0),
        Extra::SqrtNegLapL => k * k + (eta - k * t).powi(2),
        Extra::Ck(w) => ck_weight(&sp, w, t, k, eta),
        Extra::CkM => (-jm.dt / jm.value).max(0.0),
    };
    a * a * e2
}

/// `sum |A * extra * f^|^2` over all stored modes.
pub fn weighted_norm_sqr(f: &SpectralField, spec: &MultiplierSpec, t: f64, extra: Extra) -> f64 {
    let g = &f.grid;
    f.coeffs
        .indexed_iter()
        .map(|((i, j), c)| {
            let n2 = c.norm_sqr();
            if n2 == 0.0 {
                0.0
            } else {
                weight_sqr(spec, t, g.k(i), g.eta(j), extra) * n2
            }
        })
        .sum()
}

/// Applies a ghost weight as a Fourier multiplier at time `t`.
pub fn apply_weight(
    f: &SpectralField,
    spec: &MultiplierSpec,
    which: Which,
    t: f64,
) -> SpectralField {
    let g = f.grid;
    let mut out = f.clone();
    for ((i, j), c) in out.coeffs.indexed_iter_mut() {
        let (k, eta) = (g.k(i), g.eta(j));
        let w = match which {
            Which::Nu => w_nu_jet(spec, t, k, eta).value,
            Which::I => w_i_jet(spec, t, k, eta).value,
            Which::E => w_e_jet(spec, t, k, eta).value,
            Which::ICirc => {
                if k == 0.0 {
                    w_icirc_jet(spec, t, eta).value
                } else {
                    PI
                }
            }
        };
        *c *= w;
    }
    out
}

/// `||[m, c] f|| / ((1/K) ||m f||)` for a ghost weight `m` and multiplication by `c(v)`.
pub fn ghost_commutator_check(
    spec: &MultiplierSpec,
    which: Which,
    t: f64,
    coeff: &Array1<f64>,
    f: &SpectralField,
) -> f64 {
    let mf = apply_weight(f, spec, which, t);
    let left = apply_weight(&multiply_by_v_function(f, coeff), spec, which, t);
    let right = multiply_by_v_function(&mf, coeff);
    let comm = left.sub(&right).coeff_norm_sqr().sqrt();
    let den = mf.coeff_norm_sqr().sqrt() / spec.k_ghost;
    if den == 0.0 {
        0.0
    } else {
        comm / den
    }
}

/// Outcome of one pointwise inequality over an audit grid. `worst_margin` is the smallest
/// `(rhs - lhs) / |rhs|`; a negative value is a violation.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditLine {
    pub name: &'static str,
    pub nu: f64,
    pub k_ghost: f64,
    pub points: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub worst_at: (f64, f64, f64),
}

impl AuditLine {
    fn new(name: &'static str, nu: f64, k_ghost: f64) -> Self {
        AuditLine {
            name,
            nu,
            k_ghost,
            points: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            worst_at: (0.0, 0.0, 0.0),
        }
    }

    /// Records `lhs <= rhs` at `(t, k, eta)`.
    fn check(&mut self, lhs: f64, rhs: f64, at: (f64, f64, f64)) {
        self.points += 1;
        let margin = (rhs - lhs) / rhs.abs().max(f64::MIN_POSITIVE);
        if !(lhs <= rhs) {
            self.violations += 1;
        }
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
            self.worst_at = at;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Audit grid: `n_t` log-spaced times on `[nu^{-1/6}, 10 nu^{-1/3}]`, `n_k` wavenumbers
/// (zero and log-spaced magnitudes of both signs up to `2 nu^{-1/2}`) and `n_eta` frequencies
/// (zero and log-spaced magnitudes of both signs on `[0.1, 10^4]`).
pub fn audit_grid(nu: f64, n_t: usize, n_k: usize, n_eta: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let logspace = |a: f64, b: f64, n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| a * (b / a).powf(i as f64 / (n.max(2) - 1) as f64))
            .collect()
    };
    let times = logspace(nu.powf(-1.0 / 6.0), 10.0 * nu.powf(-1.0 / 3.0), n_t);
    let k_max = 2.0 * nu.powf(-0.5);
    let mut mags: Vec<f64> = logspace(1.0, k_max, (n_k - 1) / 2)
        .into_iter()
        .map(f64::round)
        .collect();
    mags.dedup();
    let mut m = 1.0;
    while mags.len() < (n_k - 1) / 2 {
        m += 1.0;
        if !mags.contains(&m) {
            mags.push(m);
        }
    }
    mags.sort_by(f64::total_cmp);
    let mut ks = vec![0.0];
    ks.extend(mags.iter().flat_map(|&k| [k, -k]));
    let mut etas = vec![0.0];
    etas.extend(
        logspace(0.1, 1e4, (n_eta - 1) / 2)
            .into_iter()
            .flat_map(|e| [e, -e]),
    );
    (times, ks, etas)
}

/// Pointwise inequalities of the long-regime `M` over a grid:
/// `pi^3/8 <= M <= 27 pi^3/8`, `-d_t M >= (pi^2 / 4K) k^2 / (k^2 + (eta - kt)^2)`,
/// `|d_eta M| <= 12 pi^2 / (K |k|)` and
/// `(2 / (9 K pi^2)) nu^{1/3} |k|^{2/3} <= -d_t M / M + nu (k^2 + (eta - kt)^2)`.
pub fn audit_inequalities(
    nu: f64,
    k_ghost: f64,
    times: &[f64],
    ks: &[f64],
    etas: &[f64],
) -> Result<Vec<AuditLine>> {
    let spec = MultiplierSpec::new(nu, k_ghost, DEFAULT_DELTA, 2.0, Regime::Long)?;
    let mut lines = [
        AuditLine::new("m_lower", nu, k_ghost),
        AuditLine::new("m_upper", nu, k_ghost),
        AuditLine::new("dt_m_lower", nu, k_ghost),
        AuditLine::new("deta_m_upper", nu, k_ghost),
        AuditLine::new("enhanced_dissipation", nu, k_ghost),
    ];
    let pi3 = PI.powi(3);
    let ed = 2.0 / (9.0 * k_ghost * PI * PI) * nu.cbrt();
    for &t in times {
        for &k in ks {
            for &eta in etas {
                let at = (t, k, eta);
                let m = m_jet(&spec, t, k, eta);
                lines[0].check(-m.value, -pi3 / 8.0, at);
                lines[1].check(m.value, 27.0 * pi3 / 8.0, at);
                if k == 0.0 {
                    continue;
                }
                let lap = k * k + (eta - k * t).powi(2);
                lines[2].check(PI * PI / (4.0 * k_ghost) * k * k / lap, -m.dt, at);
                lines[3].check(m.deta.abs(), 12.0 * PI * PI / (k_ghost * k.abs()), at);
                lines[4].check(ed * k.abs().powf(2.0 / 3.0), -m.dt / m.value + nu * lap, at);
            }
        }
    }
    Ok(lines.to_vec())
}

/// Counts of the `zeta` product rule `zeta_k <= zeta_l zeta_{k-l} exp(-delta nu^{1/3} t)` and the
/// commutator rule `|zeta_k - zeta_{k-l}| <= zeta_{k-l} zeta_l delta nu^{1/3} |l|^{2/3} t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ZetaAudit {
    pub product_checked: usize,
    pub product_violations: usize,
    pub commutator_checked: usize,
    pub commutator_violations: usize,
}

/// Checks both rules for `|k|, |l| <= k_max` at `times`. The product rule is tested where
/// `l (k - l) != 0`, the commutator rule where also `k != 0`.
pub fn zeta_rules_check(spec: &MultiplierSpec, k_max: i64, times: &[f64]) -> ZetaAudit {
    let mut a = ZetaAudit::default();
    let rate = spec.delta * spec.nu.cbrt();
    for &t in times {
        for k in -k_max..=k_max {
            for l in -k_max..=k_max {
                let (kf, lf, df) = (k as f64, l as f64, (k - l) as f64);
                if l == 0 || k == l {
                    continue;
                }
                let (zk, zl, zd) = (
                    eval_zeta(spec, t, kf),
                    eval_zeta(spec, t, lf),
                    eval_zeta(spec, t, df),
                );
                a.product_checked += 1;
                if !(zk <= zl * zd * (-rate * t).exp()) {
                    a.product_violations += 1;
                }
                if k == 0 {
                    continue;
                }
                a.commutator_checked += 1;
                if !((zk - zd).abs() <= zd * zl * rate * lf.abs().powf(2.0 / 3.0) * t) {
                    a.commutator_violations += 1;
                }
            }
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> MultiplierSpec {
        MultiplierSpec::new(1e-4, 32.0, 1.0 / 64.0, 2.0, Regime::Short).unwrap()
    }

    #[test]
    fn w_i_is_pi_at_critical_time_and_for_k_zero() {
        let s = spec();
        assert_eq!(eval_w(&s, Which::I, 3.0, 2.0, 6.0).unwrap(), PI);
        assert_eq!(eval_w(&s, Which::I, 3.0, 0.0, 6.0).unwrap(), PI);
    }

    #[test]
    fn w_nu_cutoff_above_inverse_sqrt_nu() {
        let s = spec();
        assert_eq!(eval_w(&s, Which::Nu, 50.0, 101.0, -3.0).unwrap(), PI);
        assert_ne!(eval_w(&s, Which::Nu, 50.0, 100.0, -3.0).unwrap(), PI);
        assert_eq!(eval_w(&s, Which::E, 50.0, 100.0, -3.0).unwrap(), PI);
    }

    #[test]
    fn icirc_rejected_in_long_regime() {
        let s = spec();
        assert!(eval_w(&s, Which::ICirc, 100.0, 0.0, 1.0).is_err());
        assert!(eval_w(&s, Which::ICirc, 1.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn regime_mismatch_rejected() {
        let s = spec();
        assert!(eval_m_and_a(&s, 100.0, 1.0, 0.0).is_err());
        assert!(eval_m_and_a(&s.at(100.0), 100.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn dt_w_i_matches_closed_form() {
        let s = spec();
        let (t, k, eta) = (2.5, 3.0, 4.0);
        let x = t - eta / k;
        let expect = -s.k_ghost / (s.k_ghost * s.k_ghost + x * x);
        assert!((w_i_jet(&s, t, k, eta).dt - expect).abs() < 1e-15);
    }

    #[test]
    fn long_regime_k_zero_factorization() {
        let s = spec().at(100.0);
        let we = eval_w(&s, Which::E, 100.0, 0.0, 7.5).unwrap();
        let m = eval_m_and_a(&s, 100.0, 0.0, 7.5).unwrap().m;
        assert!((m - PI * PI * we).abs() < 1e-12);
    }

    #[test]
    fn beyond_cutoff_m_reduces_to_pi_squared_w_i() {
        let s = spec().at(100.0);
        let (k, eta) = (150.0, 0.3);
        let m = eval_m_and_a(&s, 100.0, k, eta).unwrap().m;
        let wi = eval_w(&s, Which::I, 100.0, k, eta).unwrap();
        assert_eq!(eval_w(&s, Which::Nu, 100.0, k, eta).unwrap(), PI);
        assert_eq!(eval_w(&s, Which::E, 100.0, k, eta).unwrap(), PI);
        assert!((m - PI * PI * wi).abs() < 1e-12);
    }

    #[test]
    fn zeta_at_zero_mode_is_one() {
        assert_eq!(eval_zeta(&spec(), 123.0, 0.0), 1.0);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(MultiplierSpec::new(1e-3, 0.5, 0.1, 2.0, Regime::Short).is_err());
        assert!(MultiplierSpec::new(1e-3, 8.0, 1.0, 2.0, Regime::Short).is_err());
        assert!(MultiplierSpec::new(1e-3, 8.0, 0.1, 1.5, Regime::Short).is_err());
    }
}
