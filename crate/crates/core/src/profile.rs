//! Background shear `b(t, y)`, its heat evolution, and the moving-frame coefficients
//! `B(t, v) = d_y b(t, b^{-1}(t, v))`, `B'(t, v) = B d_v B`.
//!
//! The profile is stored as `b(t, y) = y + c_minus + int_{-L_y}^{y} g(t, y') dy'` with the
//! corrector `g = d_y b - 1` held as a Fourier series on the periodized y-box. Only `g`
//! is heat-evolved, so the far-field linear part is exact.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array1;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{dv_1d, signed_index};
use crate::numerics::{fit_line, MonotoneCubic};

/// Refinement factor of the grid on which `b^{-1}` is interpolated.
pub const INVERSE_REFINEMENT: usize = 4;
/// Guard subtracted from the measured minimum of `B` when reporting `theta0`.
pub const THETA_GUARD: f64 = 1e-10;

/// Shapes of `d_y b - 1`.
#[derive(Clone)]
pub enum ProfileShape {
    Couette,
    /// `d_y b = 1 + a sech^2(y / w)`, i.e. `b = y + a w tanh(y / w)`.
    TanhBump {
        amplitude: f64,
        width: f64,
    },
    /// `d_y b = 1 + a exp(1 - 1 / (1 - (y/r)^2))` on `|y| < r`: compactly supported, Gevrey-2.
    GevreyBump {
        amplitude: f64,
        radius: f64,
    },
    /// User corrector `g(y) = d_y b - 1` with `b(0) = 0`.
    Corrector {
        name: String,
        g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
    /// Tabulated `(y, b(y))`, strictly increasing in both columns.
    Samples {
        y: Vec<f64>,
        b: Vec<f64>,
    },
}

impl fmt::Debug for ProfileShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl ProfileShape {
    pub fn name(&self) -> String {
        match self {
            ProfileShape::Couette => "couette".into(),
            ProfileShape::TanhBump { amplitude, width } => format!("tanh-bump:{amplitude},{width}"),
            ProfileShape::GevreyBump { amplitude, radius } => {
                format!("gevrey-bump:{amplitude},{radius}")
            }
            ProfileShape::Corrector { name, .. } => name.clone(),
            ProfileShape::Samples { .. } => "samples".into(),
        }
    }

    /// Parses `couette`, `tanh-bump:a,w`, `gevrey-bump:a,r`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "couette" {
            return Ok(ProfileShape::Couette);
        }
        let (head, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("unknown profile '{s}'")))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("'{x}': {e}")))
            })
            .collect::<Result<_>>()?;
        if nums.len() != 2 {
            return Err(Error::Parse(format!("profile '{s}' needs two parameters")));
        }
        let (a, w) = (nums[0], nums[1]);
        if !(w > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "profile width must be positive, got {w}"
            )));
        }
        match head {
            "tanh-bump" => Ok(ProfileShape::TanhBump {
                amplitude: a,
                width: w,
            }),
            "gevrey-bump" => Ok(ProfileShape::GevreyBump {
                amplitude: a,
                radius: w,
            }),
            _ => Err(Error::Parse(format!("unknown profile family '{head}'"))),
        }
    }

    /// Reads `(y, b)` rows from a CSV file with an optional header line.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut y = Vec::new();
        let mut b = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 2 {
                return Err(Error::Parse(format!("line {}: expected 'y,b'", n + 1)));
            }
            match (cols[0].parse::<f64>(), cols[1].parse::<f64>()) {
                (Ok(a), Ok(c)) => {
                    y.push(a);
                    b.push(c);
                }
                _ if n == 0 => continue,
                _ => return Err(Error::Parse(format!("line {}: non-numeric entry", n + 1))),
            }
        }
        Ok(ProfileShape::Samples { y, b })
    }

    fn corrector(&self) -> Option<Box<dyn Fn(f64) -> f64 + '_>> {
        match self {
            ProfileShape::Couette => None,
            ProfileShape::TanhBump { amplitude, width } => {
                let (a, w) = (*amplitude, *width);
                Some(Box::new(move |y: f64| {
                    let c = (y / w).cosh();
                    a / (c * c)
                }))
            }
            ProfileShape::GevreyBump { amplitude, radius } => {
                let (a, r) = (*amplitude, *radius);
                Some(Box::new(move |y: f64| gevrey_bump(y / r) * a))
            }
            ProfileShape::Corrector { g, .. } => Some(Box::new(move |y: f64| g(y))),
            ProfileShape::Samples { .. } => None,
        }
    }
}

/// `exp(1 - 1/(1 - x^2))` on `|x| < 1`, zero outside.
pub fn gevrey_bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - x * x)).exp()
    }
}

/// Box sizes for the profile: a y-box for storing `b` and the v-box of the simulation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileResolution {
    pub n_y: usize,
    pub l_y: f64,
    pub n_v: usize,
    pub l_v: f64,
}

impl ProfileResolution {
    /// y-box 1.5 times wider than the v-box plus a margin, sampled twice as densely.
    pub fn for_v_box(n_v: usize, l_v: f64) -> Self {
        ProfileResolution {
            n_y: 2 * n_v,
            l_y: 1.5 * l_v + 2.0,
            n_v,
            l_v,
        }
    }
}

/// Real periodic Fourier series on `[-L, L)` in the convention `f(y) = sum c_m exp(i xi_m y)`.
#[derive(Debug, Clone)]
struct Series {
    l: f64,
    c: Vec<Complex64>,
    /// Periodic part of the antiderivative at the left edge.
    p_left: f64,
}

impl Series {
    fn from_samples(samples: &[f64], l: f64) -> Self {
        let n = samples.len();
        let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        for (m, c) in buf.iter_mut().enumerate() {
            let s = signed_index(m, n);
            *c *= if s % 2 == 0 { 1.0 } else { -1.0 } / n as f64;
            if s == -((n / 2) as i64) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        Series {
            l,
            c: buf,
            p_left: 0.0,
        }
        .with_left()
    }

    fn with_left(mut self) -> Self {
        self.p_left = self.eval3(-self.l).2;
        self
    }

    fn n(&self) -> usize {
        self.c.len()
    }

    fn xi(&self, m: usize) -> f64 {
        std::f64::consts::PI / self.l * m as f64
    }

    fn heat(&self, nu_t: f64) -> Series {
        let n = self.n();
        let c = self
            .c
            .iter()
            .enumerate()
            .map(|(m, c)| {
                let xi = std::f64::consts::PI / self.l * signed_index(m, n) as f64;
                c * (-nu_t * xi * xi).exp()
            })
            .collect();
        Series {
            l: self.l,
            c,
            p_left: 0.0,
        }
        .with_left()
    }

    /// Returns `(f, f', P)` at `y`, with `P` the periodic part of the antiderivative.
    fn eval3(&self, y: f64) -> (f64, f64, f64) {
        let n = self.n();
        let w = Complex64::from_polar(1.0, std::f64::consts::PI / self.l * y);
        let mut p = w;
        let mut f = self.c[0].re;
        let mut df = 0.0;
        let mut anti = 0.0;
        for m in 1..n / 2 {
            let cm = self.c[m];
            let term = cm * p;
            let xi = self.xi(m);
            f += 2.0 * term.re;
            df += -2.0 * xi * term.im;
            anti += 2.0 * term.im / xi;
            p *= w;
            if m % 64 == 0 {
                p = Complex64::from_polar(1.0, std::f64::consts::PI / self.l * y * (m + 1) as f64);
            }
        }
        (f, df, anti)
    }

    fn eval(&self, y: f64) -> f64 {
        self.eval3(y).0
    }
}

/// Outcome of the assumption checks on a profile.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub sigma0: f64,
    pub min_dy_b: f64,
    pub max_dy_b: f64,
    pub monotone_ok: bool,
    /// Largest |y| where `|b''|` exceeds `1e-10 max|b''|` and the series ringing (0 for Couette).
    pub support_radius: f64,
    pub support_ok: bool,
    /// Fitted `theta` in `|b''^(xi)| ~ exp(-theta <xi>^{1/2})` on the upper envelope (infinite for Couette).
    pub decay_exponent: f64,
    pub decay_ok: bool,
    pub theta0: f64,
    /// `||B||_inf + sup_xi exp(theta0 <xi>^{1/2}) |(d_v B)^(xi)|`.
    pub gevrey_sup: f64,
    pub spectral: Option<crate::rayleigh::Verdict>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.monotone_ok
            && self.support_ok
            && self.decay_ok
            && !matches!(
                self.spectral,
                Some(crate::rayleigh::Verdict::UnstableModeFound)
            )
    }

    pub fn to_text(&self) -> String {
        format!(
            "sigma0,{:.6}\nmin_dy_b,{:.12}\nmax_dy_b,{:.12}\nmonotone_ok,{}\nsupport_radius,{:.6}\nsupport_ok,{}\n\
             decay_exponent,{:.6}\ndecay_ok,{}\ntheta0,{:.12}\ngevrey_sup,{:.6e}\nspectral,{}\n",
            self.sigma0,
            self.min_dy_b,
            self.max_dy_b,
            self.monotone_ok,
            self.support_radius,
            self.support_ok,
            self.decay_exponent,
            self.decay_ok,
            self.theta0,
            self.gevrey_sup,
            self.spectral.map(|v| v.to_string()).unwrap_or_else(|| "not-run".into())
        )
    }
}

#[derive(Debug, Clone)]
pub struct ShearProfile {
    pub name: String,
    pub sigma0: f64,
    pub nu: f64,
    pub t: f64,
    pub resolution: ProfileResolution,
    pub y_points: Array1<f64>,
    /// `b(t, y_j)` on the y-grid.
    pub b_values: Array1<f64>,
    /// `b^{-1}(t, v_j)` on the v-grid.
    pub y_of_v: Array1<f64>,
    pub b_inverse_interp: Option<MonotoneCubic>,
    pub coef_b: Array1<f64>,
    pub coef_bprime: Array1<f64>,
    pub coef_b0: Array1<f64>,
    pub coef_b0prime: Array1<f64>,
    pub theta0: f64,
    couette: bool,
    g0: Series,
    c_minus: f64,
}

impl ShearProfile {
    pub fn couette(nu: f64, res: ProfileResolution) -> Result<Self> {
        Self::new(ProfileShape::Couette, nu, res, None)
    }

    pub fn from_spec(spec: &str, nu: f64, res: ProfileResolution) -> Result<Self> {
        Self::new(ProfileShape::parse(spec)?, nu, res, None)
    }

    /// Builds the profile at `t = 0`. With `sigma0 = None` the largest admissible value
    /// `min(min d_y b, 1/max d_y b)` is used (capped just below 1).
    pub fn new(
        shape: ProfileShape,
        nu: f64,
        res: ProfileResolution,
        sigma0: Option<f64>,
    ) -> Result<Self> {
        if !(nu >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "viscosity must be nonnegative, got {nu}"
            )));
        }
        if res.n_y % 2 != 0 || res.n_v % 2 != 0 || res.n_y < 8 || res.n_v < 8 {
            return Err(Error::InvalidParameter(
                "profile grids must be even and >= 8".into(),
            ));
        }
        let h = 2.0 * res.l_y / res.n_y as f64;
        let y_points = Array1::from_shape_fn(res.n_y, |j| -res.l_y + h * j as f64);
        let couette = matches!(shape, ProfileShape::Couette);
        let (g_samples, c_minus) = match &shape {
            ProfileShape::Samples { y, b } => {
                let interp = MonotoneCubic::new(y.clone(), b.clone())?;
                let (lo, hi) = interp.domain();
                let g: Vec<f64> = y_points
                    .iter()
                    .map(|&yy| {
                        if yy <= lo || yy >= hi {
                            0.0
                        } else {
                            interp.derivative(yy) - 1.0
                        }
                    })
                    .collect();
                let series = Series::from_samples(&g, res.l_y);
                let mean_c: f64 = y
                    .iter()
                    .zip(b)
                    .map(|(&yy, &bb)| bb - yy - antiderivative(&series, yy))
                    .sum::<f64>()
                    / y.len() as f64;
                (g, mean_c)
            }
            _ => {
                let g: Vec<f64> = match shape.corrector() {
                    Some(f) => y_points.iter().map(|&yy| f(yy)).collect(),
                    None => vec![0.0; res.n_y],
                };
                let series = Series::from_samples(&g, res.l_y);
                (g, -antiderivative(&series, 0.0))
            }
        };
        let g0 = Series::from_samples(&g_samples, res.l_y);
        let (mn, mx) = y_points
            .iter()
            .map(|&y| 1.0 + g0.eval(y))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
                (a.min(x), b.max(x))
            });
        if mn <= 0.0 {
            return Err(Error::ProfileDegeneracy(format!(
                "d_y b reaches {mn:.3e} <= 0"
            )));
        }
        let sigma0 = match sigma0 {
            Some(s) if s > 0.0 && s < 1.0 => s,
            Some(s) => {
                return Err(Error::InvalidParameter(format!(
                    "sigma0 must lie in (0,1), got {s}"
                )))
            }
            None => mn.min(1.0 / mx).min(1.0 - 1e-12),
        };
        let mut p = ShearProfile {
            name: shape.name(),
            sigma0,
            nu,
            t: 0.0,
            resolution: res,
            y_points,
            b_values: Array1::zeros(res.n_y),
            y_of_v: Array1::zeros(res.n_v),
            b_inverse_interp: None,
            coef_b: Array1::ones(res.n_v),
            coef_bprime: Array1::zeros(res.n_v),
            coef_b0: Array1::ones(res.n_v),
            coef_b0prime: Array1::zeros(res.n_v),
            theta0: 1.0 - THETA_GUARD,
            couette,
            g0,
            c_minus,
        };
        p.refresh(true, None)?;
        p.coef_b0 = p.coef_b.clone();
        p.coef_b0prime = p.coef_bprime.clone();
        Ok(p)
    }

    pub fn is_couette(&self) -> bool {
        self.couette
    }

    pub fn v_points(&self) -> Array1<f64> {
        let r = self.resolution;
        Array1::from_shape_fn(r.n_v, |j| -r.l_v + 2.0 * r.l_v * j as f64 / r.n_v as f64)
    }

    fn g_series(&self) -> Series {
        self.g0.heat(self.nu * self.t)
    }

    /// `b(t, y)`, `d_y b(t, y)`, `d_y^2 b(t, y)` at an arbitrary point of the y-box.
    pub fn eval_b(&self, y: f64) -> (f64, f64, f64) {
        if self.couette {
            return (y, 1.0, 0.0);
        }
        let s = self.g_series();
        eval_b_with(&s, self.c_minus, y)
    }

    /// `b''(0, y)`.
    pub fn b0_second_derivative(&self, y: f64) -> f64 {
        if self.couette {
            return 0.0;
        }
        self.g0.eval3(y).1
    }

    /// `d_y b(0, y)`.
    pub fn b0_derivative(&self, y: f64) -> f64 {
        if self.couette {
            return 1.0;
        }
        1.0 + self.g0.eval(y)
    }

    fn refresh(&mut self, rebuild_interp: bool, guess: Option<&Array1<f64>>) -> Result<()> {
        let r = self.resolution;
        if self.couette {
            self.b_values = self.y_points.clone();
            self.y_of_v = self.v_points();
            self.coef_b = Array1::ones(r.n_v);
            self.coef_bprime = Array1::zeros(r.n_v);
            self.theta0 = 1.0 - THETA_GUARD;
            if rebuild_interp {
                self.b_inverse_interp = Some(MonotoneCubic::new(
                    self.y_points.to_vec(),
                    self.y_points.to_vec(),
                )?);
            }
            return Ok(());
        }
        let s = self.g_series();
        let c_minus = self.c_minus;
        self.b_values = self.y_points.mapv(|y| eval_b_with(&s, c_minus, y).0);
        let (mn, mx) = self
            .y_points
            .iter()
            .map(|&y| 1.0 + s.eval(y))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
                (a.min(x), b.max(x))
            });
        if mn < self.sigma0 * (1.0 - 1e-9) || mx > (1.0 / self.sigma0) * (1.0 + 1e-9) {
            return Err(Error::ProfileDegeneracy(format!(
                "d_y b left [sigma0, 1/sigma0] = [{:.6}, {:.6}]: range [{mn:.6}, {mx:.6}]",
                self.sigma0,
                1.0 / self.sigma0
            )));
        }
        let bl = eval_b_with(&s, c_minus, -r.l_y).0;
        let bh = eval_b_with(&s, c_minus, r.l_y * (1.0 - 1e-12)).0;
        if bl > -r.l_v - 0.5 || bh < r.l_v + 0.5 {
            return Err(Error::InvalidParameter(format!(
                "y-box too small: b maps [-{0}, {0}] onto [{bl:.3}, {bh:.3}], not covering the v-box",
                r.l_y
            )));
        }
        let v = self.v_points();
        let initial: Array1<f64> = if rebuild_interp || guess.is_none() {
            let nr = INVERSE_REFINEMENT * r.n_y;
            let hr = 2.0 * r.l_y / nr as f64;
            let yr: Vec<f64> = (0..=nr).map(|j| -r.l_y + hr * j as f64).collect();
            let br: Vec<f64> = yr.iter().map(|&y| eval_b_with(&s, c_minus, y).0).collect();
            let interp = MonotoneCubic::new(br, yr)?;
            let init = v.mapv(|vv| interp.eval(vv));
            self.b_inverse_interp = Some(interp);
            init
        } else {
            guess.cloned().unwrap()
        };
        let mut y_of_v = initial;
        for (yv, &vv) in y_of_v.iter_mut().zip(v.iter()) {
            for _ in 0..30 {
                let (b, db, _) = eval_b_with(&s, c_minus, *yv);
                let step = (b - vv) / db;
                *yv -= step;
                if step.abs() < 1e-15 * (1.0 + yv.abs()) {
                    break;
                }
            }
        }
        self.coef_b = y_of_v.mapv(|y| 1.0 + s.eval(y));
        let dvb = dv_1d(&self.coef_b, r.l_v);
        self.coef_bprime = &self.coef_b * &dvb;
        self.y_of_v = y_of_v;
        let min_b = self.coef_b.iter().cloned().fold(f64::INFINITY, f64::min);
        self.theta0 = min_b - THETA_GUARD;
        Ok(())
    }

    /// Exact heat evolution of the corrector by `dt`, with the inverse interpolant rebuilt.
    pub fn evolve_heat(&self, dt: f64) -> Result<ShearProfile> {
        if !(dt >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt must be nonnegative, got {dt}"
            )));
        }
        let mut p = self.clone();
        p.t += dt;
        p.refresh(true, None)?;
        Ok(p)
    }

    /// Profile at absolute time `t`, Newton-refined from the current inverse map.
    /// Cheaper than [`evolve_heat`](Self::evolve_heat); the interpolant is not rebuilt.
    pub fn at_time(&self, t: f64) -> Result<ShearProfile> {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "time must be nonnegative, got {t}"
            )));
        }
        let mut p = self.clone();
        p.t = t;
        if t == self.t {
            return Ok(p);
        }
        let guess = self.y_of_v.clone();
        p.refresh(false, Some(&guess))?;
        Ok(p)
    }

    /// `(B, B')` on the v-grid at the current time.
    pub fn coefficient_b(&self) -> (Array1<f64>, Array1<f64>) {
        (self.coef_b.clone(), self.coef_bprime.clone())
    }

    /// `b''(t, b^{-1}(t, v_j))`, an independent evaluation of `B'`.
    pub fn bprime_by_composition(&self) -> Array1<f64> {
        self.y_of_v.mapv(|y| self.eval_b(y).2)
    }

    /// `B(t, v)` from the heat-kernel representation
    /// `B(t,v) = int K_t(b^{-1}(t,v) - b^{-1}(t,w)) d_y b(0, b^{-1}(t,w)) / d_y b(t, b^{-1}(t,w)) dw`
    /// with `K_t(y) = exp(-y^2/(4 nu t)) / sqrt(4 pi nu t)`, by trapezoid quadrature in `w`.
    pub fn coefficient_b_by_heat_kernel(&self, n_w: usize) -> Result<Array1<f64>> {
        if self.couette {
            return Ok(Array1::ones(self.resolution.n_v));
        }
        let nt = self.nu * self.t;
        if nt == 0.0 {
            return Ok(self.y_of_v.mapv(|y| self.b0_derivative(y)));
        }
        let r = self.resolution;
        let wmax = r.l_v + 0.5;
        let hw = 2.0 * wmax / n_w as f64;
        let s = self.g_series();
        let interp = self
            .b_inverse_interp
            .as_ref()
            .ok_or_else(|| Error::ProfileDegeneracy("inverse interpolant unavailable".into()))?;
        let mut yw = Vec::with_capacity(n_w + 1);
        let mut weight = Vec::with_capacity(n_w + 1);
        for i in 0..=n_w {
            let w = -wmax + hw * i as f64;
            let mut y = interp.eval(w);
            for _ in 0..30 {
                let (b, db, _) = eval_b_with(&s, self.c_minus, y);
                let step = (b - w) / db;
                y -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            let (_, db_t, _) = eval_b_with(&s, self.c_minus, y);
            let end = if i == 0 || i == n_w { 0.5 } else { 1.0 };
            yw.push(y);
            weight.push(end * hw * self.b0_derivative(y) / db_t);
        }
        let norm = 1.0 / (4.0 * std::f64::consts::PI * nt).sqrt();
        Ok(self.y_of_v.mapv(|yv| {
            yw.iter()
                .zip(&weight)
                .map(|(&y, &wt)| {
                    let d = yv - y;
                    wt * (-d * d / (4.0 * nt)).exp()
                })
                .sum::<f64>()
                * norm
        }))
    }

    /// Runs the monotonicity, support, decay and (optionally) spectral checks.
    pub fn check_assumption(&self, spectral: bool) -> Result<AssumptionReport> {
        let n_fine = 8 * self.resolution.n_y;
        let r = self.resolution;
        let hf = 2.0 * r.l_y / n_fine as f64;
        let (mut mn, mut mx, mut bpp_max) = (f64::INFINITY, f64::NEG_INFINITY, 0.0_f64);
        let mut samples = Vec::with_capacity(n_fine);
        for j in 0..n_fine {
            let y = -r.l_y + hf * j as f64;
            let (_, db, d2b) = self.eval_b(y);
            mn = mn.min(db);
            mx = mx.max(db);
            bpp_max = bpp_max.max(d2b.abs());
            samples.push((y, d2b));
        }
        // Truncation ringing of the b'' series is bounded by its upper-band coefficients.
        let g = self.g_series();
        let ringing: f64 = (3 * g.n() / 8..g.n() / 2)
            .map(|m| 2.0 * g.c[m].norm() * g.xi(m))
            .sum();
        let floor = (1e-10 * bpp_max).max(10.0 * ringing);
        let support_radius = if bpp_max == 0.0 {
            0.0
        } else {
            samples
                .iter()
                .filter(|(_, d)| d.abs() > floor)
                .map(|(y, _)| y.abs())
                .fold(0.0, f64::max)
        };
        let sigma0 = self.sigma0;
        let monotone_ok = mn >= sigma0 * (1.0 - 1e-12) && mx <= (1.0 + 1e-12) / sigma0;
        let support_ok = support_radius <= 1.0 / sigma0;
        let decay_exponent = if self.couette {
            f64::INFINITY
        } else {
            self.bpp_decay_fit()?
        };
        let decay_ok = decay_exponent >= 0.9 * sigma0;
        let gevrey_sup = self.gevrey_sup(self.theta0);
        let spectral = if spectral {
            Some(crate::rayleigh::global_verdict(
                &crate::rayleigh::stability_verdict(
                    self,
                    1..=4,
                    crate::rayleigh::DEFAULT_TOLERANCE,
                    256,
                )?,
            ))
        } else {
            None
        };
        Ok(AssumptionReport {
            sigma0,
            min_dy_b: mn,
            max_dy_b: mx,
            monotone_ok,
            support_radius,
            support_ok,
            decay_exponent,
            decay_ok,
            theta0: self.theta0,
            gevrey_sup,
            spectral,
        })
    }

    /// Least-squares fit of `log env|b''^(xi)|` against `<xi>^{1/2}` on the resolved range,
    /// where `env` is the running maximum from the right (removes zeros of the transform).
    pub fn bpp_decay_fit(&self) -> Result<f64> {
        let n = self.resolution.n_y;
        let s = self.g_series();
        let amps: Vec<(f64, f64)> = (1..n / 2)
            .map(|m| {
                let xi = s.xi(m);
                (xi, 2.0 * self.resolution.l_y * xi * s.c[m].norm())
            })
            .collect();
        let peak = amps.iter().map(|a| a.1).fold(0.0, f64::max);
        let mut env = vec![0.0; amps.len()];
        let mut run = 0.0_f64;
        for i in (0..amps.len()).rev() {
            run = run.max(amps[i].1);
            env[i] = run;
        }
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (i, &(xi, _)) in amps.iter().enumerate() {
            if env[i] > 1e-11 * peak && xi >= 1.0 {
                xs.push((1.0 + xi * xi).powf(0.25));
                ys.push(env[i].ln());
            }
        }
        if xs.len() < 4 {
            return Err(Error::ProfileDegeneracy(
                "too few resolved modes to fit b'' decay".into(),
            ));
        }
        Ok(-fit_line(&xs, &ys)?.slope)
    }

    /// `||B||_inf + sup_xi exp(theta <xi>^{1/2}) |(d_v B)^(xi)|` with the continuous transform
    /// normalization `f^(xi) = int exp(-i xi v) f dv`.
    pub fn gevrey_sup(&self, theta: f64) -> f64 {
        let r = self.resolution;
        let bmax = self.coef_b.iter().cloned().fold(0.0, f64::max);
        let d = dv_1d(&self.coef_b, r.l_v);
        let s = Series::from_samples(d.as_slice().unwrap(), r.l_v);
        let sup = (0..r.n_v / 2)
            .map(|m| {
                let xi = s.xi(m);
                (theta * (1.0 + xi * xi).powf(0.25)).exp() * 2.0 * r.l_v * s.c[m].norm()
            })
            .fold(0.0, f64::max);
        bmax + sup
    }

    /// Operator-norm surrogate of `f -> (d_v^alpha B(t) - d_v^alpha B(0)) f` in the `<k, xi>^s`
    /// norm at `k = 1` over a fixed random probe set.
    pub fn coefficient_drift(&self, t: f64, alpha: u8) -> Result<f64> {
        self.coefficient_drift_with(t, alpha, 2.0, 16, 0x5eed)
    }

    pub fn coefficient_drift_with(
        &self,
        t: f64,
        alpha: u8,
        s: f64,
        probes: usize,
        seed: u64,
    ) -> Result<f64> {
        if alpha > 1 {
            return Err(Error::InvalidParameter(format!(
                "alpha must be 0 or 1, got {alpha}"
            )));
        }
        if self.couette {
            return Ok(0.0);
        }
        let pt = self.at_time(t)?;
        let r = self.resolution;
        let diff: Array1<f64> = if alpha == 0 {
            &pt.coef_b - &self.coef_b0
        } else {
            &dv_1d(&pt.coef_b, r.l_v) - &dv_1d(&self.coef_b0, r.l_v)
        };
        if diff.iter().all(|&x| x == 0.0) {
            return Ok(0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = r.n_v;
        let v = self.v_points();
        let mut worst = 0.0_f64;
        for _ in 0..probes {
            let width = 0.5 + 2.0 * rng.random::<f64>();
            let center = (rng.random::<f64>() - 0.5) * r.l_v;
            let freq = 4.0 * rng.random::<f64>();
            let f: Vec<f64> = v
                .iter()
                .map(|&x| (-(x - center).powi(2) / (2.0 * width * width)).exp() * (freq * x).cos())
                .collect();
            let prod: Vec<f64> = f.iter().zip(diff.iter()).map(|(a, b)| a * b).collect();
            let num = bracket_norm_1d(&prod, r.l_v, 1.0, s);
            let den = bracket_norm_1d(&f, r.l_v, 1.0, s);
            worst = worst.max(num / den);
            let _ = n;
        }
        Ok(worst)
    }
}

fn antiderivative(s: &Series, y: f64) -> f64 {
    let (_, _, p) = s.eval3(y);
    s.c[0].re * (y + s.l) + p - s.p_left
}

fn eval_b_with(s: &Series, c_minus: f64, y: f64) -> (f64, f64, f64) {
    let (g, dg, p) = s.eval3(y);
    (
        y + c_minus + s.c[0].re * (y + s.l) + p - s.p_left,
        1.0 + g,
        dg,
    )
}

/// `(sum_xi <k, xi>^{2s} |f^(xi)|^2)^{1/2}` of a real periodic sample vector, with the
/// bracket `<k, xi>^s = (1 + k^2)^{s/2} + (1 + xi^2)^{s/2}`.
pub fn bracket_norm_1d(samples: &[f64], l: f64, k: f64, s: f64) -> f64 {
    let series = Series::from_samples(samples, l);
    let n = samples.len();
    series
        .c
        .iter()
        .enumerate()
        .map(|(m, c)| {
            let xi = std::f64::consts::PI / l * signed_index(m, n) as f64;
            let w = crate::multipliers::bracket(k, xi, s);
            w * w * c.norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res() -> ProfileResolution {
        ProfileResolution::for_v_box(256, 10.0)
    }

    #[test]
    fn couette_is_exact() {
        let p = ShearProfile::couette(1e-3, res()).unwrap();
        let q = p.evolve_heat(10.0).unwrap();
        assert!(q
            .b_values
            .iter()
            .zip(q.y_points.iter())
            .all(|(a, b)| a == b));
        assert!(q.coef_b.iter().all(|&b| b == 1.0));
        assert!(q.coef_bprime.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn parse_builtins() {
        assert!(matches!(
            ProfileShape::parse("couette").unwrap(),
            ProfileShape::Couette
        ));
        assert!(matches!(
            ProfileShape::parse("tanh-bump:0.2,1.5").unwrap(),
            ProfileShape::TanhBump { .. }
        ));
        assert!(ProfileShape::parse("nope:1,2").is_err());
        assert!(ProfileShape::parse("tanh-bump:1").is_err());
    }

    #[test]
    fn profile_is_odd_and_monotone() {
        let p = ShearProfile::from_spec("gevrey-bump:0.2,1.0", 1e-3, res()).unwrap();
        let (b0, _, _) = p.eval_b(0.0);
        assert!(b0.abs() < 1e-13);
        let (bp, _, _) = p.eval_b(3.0);
        let (bm, _, _) = p.eval_b(-3.0);
        assert!((bp + bm).abs() < 1e-12);
        assert!(p.b_values.windows(2).into_iter().all(|w| w[1] > w[0]));
    }

    #[test]
    fn inverse_map_is_accurate() {
        let p = ShearProfile::from_spec("tanh-bump:0.3,1.0", 1e-3, res()).unwrap();
        let v = p.v_points();
        for (y, vv) in p.y_of_v.iter().zip(v.iter()) {
            assert!((p.eval_b(*y).0 - vv).abs() < 1e-12);
        }
    }

    #[test]
    fn bprime_matches_composition() {
        let p = ShearProfile::from_spec("tanh-bump:0.2,1.0", 1e-3, res()).unwrap();
        let comp = p.bprime_by_composition();
        let err = (&comp - &p.coef_bprime)
            .mapv(f64::abs)
            .fold(0.0_f64, |a, &b| a.max(b));
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn csv_samples_round_trip() {
        let y: Vec<f64> = (0..801).map(|i| -16.0 + 0.04 * i as f64).collect();
        let b: Vec<f64> = y.iter().map(|&x| x + 0.1 * (x / 1.5).tanh()).collect();
        let p = ShearProfile::new(
            ProfileShape::Samples {
                y: y.clone(),
                b: b.clone(),
            },
            0.0,
            res(),
            None,
        )
        .unwrap();
        for (yy, bb) in y.iter().zip(&b).step_by(50) {
            if yy.abs() < 12.0 {
                assert!((p.eval_b(*yy).0 - bb).abs() < 1e-5);
            }
        }
    }
}
