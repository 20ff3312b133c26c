//! Discrete function spaces on the periodized moving-frame box `T_z x [-L_v, L_v)`.
//!
//! Coefficients are stored in FFT order: row `i` carries the z-wavenumber
//! `k = signed(i, n_z)` and column `j` the v-wavenumber `eta = (pi / L_v) signed(j, n_v)`.
//! The forward transform is normalized so that `coeff(0,0)` is the spatial mean,
//! and `f(z, v) = sum c(k, eta) exp(i (k z + eta v))` with the physical sample
//! points `z_i = 2 pi i / n_z`, `v_j = -L_v + 2 L_v j / n_v`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Signed wavenumber index for FFT position `i` of an `n`-point transform.
#[inline]
pub fn signed_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub n_z: usize,
    pub n_v: usize,
    pub l_v: f64,
    pub dealias_fraction: f64,
}

impl Grid {
    pub fn new(n_z: usize, n_v: usize, l_v: f64) -> Result<Self> {
        Self::with_dealias(n_z, n_v, l_v, 2.0 / 3.0)
    }

    pub fn with_dealias(n_z: usize, n_v: usize, l_v: f64, dealias_fraction: f64) -> Result<Self> {
        if n_z == 0 || n_v == 0 || n_z % 2 != 0 || n_v % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "grid sizes must be even and positive, got {n_z} x {n_v}"
            )));
        }
        if !(l_v > 0.0 && l_v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "L_v must be positive, got {l_v}"
            )));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "dealias fraction must lie in (0,1], got {dealias_fraction}"
            )));
        }
        Ok(Grid {
            n_z,
            n_v,
            l_v,
            dealias_fraction,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_z, self.n_v)
    }

    #[inline]
    pub fn k(&self, i: usize) -> f64 {
        signed_index(i, self.n_z) as f64
    }

    #[inline]
    pub fn eta(&self, j: usize) -> f64 {
        std::f64::consts::PI / self.l_v * signed_index(j, self.n_v) as f64
    }

    /// Row index holding wavenumber `k`, if it is on the grid.
    pub fn k_index(&self, k: i64) -> Option<usize> {
        let h = (self.n_z / 2) as i64;
        if k < -h || k >= h {
            return None;
        }
        Some(if k >= 0 {
            k as usize
        } else {
            (k + self.n_z as i64) as usize
        })
    }

    /// Column index holding `eta = (pi / L_v) m`, if it is on the grid.
    pub fn eta_index(&self, m: i64) -> Option<usize> {
        let h = (self.n_v / 2) as i64;
        if m < -h || m >= h {
            return None;
        }
        Some(if m >= 0 {
            m as usize
        } else {
            (m + self.n_v as i64) as usize
        })
    }

    pub fn z(&self, i: usize) -> f64 {
        2.0 * std::f64::consts::PI * i as f64 / self.n_z as f64
    }

    pub fn v(&self, j: usize) -> f64 {
        -self.l_v + 2.0 * self.l_v * j as f64 / self.n_v as f64
    }

    pub fn v_points(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.n_v, |j| self.v(j))
    }

    pub fn eta_values(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.n_v, |j| self.eta(j))
    }

    /// Largest resolved |eta|.
    pub fn eta_max(&self) -> f64 {
        std::f64::consts::PI / self.l_v * (self.n_v / 2) as f64
    }

    /// Lebesgue measure of the box, so that `||f||^2_{L^2} = area * sum |c|^2`.
    pub fn area(&self) -> f64 {
        2.0 * std::f64::consts::PI * 2.0 * self.l_v
    }

    fn retained_1d(m: i64, n: usize, fraction: f64) -> bool {
        if fraction >= 1.0 {
            return true;
        }
        (m.unsigned_abs() as f64) < fraction * (n / 2) as f64
    }

    /// Whether the mode at position `(i, j)` survives dealiasing.
    pub fn retained(&self, i: usize, j: usize) -> bool {
        Self::retained_1d(signed_index(i, self.n_z), self.n_z, self.dealias_fraction)
            && Self::retained_1d(signed_index(j, self.n_v), self.n_v, self.dealias_fraction)
    }
}

/// Planned FFTs for one grid shape; cached per thread.
pub struct Transformer {
    n_z: usize,
    n_v: usize,
    fwd_z: Arc<dyn Fft<f64>>,
    inv_z: Arc<dyn Fft<f64>>,
    fwd_v: Arc<dyn Fft<f64>>,
    inv_v: Arc<dyn Fft<f64>>,
}

thread_local! {
    static PLANS: RefCell<HashMap<(usize, usize), Rc<Transformer>>> = RefCell::new(HashMap::new());
}

impl Transformer {
    fn new(n_z: usize, n_v: usize) -> Self {
        let mut p = FftPlanner::new();
        Transformer {
            n_z,
            n_v,
            fwd_z: p.plan_fft_forward(n_z),
            inv_z: p.plan_fft_inverse(n_z),
            fwd_v: p.plan_fft_forward(n_v),
            inv_v: p.plan_fft_inverse(n_v),
        }
    }

    pub fn for_grid(grid: &Grid) -> Rc<Transformer> {
        PLANS.with(|m| {
            m.borrow_mut()
                .entry((grid.n_z, grid.n_v))
                .or_insert_with(|| Rc::new(Transformer::new(grid.n_z, grid.n_v)))
                .clone()
        })
    }

    fn along_z(&self, data: &mut Array2<Complex64>, fft: &Arc<dyn Fft<f64>>) {
        let mut t: Vec<Complex64> = data.t().iter().copied().collect();
        fft.process(&mut t);
        let tv = ndarray::ArrayView2::from_shape((self.n_v, self.n_z), &t).expect("shape");
        data.assign(&tv.t());
    }

    fn along_v(&self, data: &mut Array2<Complex64>, fft: &Arc<dyn Fft<f64>>) {
        let s = data.as_slice_mut().expect("standard layout");
        fft.process(s);
    }

    /// Physical samples (complex) to normalized coefficients.
    pub fn forward(&self, mut data: Array2<Complex64>) -> Array2<Complex64> {
        if !data.is_standard_layout() {
            data = data.as_standard_layout().to_owned();
        }
        self.along_v(&mut data, &self.fwd_v);
        self.along_z(&mut data, &self.fwd_z);
        let scale = 1.0 / (self.n_z * self.n_v) as f64;
        for ((_, j), c) in data.indexed_iter_mut() {
            let sign = if signed_index(j, self.n_v) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            *c *= scale * sign;
        }
        data
    }

    /// Normalized coefficients to physical samples (complex).
    pub fn inverse(&self, mut data: Array2<Complex64>) -> Array2<Complex64> {
        if !data.is_standard_layout() {
            data = data.as_standard_layout().to_owned();
        }
        for ((_, j), c) in data.indexed_iter_mut() {
            if signed_index(j, self.n_v) % 2 != 0 {
                *c = -*c;
            }
        }
        self.along_v(&mut data, &self.inv_v);
        self.along_z(&mut data, &self.inv_z);
        data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: Grid,
    pub coeffs: Array2<Complex64>,
    pub reality_flag: bool,
}

impl SpectralField {
    pub fn zeros(grid: &Grid) -> Self {
        SpectralField {
            grid: *grid,
            coeffs: Array2::zeros(grid.shape()),
            reality_flag: true,
        }
    }

    pub fn from_coeffs(grid: &Grid, coeffs: Array2<Complex64>, reality_flag: bool) -> Result<Self> {
        if coeffs.dim() != grid.shape() {
            return Err(Error::Dimension {
                expected: format!("{:?}", grid.shape()),
                got: format!("{:?}", coeffs.dim()),
            });
        }
        Ok(SpectralField {
            grid: *grid,
            coeffs,
            reality_flag,
        })
    }

    /// Coefficient of `exp(i (k z + (pi/L_v) m v))`, zero if off-grid.
    pub fn coeff(&self, k: i64, m: i64) -> Complex64 {
        match (self.grid.k_index(k), self.grid.eta_index(m)) {
            (Some(i), Some(j)) => self.coeffs[[i, j]],
            _ => Complex64::new(0.0, 0.0),
        }
    }

    pub fn set_coeff(&mut self, k: i64, m: i64, value: Complex64) {
        if let (Some(i), Some(j)) = (self.grid.k_index(k), self.grid.eta_index(m)) {
            self.coeffs[[i, j]] = value;
        }
    }

    /// Zero mode in z, `P_0 f`.
    pub fn p0(&self) -> SpectralField {
        let mut out = SpectralField::zeros(&self.grid);
        out.coeffs.row_mut(0).assign(&self.coeffs.row(0));
        out.reality_flag = self.reality_flag;
        out
    }

    /// Nonzero modes in z, `f - P_0 f`.
    pub fn pneq(&self) -> SpectralField {
        let mut out = self.clone();
        out.coeffs.row_mut(0).fill(Complex64::new(0.0, 0.0));
        out
    }

    pub fn map_symbol<F: Fn(f64, f64) -> Complex64>(&self, symbol: F) -> SpectralField {
        let mut out = self.clone();
        for ((i, j), c) in out.coeffs.indexed_iter_mut() {
            *c *= symbol(self.grid.k(i), self.grid.eta(j));
        }
        out
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        let mut out = self.clone();
        out.coeffs.mapv_inplace(|c| c * a);
        out
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.coeffs += &other.coeffs;
        out.reality_flag = self.reality_flag && other.reality_flag;
        out
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.coeffs -= &other.coeffs;
        out.reality_flag = self.reality_flag && other.reality_flag;
        out
    }

    /// Sum of `|c|^2` over all modes.
    pub fn coeff_norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Physical `L^2` norm on the box.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.area() * self.coeff_norm_sqr()).sqrt()
    }

    /// Real `L^2` inner product on the box.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        self.grid.area()
            * self
                .coeffs
                .iter()
                .zip(other.coeffs.iter())
                .map(|(a, b)| (a.conj() * b).re)
                .sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    /// Largest violation of `c(-k,-eta) = conj(c(k,eta))`, relative to the largest coefficient.
    /// Nyquist rows/columns pair with themselves.
    pub fn hermitian_defect(&self) -> f64 {
        let (nz, nv) = self.grid.shape();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut worst = 0.0_f64;
        for ((i, j), c) in self.coeffs.indexed_iter() {
            let ii = (nz - i) % nz;
            let jj = (nv - j) % nv;
            let d = (c - self.coeffs[[ii, jj]].conj()).norm();
            worst = worst.max(d);
        }
        worst / scale
    }

    /// Modes outside the retained set are zeroed.
    pub fn dealias(&self) -> SpectralField {
        let mut out = self.clone();
        dealias_in_place(&mut out.coeffs, &self.grid);
        out
    }
}

pub fn dealias_in_place(coeffs: &mut Array2<Complex64>, grid: &Grid) {
    if grid.dealias_fraction >= 1.0 {
        return;
    }
    for ((i, j), c) in coeffs.indexed_iter_mut() {
        if !grid.retained(i, j) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

pub fn transform(physical: &Array2<f64>, grid: &Grid) -> Result<SpectralField> {
    if physical.dim() != grid.shape() {
        return Err(Error::Dimension {
            expected: format!("{:?}", grid.shape()),
            got: format!("{:?}", physical.dim()),
        });
    }
    let data = physical.mapv(|x| Complex64::new(x, 0.0));
    let coeffs = Transformer::for_grid(grid).forward(data);
    Ok(SpectralField {
        grid: *grid,
        coeffs,
        reality_flag: true,
    })
}

pub fn transform_complex(physical: &Array2<Complex64>, grid: &Grid) -> Result<SpectralField> {
    if physical.dim() != grid.shape() {
        return Err(Error::Dimension {
            expected: format!("{:?}", grid.shape()),
            got: format!("{:?}", physical.dim()),
        });
    }
    let coeffs = Transformer::for_grid(grid).forward(physical.clone());
    Ok(SpectralField {
        grid: *grid,
        coeffs,
        reality_flag: false,
    })
}

/// Real part of the synthesized field.
pub fn inverse_transform(f: &SpectralField) -> Array2<f64> {
    inverse_transform_complex(f).mapv(|c| c.re)
}

pub fn inverse_transform_complex(f: &SpectralField) -> Array2<Complex64> {
    Transformer::for_grid(&f.grid).inverse(f.coeffs.clone())
}

/// Frequency-space operators of the moving frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    Dz,
    Dv,
    /// `d_v - t d_z`
    DvMinusTDz,
    /// `Delta_L`, symbol `-(k^2 + (eta - k t)^2)`
    LapL,
    /// `Delta_L^{-1}` on `P_neq`
    LapLInv,
    /// `(-Delta_L)^{1/2}` on `P_neq`
    NegLapLHalf,
    /// `(-Delta_L)^{-1/2}` on `P_neq`
    NegLapLInvHalf,
}

impl Operator {
    fn is_inverse_like(self) -> bool {
        matches!(
            self,
            Operator::LapLInv | Operator::NegLapLHalf | Operator::NegLapLInvHalf
        )
    }

    pub fn symbol(self, k: f64, eta: f64, t: f64) -> Complex64 {
        let i = Complex64::new(0.0, 1.0);
        let s = k * k + (eta - k * t) * (eta - k * t);
        match self {
            Operator::Dz => i * k,
            Operator::Dv => i * eta,
            Operator::DvMinusTDz => i * (eta - k * t),
            Operator::LapL => Complex64::new(-s, 0.0),
            Operator::LapLInv => Complex64::new(if k == 0.0 { 0.0 } else { -1.0 / s }, 0.0),
            Operator::NegLapLHalf => Complex64::new(if k == 0.0 { 0.0 } else { s.sqrt() }, 0.0),
            Operator::NegLapLInvHalf => {
                Complex64::new(if k == 0.0 { 0.0 } else { 1.0 / s.sqrt() }, 0.0)
            }
        }
    }
}

/// Applies a moving-frame operator at time `t`.
///
/// The inverse-type and half-power tags act on `P_neq`; their output has zero `k = 0` row.
/// With `strict`, nonzero `k = 0` input to those tags is a degenerate-symbol error.
pub fn apply_operator(
    f: &SpectralField,
    op: Operator,
    t: f64,
    strict: bool,
) -> Result<SpectralField> {
    if strict && op.is_inverse_like() {
        let zero_row = f.coeffs.row(0).iter().map(|c| c.norm()).fold(0.0, f64::max);
        let scale = f.max_abs();
        if zero_row > 1e-14 * scale.max(1e-300) && zero_row > 0.0 {
            return Err(Error::DegenerateSymbol(format!(
                "{op:?} applied to a field with k = 0 content of size {zero_row:.3e}"
            )));
        }
    }
    Ok(f.map_symbol(|k, eta| op.symbol(k, eta, t)))
}

thread_local! {
    static PLANS_1D: RefCell<HashMap<usize, (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>> = RefCell::new(HashMap::new());
}

fn plans_1d(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANS_1D.with(|m| {
        m.borrow_mut()
            .entry(n)
            .or_insert_with(|| {
                let mut p = FftPlanner::new();
                (p.plan_fft_forward(n), p.plan_fft_inverse(n))
            })
            .clone()
    })
}

/// Samples at `v_j = -L + 2 L j / n` to coefficients of `exp(i eta v)`, same convention as the 2D transform.
pub fn forward_1d(samples: &[Complex64]) -> Vec<Complex64> {
    let n = samples.len();
    let (fwd, _) = plans_1d(n);
    let mut buf = samples.to_vec();
    fwd.process(&mut buf);
    let scale = 1.0 / n as f64;
    for (j, c) in buf.iter_mut().enumerate() {
        *c *= if signed_index(j, n) % 2 == 0 {
            scale
        } else {
            -scale
        };
    }
    buf
}

/// Inverse of [`forward_1d`].
pub fn inverse_1d(coeffs: &[Complex64]) -> Vec<Complex64> {
    let n = coeffs.len();
    let (_, inv) = plans_1d(n);
    let mut buf: Vec<Complex64> = coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| if signed_index(j, n) % 2 == 0 { *c } else { -*c })
        .collect();
    inv.process(&mut buf);
    buf
}

/// Spectral derivative along v of a periodic 1D sample vector on the grid points `v_j`.
pub fn dv_1d(values: &Array1<f64>, l_v: f64) -> Array1<f64> {
    let n = values.len();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fwd.process(&mut buf);
    for (j, c) in buf.iter_mut().enumerate() {
        let m = signed_index(j, n);
        let eta = if m == -((n / 2) as i64) {
            0.0
        } else {
            std::f64::consts::PI / l_v * m as f64
        };
        *c *= Complex64::new(0.0, eta) / n as f64;
    }
    inv.process(&mut buf);
    Array1::from_iter(buf.iter().map(|c| c.re))
}

/// Multiplies every row of a coefficient array in physical space by a v-dependent function.
pub fn multiply_by_v_function(f: &SpectralField, g: &Array1<f64>) -> SpectralField {
    let tr = Transformer::for_grid(&f.grid);
    let mut phys = tr.inverse(f.coeffs.clone());
    for mut row in phys.axis_iter_mut(Axis(0)) {
        for (x, gv) in row.iter_mut().zip(g.iter()) {
            *x *= *gv;
        }
    }
    SpectralField {
        grid: f.grid,
        coeffs: tr.forward(phys),
        reality_flag: f.reality_flag,
    }
}

/// Leading bytes of the binary field format.
pub const FIELD_MAGIC: [u8; 8] = *b"SHLBFLD1";

impl SpectralField {
    /// Flat little-endian layout: 32-byte header (magic, `n_z`, `n_v` as `u64`, `L_v` as `f64`),
    /// then `(re, im)` pairs in row-major order.
    pub fn write_binary<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&FIELD_MAGIC)?;
        w.write_all(&(self.grid.n_z as u64).to_le_bytes())?;
        w.write_all(&(self.grid.n_v as u64).to_le_bytes())?;
        w.write_all(&self.grid.l_v.to_le_bytes())?;
        let mut buf = Vec::with_capacity(16 * self.coeffs.len());
        for c in self.coeffs.iter() {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Inverse of [`write_binary`](Self::write_binary); the dealias fraction is the default.
    pub fn read_binary<R: std::io::Read>(r: &mut R) -> Result<SpectralField> {
        let mut head = [0u8; 32];
        r.read_exact(&mut head)?;
        if head[..8] != FIELD_MAGIC {
            return Err(Error::Parse("not a spectral field file".into()));
        }
        let word = |a: usize| <[u8; 8]>::try_from(&head[a..a + 8]).unwrap();
        let n_z = u64::from_le_bytes(word(8)) as usize;
        let n_v = u64::from_le_bytes(word(16)) as usize;
        let l_v = f64::from_le_bytes(word(24));
        let grid = Grid::new(n_z, n_v, l_v)?;
        let mut body = vec![0u8; 16 * n_z * n_v];
        r.read_exact(&mut body)?;
        let vals: Vec<Complex64> = body
            .chunks_exact(16)
            .map(|b| {
                let re = f64::from_le_bytes(b[..8].try_into().unwrap());
                let im = f64::from_le_bytes(b[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        let coeffs =
            Array2::from_shape_vec((n_z, n_v), vals).map_err(|e| Error::Parse(e.to_string()))?;
        let mut f = SpectralField {
            grid,
            coeffs,
            reality_flag: true,
        };
        f.reality_flag = f.hermitian_defect() < 1e-12;
        Ok(f)
    }

    /// One line per stored mode: `k,m,eta,re,im`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Parse(e.to_string());
        out.write_record(["k", "m", "eta", "re", "im"])
            .map_err(csv_err)?;
        for ((i, j), c) in self.coeffs.indexed_iter() {
            out.write_record(&[
                signed_index(i, self.grid.n_z).to_string(),
                signed_index(j, self.grid.n_v).to_string(),
                self.grid.eta(j).to_string(),
                c.re.to_string(),
                c.im.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}
