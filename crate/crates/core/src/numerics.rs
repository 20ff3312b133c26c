//! Small numerical building blocks shared by the solvers.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::InvalidParameter(
                "monotone cubic needs >= 2 matching samples".into(),
            ));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::ProfileDegeneracy(
                "interpolation nodes are not strictly increasing".into(),
            ));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] <= 0.0 {
                d[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d[0] = end_slope(
            h[0],
            h.get(1).copied().unwrap_or(h[0]),
            delta[0],
            delta.get(1).copied().unwrap_or(delta[0]),
        );
        d[n - 1] = end_slope(
            h[n - 2],
            if n > 2 { h[n - 3] } else { h[n - 2] },
            delta[n - 2],
            if n > 2 { delta[n - 3] } else { delta[n - 2] },
        );
        Ok(MonotoneCubic { x, y, d })
    }

    pub fn eval(&self, xq: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|&xi| xi <= xq) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (xq - self.x[i]) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }

    pub fn derivative(&self, xq: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|&xi| xi <= xq) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (xq - self.x[i]) / h;
        let dh00 = 6.0 * s * s - 6.0 * s;
        let dh10 = 3.0 * s * s - 4.0 * s + 1.0;
        let dh01 = -6.0 * s * s + 6.0 * s;
        let dh11 = 3.0 * s * s - 2.0 * s;
        (dh00 * self.y[i] + dh01 * self.y[i + 1]) / h + dh10 * self.d[i] + dh11 * self.d[i + 1]
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

/// Gauss-Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        x[i] = mid - half * z;
        x[n - 1 - i] = mid + half * z;
        let wi = 2.0 * half / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Ordinary least squares line fit `y = intercept + slope x`.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_stderr: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InvalidParameter(
            "line fit needs >= 2 matching points".into(),
        ));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidParameter(
            "line fit abscissae are degenerate".into(),
        ));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr,
    })
}

/// Two-sided Student-t quantile at 97.5% for `dof` degrees of freedom (table + normal tail).
pub fn t_quantile_975(dof: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
        2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
        2.052, 2.048, 2.045, 2.042,
    ];
    match dof {
        0 => f64::INFINITY,
        d if d <= 30 => TABLE[d - 1],
        _ => 1.960,
    }
}

pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct KrylovStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Right-preconditioned restarted GMRES for complex systems `A x = b`.
///
/// `apply` computes `A y`, `precond` computes `M^{-1} y`; `x` holds the initial guess on entry.
pub fn gmres<A, P>(
    apply: A,
    precond: P,
    b: &[Complex64],
    x: &mut [Complex64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<KrylovStats>
where
    A: Fn(&[Complex64]) -> Vec<Complex64>,
    P: Fn(&[Complex64]) -> Vec<Complex64>,
{
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        return Ok(KrylovStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut total = 0;
    loop {
        let ax = apply(x);
        let r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        if beta / bnorm <= tol {
            return Ok(KrylovStats {
                iterations: total,
                relative_residual: beta / bnorm,
            });
        }
        if total >= max_iter {
            return Err(Error::NoConvergence {
                residual: beta / bnorm,
                iterations: total,
            });
        }
        let m = restart;
        let mut vs: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
        vs.push(r.iter().map(|c| c / beta).collect());
        let mut h = vec![vec![Complex64::new(0.0, 0.0); m]; m + 1];
        let mut cs = vec![Complex64::new(0.0, 0.0); m];
        let mut sn = vec![Complex64::new(0.0, 0.0); m];
        let mut g = vec![Complex64::new(0.0, 0.0); m + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut zs: Vec<Vec<Complex64>> = Vec::with_capacity(m);
        let mut used = 0;
        for j in 0..m {
            let z = precond(&vs[j]);
            let mut w = apply(&z);
            zs.push(z);
            for i in 0..=j {
                let hij = dot(&vs[i], &w);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(&vs[i]) {
                    *wk -= hij * vk;
                }
            }
            let hn = norm(&w);
            h[j + 1][j] = Complex64::new(hn, 0.0);
            for i in 0..j {
                let t = cs[i].conj() * h[i][j] + sn[i].conj() * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let a = h[j][j];
            let bb = h[j + 1][j];
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if den == 0.0 {
                cs[j] = Complex64::new(1.0, 0.0);
                sn[j] = Complex64::new(0.0, 0.0);
            } else {
                cs[j] = a / den;
                sn[j] = bb / den;
            }
            h[j][j] = cs[j].conj() * a + sn[j].conj() * bb;
            h[j + 1][j] = Complex64::new(0.0, 0.0);
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j].conj() * g[j];
            used = j + 1;
            total += 1;
            if g[j + 1].norm() / bnorm <= tol * 0.5 || hn == 0.0 || total >= max_iter {
                break;
            }
            vs.push(w.iter().map(|c| c / hn).collect());
        }
        let mut yv = vec![Complex64::new(0.0, 0.0); used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for l in i + 1..used {
                s -= h[i][l] * yv[l];
            }
            yv[i] = s / h[i][i];
        }
        for (l, yl) in yv.iter().enumerate() {
            for (xk, zk) in x.iter_mut().zip(&zs[l]) {
                *xk += yl * zk;
            }
        }
        let _ = n;
    }
}

/// Complex band matrix with `kl` sub- and `ku` super-diagonals, stored with room for the
/// fill-in of partial pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![Complex64::new(0.0, 0.0); n * width],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    /// Adds `value` at `(i, j)`; panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, value: Complex64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "({i}, {j}) outside the band"
        );
        let id = self.idx(i, j);
        self.data[id] += value;
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// LU factorization with partial pivoting.
    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let (kl, reach) = (self.kl, self.kl + self.ku);
        let mut piv = vec![0usize; n];
        for c in 0..n {
            let last = (c + kl).min(n - 1);
            let mut p = c;
            let mut best = self.data[self.idx(c, c)].norm();
            for r in c + 1..=last {
                let v = self.data[self.idx(r, c)].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(Error::Singular(format!(
                    "band matrix has a zero pivot in column {c}"
                )));
            }
            piv[c] = p;
            let jmax = (c + reach).min(n - 1);
            if p != c {
                for j in c..=jmax {
                    let (a, b) = (self.idx(c, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
            }
            let d = self.data[self.idx(c, c)];
            for r in c + 1..=last {
                let ir = self.idx(r, c);
                let l = self.data[ir] / d;
                self.data[ir] = l;
                if l == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in c + 1..=jmax {
                    let u = self.data[self.idx(c, j)];
                    let id = self.idx(r, j);
                    self.data[id] -= l * u;
                }
            }
        }
        Ok(BandedLu { m: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandedLu {
    /// Overwrites `b` with the solution of `A x = b`.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let m = &self.m;
        let n = m.n;
        let reach = m.kl + m.ku;
        for c in 0..n {
            b.swap(c, self.piv[c]);
            let bc = b[c];
            for r in c + 1..=(c + m.kl).min(n - 1) {
                b[r] -= m.data[m.idx(r, c)] * bc;
            }
        }
        for c in (0..n).rev() {
            let mut s = b[c];
            for j in c + 1..=(c + reach).min(n - 1) {
                s -= m.data[m.idx(c, j)] * b[j];
            }
            b[c] = s / m.data[m.idx(c, c)];
        }
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn banded_lu_matches_dense_reference() {
        let n = 40;
        let mut a = BandMatrix::zeros(n, 3, 2);
        let mut dense = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for i in 0..n {
            for j in i.saturating_sub(3)..=(i + 2).min(n - 1) {
                // Small diagonal forces pivoting.
                let v = Complex64::new(
                    ((i * 7 + j * 3) % 11) as f64 - 5.0,
                    ((i + 2 * j) % 5) as f64 * 0.3,
                );
                let v = if i == j { v * 1e-3 } else { v };
                a.add(i, j, v);
                dense[i][j] = v;
            }
        }
        let x: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(i as f64 * 0.1, 1.0 - i as f64 * 0.05))
            .collect();
        let b: Vec<Complex64> = (0..n)
            .map(|i| (0..n).map(|j| dense[i][j] * x[j]).sum())
            .collect();
        assert!(a
            .matvec(&x)
            .iter()
            .zip(&b)
            .all(|(p, q)| (p - q).norm() < 1e-12));
        let lu = a.factor().unwrap();
        let mut y = b.clone();
        lu.solve_in_place(&mut y);
        let err = y
            .iter()
            .zip(&x)
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    use super::*;

    #[test]
    fn monotone_cubic_reproduces_cubic_data_monotonically() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|&t| t + 0.3 * t.sin()).collect();
        let p = MonotoneCubic::new(x, y).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..400 {
            let t = i as f64 * 0.00975;
            let v = p.eval(t);
            assert!(v >= prev);
            prev = v;
            assert!((v - (t + 0.3 * t.sin())).abs() < 1e-4);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8, -1.0, 2.0);
        let s: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(15)).sum();
        let exact = (2f64.powi(16) - 1.0) / 16.0;
        assert!((s - exact).abs() < 1e-10 * exact);
        let (x, w) = gauss_legendre(32, 0.0, std::f64::consts::PI);
        let s: f64 = x.iter().zip(&w).map(|(a, b)| b * a.sin()).sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(f.slope_stderr < 1e-12);
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 30;
        let a = |x: &[Complex64]| -> Vec<Complex64> {
            (0..n)
                .map(|i| {
                    let mut s = x[i] * Complex64::new(4.0 + i as f64 * 0.1, 0.5);
                    if i > 0 {
                        s += x[i - 1] * 0.7;
                    }
                    if i + 1 < n {
                        s -= x[i + 1] * Complex64::new(0.2, 0.9);
                    }
                    s
                })
                .collect()
        };
        let b: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new((i as f64).cos(), 1.0))
            .collect();
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        let st = gmres(a, |v: &[Complex64]| v.to_vec(), &b, &mut x, 1e-13, 10, 500).unwrap();
        let r = a(&x);
        let res: f64 = norm(&r.iter().zip(&b).map(|(p, q)| p - q).collect::<Vec<_>>()) / norm(&b);
        assert!(res < 1e-12, "{res} after {}", st.iterations);
    }
}
