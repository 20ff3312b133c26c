//! Discrete Rayleigh operator `L_k g = b g - b'' phi`, `(d_y^2 - k^2) phi = g`,
//! on a cell-centred periodized y-grid, and a numerical spectral-stability verdict.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::profile::ShearProfile;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
/// Largest relative change of an unstable eigenvalue under resolution doubling.
pub const DOUBLING_AGREEMENT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    ContinuousOnly,
    UnstableModeFound,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::ContinuousOnly => "continuous-only",
            Verdict::UnstableModeFound => "unstable-mode-found",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub k: i64,
    pub eigenvalues: Vec<Complex64>,
    pub max_imag: f64,
    pub resolution: usize,
    pub verdict: Verdict,
    pub tolerance: f64,
    /// Most unstable eigenvalue at the doubled resolution, when a doubling was run.
    pub confirmed: Option<Complex64>,
}

/// Half-width of the Rayleigh box used for a profile: 16, or less if the profile's y-box is smaller.
pub fn rayleigh_box(profile: &ShearProfile) -> f64 {
    16.0_f64.min(0.9 * profile.resolution.l_y)
}

/// `diag(b) - diag(b'') H_k` with `H_k = F^{-1} diag(-1/(xi^2 + k^2)) F` on `n` cell-centred
/// points of `[-l, l)`.
pub fn assemble_lk(profile: &ShearProfile, k: i64, n: usize, l: f64) -> Result<DMatrix<f64>> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "the Rayleigh operator needs k != 0".into(),
        ));
    }
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "Rayleigh grid must be even and >= 4, got {n}"
        )));
    }
    let h = 2.0 * l / n as f64;
    let kk = (k * k) as f64;
    let y: Vec<f64> = (0..n).map(|j| -l + (j as f64 + 0.5) * h).collect();
    let mut col = vec![0.0; n];
    for (d, cd) in col.iter_mut().enumerate() {
        let mut s = 0.0;
        for m in 0..n {
            let ms = if m < n / 2 {
                m as f64
            } else {
                m as f64 - n as f64
            };
            let xi = std::f64::consts::PI / l * ms;
            s += (xi * d as f64 * h).cos() / (xi * xi + kk);
        }
        *cd = -s / n as f64;
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let (b, _, bpp) = profile.eval_b(y[i]);
        a[(i, i)] += b;
        if bpp != 0.0 {
            for j in 0..n {
                let d = (i as i64 - j as i64).unsigned_abs() as usize;
                a[(i, j)] -= bpp * col[d];
            }
        }
    }
    Ok(a)
}

pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    let diag = (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)] == 0.0));
    if diag {
        return (0..a.nrows())
            .map(|i| Complex64::new(a[(i, i)], 0.0))
            .collect();
    }
    a.clone().complex_eigenvalues().iter().copied().collect()
}

fn most_unstable(ev: &[Complex64]) -> Complex64 {
    ev.iter()
        .copied()
        .fold(Complex64::new(0.0, f64::NEG_INFINITY), |m, z| {
            if z.im > m.im {
                z
            } else {
                m
            }
        })
}

/// Per-k spectral reports at resolution `n`, confirming candidate unstable modes at `2n`.
pub fn stability_verdict(
    profile: &ShearProfile,
    k_range: impl IntoIterator<Item = i64>,
    tolerance: f64,
    n: usize,
) -> Result<Vec<SpectrumReport>> {
    let l = rayleigh_box(profile);
    k_range
        .into_iter()
        .map(|k| {
            let ev = eigenvalues(&assemble_lk(profile, k, n, l)?);
            let top = most_unstable(&ev);
            let (verdict, confirmed) = if top.im <= tolerance {
                (Verdict::ContinuousOnly, None)
            } else {
                let ev2 = eigenvalues(&assemble_lk(profile, k, 2 * n, l)?);
                let top2 = most_unstable(&ev2);
                let agree = (top - top2).norm() <= DOUBLING_AGREEMENT * top2.norm().max(1e-300);
                if agree && top2.im > tolerance {
                    (Verdict::UnstableModeFound, Some(top2))
                } else {
                    (Verdict::Inconclusive, Some(top2))
                }
            };
            Ok(SpectrumReport {
                k,
                max_imag: top.im,
                eigenvalues: ev,
                resolution: n,
                verdict,
                tolerance,
                confirmed,
            })
        })
        .collect()
}

/// Worst case over reports: unstable > inconclusive > continuous.
pub fn global_verdict(reports: &[SpectrumReport]) -> Verdict {
    if reports
        .iter()
        .any(|r| r.verdict == Verdict::UnstableModeFound)
    {
        Verdict::UnstableModeFound
    } else if reports.iter().any(|r| r.verdict == Verdict::Inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::ContinuousOnly
    }
}

/// Largest `|Im lambda|` of the Couette operator, the discretization noise floor.
pub fn couette_noise_floor(n: usize, l: f64, k: i64) -> Result<f64> {
    let p = ShearProfile::couette(0.0, crate::profile::ProfileResolution::for_v_box(64, l))?;
    let a = assemble_lk(&p, k, n, l)?;
    let ev = a.complex_eigenvalues();
    Ok(ev.iter().map(|z| z.im.abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{ProfileResolution, ProfileShape};

    #[test]
    fn couette_matrix_is_diagonal_grid() {
        let p = ShearProfile::couette(0.0, ProfileResolution::for_v_box(64, 12.0)).unwrap();
        let a = assemble_lk(&p, 1, 32, 8.0).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                if i != j {
                    assert_eq!(a[(i, j)], 0.0);
                }
            }
            let y = -8.0 + (i as f64 + 0.5) * 0.5;
            assert!((a[(i, i)] - y).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_k_rejected() {
        let p = ShearProfile::couette(0.0, ProfileResolution::for_v_box(64, 12.0)).unwrap();
        assert!(assemble_lk(&p, 0, 32, 8.0).is_err());
    }

    #[test]
    fn zero_curvature_equals_couette() {
        let res = ProfileResolution::for_v_box(64, 12.0);
        let p = ShearProfile::new(
            ProfileShape::TanhBump {
                amplitude: 0.0,
                width: 1.0,
            },
            0.0,
            res,
            None,
        )
        .unwrap();
        let c = ShearProfile::couette(0.0, res).unwrap();
        let a = assemble_lk(&p, 2, 32, 8.0).unwrap();
        let b = assemble_lk(&c, 2, 32, 8.0).unwrap();
        assert!((a - b).abs().max() < 1e-13);
    }
}
