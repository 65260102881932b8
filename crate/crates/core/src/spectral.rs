//! Lag-window spectral estimation on the grid θ_h = πh/B, per-frequency
//! Hermitian eigendecomposition and the inverse transform back to lags.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GdfmError, Result};

/// Residue above which an inverse transform is rejected.
pub const IMAG_TOLERANCE: f64 = 1e-6;

pub fn bartlett_kernel(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        1.0 - x.abs()
    } else {
        0.0
    }
}

/// Autocovariances Γ_0..Γ_L; negative lags are obtained by transposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutocovarianceSet {
    pub lags: Vec<DMatrix<f64>>,
    /// Sample length the set was estimated from (0 when not sample based).
    pub n_obs: usize,
}

impl AutocovarianceSet {
    pub fn max_lag(&self) -> usize {
        self.lags.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.lags[0].nrows()
    }

    /// Γ_k for any sign of k.
    pub fn get(&self, k: isize) -> DMatrix<f64> {
        if k >= 0 {
            self.lags[k as usize].clone()
        } else {
            self.lags[(-k) as usize].transpose()
        }
    }

    /// Restriction to a set of series.
    pub fn select(&self, idx: &[usize]) -> AutocovarianceSet {
        let lags = self
            .lags
            .iter()
            .map(|g| DMatrix::from_fn(idx.len(), idx.len(), |r, c| g[(idx[r], idx[c])]))
            .collect();
        AutocovarianceSet {
            lags,
            n_obs: self.n_obs,
        }
    }
}

/// Sample autocovariances with divisor T of a centered n×T matrix.
pub fn sample_autocov(data: &DMatrix<f64>, max_lag: usize) -> Result<AutocovarianceSet> {
    let t = data.ncols();
    if max_lag >= t {
        return Err(GdfmError::InvalidInput(format!(
            "max_lag {max_lag} must be below T={t}"
        )));
    }
    let yt = data.transpose();
    let tf = t as f64;
    let mut lags = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        // Γ_k = T⁻¹ Σ_t Y_t Y'_{t-k}
        let mut g = yt.rows(k, t - k).tr_mul(&yt.rows(0, t - k));
        g /= tf;
        if k == 0 {
            g = (&g + g.transpose()) * 0.5;
        }
        lags.push(g);
    }
    Ok(AutocovarianceSet { lags, n_obs: t })
}

/// 2B+1 Hermitian matrices, stored in order h = −B..B.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub bandwidth: usize,
    pub matrices: Vec<DMatrix<Complex64>>,
}

impl SpectralDensity {
    pub fn n(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn frequency(&self, h: isize) -> f64 {
        PI * h as f64 / self.bandwidth as f64
    }

    pub fn at(&self, h: isize) -> &DMatrix<Complex64> {
        &self.matrices[(h + self.bandwidth as isize) as usize]
    }

    fn from_nonnegative(bandwidth: usize, half: Vec<DMatrix<Complex64>>) -> Self {
        let mut matrices: Vec<DMatrix<Complex64>> =
            half[1..].iter().rev().map(|m| m.map(|z| z.conj())).collect();
        matrices.extend(half);
        Self {
            bandwidth,
            matrices,
        }
    }
}

/// Lag-window estimator (2π)⁻¹ Σ_k K(k/B) e^{−ikθ_h} Γ_k with the Bartlett kernel.
pub fn estimate_spectrum(autocov: &AutocovarianceSet, bandwidth: usize) -> Result<SpectralDensity> {
    if bandwidth == 0 {
        return Err(GdfmError::InvalidInput("bandwidth must be positive".into()));
    }
    if autocov.n_obs > 0 && bandwidth >= autocov.n_obs {
        return Err(GdfmError::InvalidInput(format!(
            "bandwidth {bandwidth} must be below T={}",
            autocov.n_obs
        )));
    }
    // weights vanish at |k| = B, so lags up to B-1 are enough
    let needed = bandwidth - 1;
    if autocov.max_lag() < needed {
        return Err(GdfmError::InvalidInput(format!(
            "autocovariances cover lag {}, bandwidth {bandwidth} needs {needed}",
            autocov.max_lag()
        )));
    }
    let n = autocov.dim();
    let b = bandwidth as f64;
    let sym: Vec<(f64, DMatrix<f64>, DMatrix<f64>)> = (1..=needed)
        .map(|k| {
            let g = &autocov.lags[k];
            let gt = g.transpose();
            (bartlett_kernel(k as f64 / b), g + &gt, gt - g)
        })
        .collect();
    let g0 = &autocov.lags[0];
    let g0 = (g0 + g0.transpose()) * 0.5;
    let half: Vec<DMatrix<Complex64>> = (0..=bandwidth)
        .into_par_iter()
        .map(|h| {
            let theta = PI * h as f64 / b;
            let mut re = g0.clone();
            let mut im = DMatrix::<f64>::zeros(n, n);
            for (k, (w, s, d)) in sym.iter().enumerate() {
                let kt = (k + 1) as f64 * theta;
                let (wc, ws) = (w * kt.cos(), w * kt.sin());
                re.zip_apply(s, |a, b| *a += wc * b);
                im.zip_apply(d, |a, b| *a += ws * b);
            }
            let scale = 1.0 / (2.0 * PI);
            DMatrix::from_fn(n, n, |r, c| {
                Complex64::new(re[(r, c)] * scale, im[(r, c)] * scale)
            })
        })
        .collect();
    Ok(SpectralDensity::from_nonnegative(bandwidth, half))
}

/// Per-frequency eigenvalues (all, descending) and the leading eigenvectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<Vec<f64>>,
    pub eigenvectors: Vec<DMatrix<Complex64>>,
}

/// Descending eigenpairs of a Hermitian matrix with the phase convention applied:
/// each eigenvector is rotated so its largest-modulus entry is real and positive.
pub fn hermitian_eigen(m: &DMatrix<Complex64>, keep: usize) -> Option<(Vec<f64>, DMatrix<Complex64>)> {
    let n = m.nrows();
    let eig = m.clone().try_symmetric_eigen(1e-14, 0)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vecs = DMatrix::<Complex64>::zeros(n, keep);
    for (c, &j) in order.iter().take(keep).enumerate() {
        let col = eig.eigenvectors.column(j);
        let mut best = 0usize;
        for r in 1..n {
            if col[r].norm() > col[best].norm() {
                best = r;
            }
        }
        let pivot = col[best];
        let phase = if pivot.norm() > 0.0 {
            pivot.conj() / pivot.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for r in 0..n {
            vecs[(r, c)] = col[r] * phase;
        }
        vecs[(best, c)] = Complex64::new(vecs[(best, c)].norm(), 0.0);
    }
    Some((values, vecs))
}

/// Rank-k reconstruction P Λ P† at every frequency.
pub fn truncate_to_rank(
    spec: &SpectralDensity,
    k: usize,
) -> Result<(SpectralDensity, EigenDecomposition)> {
    let n = spec.n();
    if k == 0 || k >= n {
        return Err(GdfmError::InvalidInput(format!("rank {k} must lie in [1, {n})")));
    }
    let bw = spec.bandwidth as isize;
    let half: Vec<(Vec<f64>, DMatrix<Complex64>, DMatrix<Complex64>)> = (0..=bw)
        .into_par_iter()
        .map(|h| {
            let (vals, vecs) = hermitian_eigen(spec.at(h), k).ok_or(GdfmError::Eigen(h))?;
            let mut scaled = vecs.clone();
            for (c, mut col) in scaled.column_iter_mut().enumerate() {
                col *= Complex64::new(vals[c], 0.0);
            }
            let r = &scaled * vecs.adjoint();
            let r = (&r + r.adjoint()) * Complex64::new(0.5, 0.0);
            Ok((vals, vecs, r))
        })
        .collect::<Result<_>>()?;
    let mut eigenvalues = Vec::with_capacity(2 * spec.bandwidth + 1);
    let mut eigenvectors = Vec::with_capacity(2 * spec.bandwidth + 1);
    for (vals, vecs, _) in half[1..].iter().rev() {
        eigenvalues.push(vals.clone());
        eigenvectors.push(vecs.map(|z| z.conj()));
    }
    let mut recon = Vec::with_capacity(half.len());
    for (vals, vecs, r) in half {
        eigenvalues.push(vals);
        eigenvectors.push(vecs);
        recon.push(r);
    }
    Ok((
        SpectralDensity::from_nonnegative(spec.bandwidth, recon),
        EigenDecomposition {
            eigenvalues,
            eigenvectors,
        },
    ))
}

/// Γ_k = (π/B) Σ_{h=−B}^{B} e^{ikθ_h} Σ(θ_h) for k = 0..=max_lag.
pub fn inverse_ft(spec: &SpectralDensity, max_lag: usize) -> Result<AutocovarianceSet> {
    let bw = spec.bandwidth;
    if max_lag > bw {
        return Err(GdfmError::InvalidInput(format!(
            "lag {max_lag} exceeds bandwidth {bw}"
        )));
    }
    let n = spec.n();
    let w = PI / bw as f64;
    let mut lags = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let mut re = DMatrix::<f64>::zeros(n, n);
        let mut im = DMatrix::<f64>::zeros(n, n);
        for h in -(bw as isize)..=(bw as isize) {
            let a = k as f64 * spec.frequency(h);
            let (s, c) = a.sin_cos();
            let m = spec.at(h);
            for (idx, z) in m.iter().enumerate() {
                re[idx] += c * z.re - s * z.im;
                im[idx] += c * z.im + s * z.re;
            }
        }
        re *= w;
        im *= w;
        let scale = re.amax().max(1.0);
        let residue = im.amax();
        if residue > IMAG_TOLERANCE * scale {
            return Err(GdfmError::ImaginaryResidue {
                lag: k as isize,
                residue,
            });
        }
        if k == 0 {
            re = (&re + re.transpose()) * 0.5;
        }
        lags.push(re);
    }
    Ok(AutocovarianceSet { lags, n_obs: 0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeRow {
    /// Grid index of the frequency; not written out.
    #[serde(skip)]
    pub h: isize,
    pub frequency: f64,
    pub index: usize,
    pub normalized_eigenvalue: f64,
}

/// Leading eigenvalues at each frequency divided by the largest one there.
pub fn scree(spec: &SpectralDensity, top: usize) -> Result<Vec<ScreeRow>> {
    let n = spec.n();
    let top = top.clamp(1, n);
    let bw = spec.bandwidth as isize;
    let mut rows = Vec::new();
    for h in -bw..=bw {
        let (vals, _) = hermitian_eigen(spec.at(h), 0).ok_or(GdfmError::Eigen(h))?;
        let lead = vals[0];
        for (j, v) in vals.iter().take(top).enumerate() {
            rows.push(ScreeRow {
                h,
                frequency: spec.frequency(h),
                index: j + 1,
                normalized_eigenvalue: if lead > 0.0 { v / lead } else { 0.0 },
            });
        }
    }
    Ok(rows)
}
