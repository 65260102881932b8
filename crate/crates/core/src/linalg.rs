//! Small dense helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

/// Spectral radius of the companion matrix of x_t = Σ_j A_j x_{t−j}.
pub fn companion_radius(coefs: &[DMatrix<f64>]) -> f64 {
    let p = coefs.len();
    if p == 0 {
        return 0.0;
    }
    let d = coefs[0].nrows();
    if p == 1 && d == 1 {
        return coefs[0][(0, 0)].abs();
    }
    let mut c = DMatrix::<f64>::zeros(p * d, p * d);
    for (j, a) in coefs.iter().enumerate() {
        c.view_mut((0, j * d), (d, d)).copy_from(a);
    }
    for r in d..p * d {
        c[(r, r - d)] = 1.0;
    }
    if c.amax() == 0.0 {
        return 0.0;
    }
    match nalgebra::linalg::Schur::try_new(c.clone(), f64::EPSILON, 10_000) {
        Some(s) => s.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        None => power_radius(c),
    }
}

/// Gelfand estimate ‖C^k‖^{1/k} at k = 2^20 by repeated normalized squaring.
fn power_radius(mut c: DMatrix<f64>) -> f64 {
    let mut log_scale = 0.0;
    let mut k = 1.0;
    for _ in 0..20 {
        let n = c.norm();
        if n == 0.0 {
            return 0.0;
        }
        c /= n;
        log_scale = 2.0 * (log_scale + n.ln());
        c = &c * &c;
        k *= 2.0;
    }
    ((log_scale + c.norm().ln()) / k).exp()
}

/// Scales A_j by s^j, which multiplies every companion eigenvalue by s.
pub fn scale_roots(coefs: &mut [DMatrix<f64>], s: f64) {
    let mut f = 1.0;
    for a in coefs.iter_mut() {
        f *= s;
        *a *= f;
    }
}

/// Moves all companion eigenvalues inside `target` when the radius exceeds it.
/// Returns the radius before the adjustment.
pub fn stabilize(coefs: &mut [DMatrix<f64>], target: f64) -> f64 {
    let r = companion_radius(coefs);
    if r >= 1.0 {
        scale_roots(coefs, target / r);
    }
    r
}

/// Impulse responses Ψ_0..Ψ_K of A(L)⁻¹ with A(L) = I − Σ_j A_j L^j.
pub fn inverse_var_filter(coefs: &[DMatrix<f64>], dim: usize, max_lag: usize) -> Vec<DMatrix<f64>> {
    let mut psi: Vec<DMatrix<f64>> = Vec::with_capacity(max_lag + 1);
    psi.push(DMatrix::identity(dim, dim));
    for k in 1..=max_lag {
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        for (j, a) in coefs.iter().enumerate().take(k) {
            m.gemm(1.0, a, &psi[k - j - 1], 1.0);
        }
        psi.push(m);
    }
    psi
}

/// Truncated inverse d(L) = c(L)⁻¹ of a scalar AR polynomial 1 − Σ c_j L^j.
pub fn inverse_ar(coefs: &[f64], max_lag: usize) -> Vec<f64> {
    let mut d = Vec::with_capacity(max_lag + 1);
    d.push(1.0);
    for k in 1..=max_lag {
        let mut s = 0.0;
        for (j, c) in coefs.iter().enumerate().take(k) {
            s += c * d[k - j - 1];
        }
        d.push(s);
    }
    d
}

/// Leading `k` eigenvectors of a real symmetric matrix, descending eigenvalues.
pub fn top_eigenvectors(m: &DMatrix<f64>, k: usize) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = DVector::from_iterator(k, order.iter().take(k).map(|&j| eig.eigenvalues[j]));
    let mut vecs = DMatrix::<f64>::zeros(m.nrows(), k);
    for (c, &j) in order.iter().take(k).enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(j));
    }
    (vals, vecs)
}

/// Eigenvalue condition number of a symmetric matrix (∞ if not positive definite).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let ev = m.clone().symmetric_eigenvalues();
    let max = ev.iter().copied().fold(f64::MIN, f64::max);
    let min = ev.iter().copied().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// log det of a symmetric positive definite matrix, or None.
pub fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let ch = sym.cholesky()?;
    Some(ch.l_dirty().diagonal().iter().map(|v| 2.0 * v.ln()).sum())
}

/// Splits `total` into (part', rest) with `part' + rest == total` in floating
/// point, keeping part' within one ulp of `part`. Falls back to plain
/// subtraction when no such pair is nearby (heavy cancellation).
pub fn exact_split(total: f64, part: f64) -> (f64, f64) {
    let rest = total - part;
    for r in [rest, rest.next_up(), rest.next_down()] {
        if part + r == total {
            return (part, r);
        }
    }
    let back = total - rest;
    for p in [back, back.next_up(), back.next_down(), part.next_up(), part.next_down()] {
        for r in [rest, total - p] {
            if p + r == total {
                return (p, r);
            }
        }
    }
    (part, rest)
}
