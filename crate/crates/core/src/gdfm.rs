//! One estimation stage of the generalized dynamic factor model: dynamic PCA,
//! blockwise Yule-Walker VARs over random partitions, static PCA on the
//! filtered panel, permutation averaging and per-series idiosyncratic ARs.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GdfmError, Result};
use crate::linalg;
use crate::panel_io::{center_rows, PipelineConfig, MIN_PERIODS};
use crate::spectral::{estimate_spectrum, inverse_ft, sample_autocov, truncate_to_rank, AutocovarianceSet};

/// Condition number above which a Yule-Walker system counts as singular.
pub const MAX_CONDITION: f64 = 1e12;
/// Radius unstable VAR blocks are pulled back to.
pub const STABLE_RADIUS: f64 = 0.99;

/// Fitted VAR of one block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarFit {
    /// A_1..A_p.
    pub coefs: Vec<DMatrix<f64>>,
    pub order: usize,
    pub innovation_cov: DMatrix<f64>,
    /// Ridge added to the Toeplitz system, if any.
    pub ridge: Option<f64>,
    /// Companion radius before any stabilization.
    pub radius: f64,
    pub stabilized: bool,
}

impl VarFit {
    pub fn dim(&self) -> usize {
        self.innovation_cov.nrows()
    }
}

fn toeplitz(ac: &AutocovarianceSet, p: usize) -> DMatrix<f64> {
    let d = ac.dim();
    let mut c = DMatrix::<f64>::zeros(p * d, p * d);
    for r in 0..p {
        for s in 0..p {
            let g = ac.get(s as isize - r as isize);
            c.view_mut((r * d, s * d), (d, d)).copy_from(&g);
        }
    }
    (&c + c.transpose()) * 0.5
}

/// Regularization of the block Toeplitz system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YwRegularization {
    /// Ridge ε = shrinkage·trace(𝒞)/dim added to every system (0 disables).
    pub shrinkage: f64,
    /// Fall back to a 1e-8 relative ridge when cond(𝒞) > 1e12 instead of failing.
    pub ridge_fallback: bool,
}

impl Default for YwRegularization {
    fn default() -> Self {
        Self {
            shrinkage: DEFAULT_SHRINKAGE,
            ridge_fallback: true,
        }
    }
}

impl YwRegularization {
    /// Plain Yule-Walker without any ridge.
    pub const NONE: Self = Self {
        shrinkage: 0.0,
        ridge_fallback: false,
    };
}

/// Default relative ridge on the Yule-Walker system.
pub const DEFAULT_SHRINKAGE: f64 = 0.03;

/// Solves (A_1..A_p) 𝒞 = (Γ_1..Γ_p) for a fixed order on autocovariances of one block.
pub fn yule_walker(ac: &AutocovarianceSet, p: usize, reg: YwRegularization) -> Result<VarFit> {
    let d = ac.dim();
    if p == 0 || p > ac.max_lag() {
        return Err(GdfmError::InvalidInput(format!(
            "order {p} needs autocovariances up to lag {p}, have {}",
            ac.max_lag()
        )));
    }
    let mut c = toeplitz(ac, p);
    let scale = c.trace() / (p * d) as f64;
    let mut ridge_used = None;
    if reg.shrinkage > 0.0 {
        let eps = reg.shrinkage * scale;
        for i in 0..p * d {
            c[(i, i)] += eps;
        }
        ridge_used = Some(eps);
    }
    let cond = linalg::condition_number(&c);
    if !(cond <= MAX_CONDITION) {
        if !reg.ridge_fallback {
            return Err(GdfmError::Singular(cond));
        }
        let eps = 1e-8 * scale;
        for i in 0..p * d {
            c[(i, i)] += eps;
        }
        log::debug!("ridge {eps:.3e} added to Yule-Walker system (condition {cond:.3e})");
        ridge_used = Some(ridge_used.unwrap_or(0.0) + eps);
    }
    let mut g = DMatrix::<f64>::zeros(d, p * d);
    for j in 0..p {
        g.view_mut((0, j * d), (d, d)).copy_from(&ac.lags[j + 1]);
    }
    // 𝒞 is symmetric, so Aᵀ = 𝒞⁻¹ Gᵀ
    let at = match c.clone().cholesky() {
        Some(ch) => ch.solve(&g.transpose()),
        None => c
            .clone()
            .lu()
            .solve(&g.transpose())
            .ok_or(GdfmError::Singular(cond))?,
    };
    let a = at.transpose();
    let coefs: Vec<DMatrix<f64>> = (0..p).map(|j| a.columns(j * d, d).into_owned()).collect();
    let mut sigma = ac.lags[0].clone();
    sigma.gemm(-1.0, &a, &g.transpose(), 1.0);
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok(VarFit {
        coefs,
        order: p,
        innovation_cov: sigma,
        ridge: ridge_used,
        radius: 0.0,
        stabilized: false,
    })
}

/// BIC value ln det Σ_p + p d² ln T / T; None when Σ_p is not positive definite.
pub fn var_bic(fit: &VarFit, n_obs: usize) -> Option<f64> {
    let d = fit.dim() as f64;
    let t = n_obs.max(2) as f64;
    let ld = linalg::log_det_spd(&fit.innovation_cov)?;
    Some(ld + fit.order as f64 * d * d * t.ln() / t)
}

/// Yule-Walker VAR for the series in `block`, order chosen by BIC over 1..=max_order.
/// Orders whose innovation covariance is not positive definite are skipped.
pub fn yule_walker_block(
    autocov: &AutocovarianceSet,
    block: &[usize],
    max_order: usize,
    reg: YwRegularization,
) -> Result<VarFit> {
    let ac = autocov.select(block);
    let max_order = max_order.min(ac.max_lag()).max(1);
    let n_obs = if autocov.n_obs > 0 { autocov.n_obs } else { 1000 };
    let mut best: Option<(f64, VarFit)> = None;
    let mut first: Option<VarFit> = None;
    for p in 1..=max_order {
        let fit = match yule_walker(&ac, p, reg) {
            Ok(f) => f,
            Err(e) if p == 1 => return Err(e),
            Err(_) => break,
        };
        if let Some(b) = var_bic(&fit, n_obs) {
            if best.as_ref().is_none_or(|(v, _)| b < *v) {
                best = Some((b, fit.clone()));
            }
        }
        if first.is_none() {
            first = Some(fit);
        }
    }
    let mut fit = match best {
        Some((_, f)) => f,
        None => first.expect("order 1 fitted"),
    };
    fit.radius = linalg::companion_radius(&fit.coefs);
    if fit.radius >= 1.0 {
        log::warn!(
            "unstable block VAR (radius {:.4}); roots pulled to {STABLE_RADIUS}",
            fit.radius
        );
        linalg::scale_roots(&mut fit.coefs, STABLE_RADIUS / fit.radius);
        fit.stabilized = true;
    }
    Ok(fit)
}

/// Settings of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOptions {
    pub q: usize,
    pub bandwidth: usize,
    pub n_perm: usize,
    /// Truncation lag of the common impulse responses.
    pub common_lags: usize,
    /// Truncation lag of the idiosyncratic MA inverses.
    pub idio_lags: usize,
    pub max_var_order: usize,
    pub max_ar_order: usize,
    pub regularization: YwRegularization,
}

impl StageOptions {
    /// Level stage settings (q, B_T, k̄₁, k̄₂).
    pub fn levels(cfg: &PipelineConfig) -> Self {
        Self {
            q: cfg.q,
            bandwidth: cfg.level_bandwidth,
            n_perm: cfg.n_perm,
            common_lags: cfg.k1_bar,
            idio_lags: cfg.k2_bar,
            max_var_order: cfg.max_var_order,
            max_ar_order: cfg.max_ar_order,
            regularization: YwRegularization {
                shrinkage: cfg.yw_shrinkage,
                ridge_fallback: cfg.ridge,
            },
        }
    }

    /// Volatility stage settings (Q, M_T, k̄₁*, k̄₂*).
    pub fn volatility(cfg: &PipelineConfig) -> Self {
        Self {
            q: cfg.q_vol,
            bandwidth: cfg.vol_bandwidth,
            common_lags: cfg.k1_star,
            idio_lags: cfg.k2_star,
            ..Self::levels(cfg)
        }
    }
}

/// Block VARs, loadings and rotation of one random partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PermutationFit {
    pub blocks: Vec<Vec<usize>>,
    pub vars: Vec<VarFit>,
    /// √n times the leading eigenvectors of the filtered panel covariance (n×q).
    pub loadings: DMatrix<f64>,
    /// q×q orthogonal identification rotation.
    pub rotation: DMatrix<f64>,
}

/// Least-squares AR fit of one idiosyncratic series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArFit {
    pub coefs: Vec<f64>,
    /// Truncated inverse d(L), d_0 = 1.
    pub ma: Vec<f64>,
    pub stabilized: bool,
}

/// Components of a panel under a fitted stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Components {
    /// Common shocks (q×T).
    pub shocks: DMatrix<f64>,
    /// Common innovations (n×T).
    pub common_innovations: DMatrix<f64>,
    pub common: DMatrix<f64>,
    pub idiosyncratic: DMatrix<f64>,
    /// Idiosyncratic AR residuals (n×T).
    pub residuals: DMatrix<f64>,
    /// Centered input.
    pub centered: DMatrix<f64>,
}

/// One fitted stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GdfmModel {
    pub options: StageOptions,
    pub means: DVector<f64>,
    pub permutations: Vec<PermutationFit>,
    /// Averaged B(0) = avg H_P ℛ_P (n×q).
    pub loadings: DMatrix<f64>,
    /// Averaged impulse responses B_0..B_K (each n×q).
    pub impulse: Vec<DMatrix<f64>>,
    pub ar: Vec<ArFit>,
    pub components: Components,
    pub unstable_blocks: usize,
    pub ridged_blocks: usize,
}

/// Random partition of 0..n into ⌊n/(q+1)⌋ blocks of q+1 series, the first q
/// series pinned to the front and the remainder appended to the last block.
pub fn random_blocks<R: Rng + ?Sized>(n: usize, q: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let d = q + 1;
    let mut order: Vec<usize> = (0..n).collect();
    order[q..].shuffle(rng);
    let m = n / d;
    let mut blocks: Vec<Vec<usize>> = (0..m).map(|l| order[l * d..(l + 1) * d].to_vec()).collect();
    blocks[m - 1].extend_from_slice(&order[m * d..]);
    blocks
}

/// Ŷ* = Â(L)Y blockwise with zero pre-sample values.
fn filter_blocks(data: &DMatrix<f64>, blocks: &[Vec<usize>], vars: &[VarFit]) -> DMatrix<f64> {
    let t = data.ncols();
    let mut out = data.clone();
    for (b, var) in blocks.iter().zip(vars) {
        let yb = data.select_rows(b.iter());
        let mut fb = yb.clone();
        for (j, a) in var.coefs.iter().enumerate() {
            let lag = j + 1;
            if lag >= t {
                break;
            }
            let mut tail = fb.columns_mut(lag, t - lag);
            tail.gemm(-1.0, a, &yb.columns(0, t - lag), 1.0);
        }
        for (r, &i) in b.iter().enumerate() {
            out.set_row(i, &fb.row(r));
        }
    }
    out
}

/// Rotation ℛ such that the rows of the first q series in Hℛ form a lower
/// triangular block with positive diagonal.
pub fn identification_rotation(h: &DMatrix<f64>, q: usize) -> DMatrix<f64> {
    let h1 = h.rows(0, q).into_owned();
    let qr = h1.transpose().qr();
    let mut rot = qr.q();
    let r = qr.r();
    for c in 0..q {
        if r[(c, c)] < 0.0 {
            let mut col = rot.column_mut(c);
            col.neg_mut();
        }
    }
    rot
}

/// X_t = Σ_{k=0}^{K} B_k u_{t−k} with zero pre-sample shocks.
pub fn apply_impulse(impulse: &[DMatrix<f64>], shocks: &DMatrix<f64>) -> DMatrix<f64> {
    let t = shocks.ncols();
    let n = impulse[0].nrows();
    let mut x = DMatrix::<f64>::zeros(n, t);
    for (k, b) in impulse.iter().enumerate() {
        if k >= t {
            break;
        }
        let mut tail = x.columns_mut(k, t - k);
        tail.gemm(1.0, b, &shocks.columns(0, t - k), 1.0);
    }
    x
}

/// Least-squares AR with BIC order over 0..=max_order on a common sample.
pub fn fit_ar(z: &[f64], max_order: usize, ma_lags: usize) -> ArFit {
    let t = z.len();
    let pmax = max_order.min(t.saturating_sub(2) / 2);
    let nobs = t - pmax;
    let mut xtx = DMatrix::<f64>::zeros(pmax, pmax);
    let mut xty = DVector::<f64>::zeros(pmax);
    let mut yty = 0.0;
    for s in pmax..t {
        yty += z[s] * z[s];
        for i in 0..pmax {
            let zi = z[s - i - 1];
            xty[i] += zi * z[s];
            for j in 0..=i {
                xtx[(i, j)] += zi * z[s - j - 1];
            }
        }
    }
    for i in 0..pmax {
        for j in 0..i {
            xtx[(j, i)] = xtx[(i, j)];
        }
    }
    let nf = nobs as f64;
    let crit = |rss: f64, p: usize| (rss / nf).max(1e-300).ln() + p as f64 * nf.ln() / nf;
    let mut best_p = 0;
    let mut best_val = crit(yty, 0);
    let mut best_coefs: Vec<f64> = Vec::new();
    for p in 1..=pmax {
        let sub = xtx.view((0, 0), (p, p)).into_owned();
        let rhs = xty.rows(0, p).into_owned();
        let Some(ch) = sub.cholesky() else { break };
        let b = ch.solve(&rhs);
        let rss = yty - b.dot(&rhs);
        let v = crit(rss, p);
        if v < best_val {
            best_val = v;
            best_p = p;
            best_coefs = b.iter().copied().collect();
        }
    }
    debug_assert_eq!(best_coefs.len(), best_p);
    let mut stabilized = false;
    if best_p > 0 {
        let mut m: Vec<DMatrix<f64>> = best_coefs.iter().map(|&c| DMatrix::from_element(1, 1, c)).collect();
        let r = linalg::companion_radius(&m);
        if r >= 1.0 {
            linalg::scale_roots(&mut m, STABLE_RADIUS / r);
            best_coefs = m.iter().map(|a| a[(0, 0)]).collect();
            stabilized = true;
        }
    }
    let ma = linalg::inverse_ar(&best_coefs, ma_lags);
    ArFit {
        coefs: best_coefs,
        ma,
        stabilized,
    }
}

/// v_t = c(L) z_t with zero pre-sample values.
pub fn ar_residuals(z: &[f64], coefs: &[f64]) -> Vec<f64> {
    (0..z.len())
        .map(|t| {
            let mut v = z[t];
            for (j, c) in coefs.iter().enumerate() {
                if t > j {
                    v -= c * z[t - j - 1];
                }
            }
            v
        })
        .collect()
}

impl GdfmModel {
    pub fn n(&self) -> usize {
        self.means.len()
    }

    pub fn q(&self) -> usize {
        self.options.q
    }

    /// Recomputes all components for `data` (uncentered, same series) with the
    /// fitted filters held fixed.
    pub fn filter(&self, data: &DMatrix<f64>) -> Result<Components> {
        if data.nrows() != self.n() {
            return Err(GdfmError::Shape(format!(
                "model has {} series, data has {}",
                self.n(),
                data.nrows()
            )));
        }
        let mut centered = data.clone();
        for (i, mut row) in centered.row_iter_mut().enumerate() {
            row.add_scalar_mut(-self.means[i]);
        }
        Ok(components_from(
            &centered,
            &self.permutations,
            &self.impulse,
            &self.ar,
        ))
    }

    /// Σ_{k≥1} B_k u_{T−k+1}.
    pub fn one_step_common(&self) -> DVector<f64> {
        predict_common(&self.impulse, &self.components.shocks)
    }

    /// Σ_{k≥1} d_{ik} v_{i,T−k+1}.
    pub fn one_step_idio(&self) -> DVector<f64> {
        predict_idio(&self.ar, &self.components.residuals)
    }
}

pub fn predict_common(impulse: &[DMatrix<f64>], shocks: &DMatrix<f64>) -> DVector<f64> {
    let t = shocks.ncols();
    let n = impulse[0].nrows();
    let mut out = DVector::<f64>::zeros(n);
    for (k, b) in impulse.iter().enumerate().skip(1) {
        if k > t {
            break;
        }
        out.gemv(1.0, b, &shocks.column(t - k), 1.0);
    }
    out
}

pub fn predict_idio(ar: &[ArFit], residuals: &DMatrix<f64>) -> DVector<f64> {
    let t = residuals.ncols();
    DVector::from_iterator(
        ar.len(),
        ar.iter().enumerate().map(|(i, f)| {
            f.ma.iter()
                .enumerate()
                .skip(1)
                .take_while(|(k, _)| *k <= t)
                .map(|(k, d)| d * residuals[(i, t - k)])
                .sum()
        }),
    )
}

fn components_from(
    centered: &DMatrix<f64>,
    perms: &[PermutationFit],
    impulse: &[DMatrix<f64>],
    ar: &[ArFit],
) -> Components {
    let (n, t) = centered.shape();
    let q = impulse[0].ncols();
    let nf = n as f64;
    let np = perms.len() as f64;
    let mut shocks = DMatrix::<f64>::zeros(q, t);
    for pf in perms {
        let filtered = filter_blocks(centered, &pf.blocks, &pf.vars);
        let hr = &pf.loadings * &pf.rotation;
        // u_P = n⁻¹ ℛ'H' Y*
        let u = hr.tr_mul(&filtered) / nf;
        shocks += u / np;
    }
    // Lag-0 term of the averaged common component, so that ê + v̂ stays the
    // one-step innovation of the levels even when permutations disagree on sign.
    let innov = &impulse[0] * &shocks;
    let mut common = apply_impulse(impulse, &shocks);
    let mut idiosyncratic = DMatrix::<f64>::zeros(n, t);
    for ((x, z), &y) in common.iter_mut().zip(idiosyncratic.iter_mut()).zip(centered.iter()) {
        (*x, *z) = linalg::exact_split(y, *x);
    }
    let mut residuals = DMatrix::<f64>::zeros(n, t);
    for i in 0..n {
        let z: Vec<f64> = idiosyncratic.row(i).iter().copied().collect();
        let v = ar_residuals(&z, &ar[i].coefs);
        for (s, val) in v.into_iter().enumerate() {
            residuals[(i, s)] = val;
        }
    }
    Components {
        shocks,
        common_innovations: innov,
        common,
        idiosyncratic,
        residuals,
        centered: centered.clone(),
    }
}

/// Common-component autocovariances Γ_0..Γ_L from the rank-q part of the
/// lag-window spectrum of a centered panel.
pub fn common_autocov(centered: &DMatrix<f64>, q: usize, bandwidth: usize, max_lag: usize) -> Result<AutocovarianceSet> {
    let t = centered.ncols();
    let gamma = sample_autocov(centered, bandwidth.min(t - 1))?;
    let spec = estimate_spectrum(&gamma, bandwidth)?;
    let (common_spec, _) = truncate_to_rank(&spec, q)?;
    let mut ac = inverse_ft(&common_spec, max_lag.min(bandwidth))?;
    ac.n_obs = t;
    Ok(ac)
}

/// Largest VAR order whose Yule-Walker innovation covariance can be nonsingular
/// when the autocovariances come from a rank-q spectrum on 2B distinct
/// frequencies: a (q+1)-block needs p(q+1) < 2Bq.
pub fn identifiable_order(max_order: usize, q: usize, bandwidth: usize) -> usize {
    let cap = (2 * bandwidth * q).saturating_sub(1) / (q + 1);
    max_order.min(cap).max(1)
}

/// Fits one stage on an n×T panel (rows are series; centered internally).
pub fn fit_stage<R: Rng + ?Sized>(
    data: &DMatrix<f64>,
    opts: &StageOptions,
    rng: &mut R,
) -> Result<GdfmModel> {
    let (n, t) = data.shape();
    let q = opts.q;
    if q == 0 || q + 1 > n {
        return Err(GdfmError::InvalidInput(format!("need 1 <= q < n (q={q}, n={n})")));
    }
    if opts.n_perm == 0 {
        return Err(GdfmError::InvalidInput("n_perm must be at least 1".into()));
    }
    if t < MIN_PERIODS {
        return Err(GdfmError::InvalidInput(format!("T={t} below the minimum {MIN_PERIODS}")));
    }
    if opts.bandwidth == 0 || opts.bandwidth >= t {
        return Err(GdfmError::InvalidInput(format!(
            "bandwidth {} must lie in [1, T={t})",
            opts.bandwidth
        )));
    }
    for i in 0..n {
        let row = data.row(i);
        if row.iter().all(|&v| v == row[0]) {
            return Err(GdfmError::ZeroVariance(i));
        }
    }
    let (centered, means) = center_rows(data);
    let max_order = identifiable_order(opts.max_var_order.min(opts.bandwidth), q, opts.bandwidth);
    let ac = common_autocov(&centered, q, opts.bandwidth, max_order)?;

    let sqrt_n = (n as f64).sqrt();
    let mut perms = Vec::with_capacity(opts.n_perm);
    let mut unstable = 0;
    let mut ridged = 0;
    for _ in 0..opts.n_perm {
        let blocks = random_blocks(n, q, rng);
        let vars: Vec<VarFit> = blocks
            .iter()
            .map(|b| yule_walker_block(&ac, b, max_order, opts.regularization))
            .collect::<Result<_>>()?;
        unstable += vars.iter().filter(|v| v.stabilized).count();
        ridged += vars.iter().filter(|v| v.ridge.is_some()).count();
        let filtered = filter_blocks(&centered, &blocks, &vars);
        let cov = filtered.clone() * filtered.transpose() / t as f64;
        let (_, vecs) = linalg::top_eigenvectors(&cov, q);
        let loadings = vecs * sqrt_n;
        let rotation = identification_rotation(&loadings, q);
        perms.push(PermutationFit {
            blocks,
            vars,
            loadings,
            rotation,
        });
    }

    // averaged impulse responses B_k = avg Ψ_k H_P ℛ_P (blockwise)
    let k1 = opts.common_lags;
    let mut impulse = vec![DMatrix::<f64>::zeros(n, q); k1 + 1];
    let np = opts.n_perm as f64;
    for pf in &perms {
        let hr = &pf.loadings * &pf.rotation;
        for (b, var) in pf.blocks.iter().zip(&pf.vars) {
            let psi = linalg::inverse_var_filter(&var.coefs, b.len(), k1);
            let hb = hr.select_rows(b.iter());
            for (k, psi_k) in psi.iter().enumerate() {
                let bk = psi_k * &hb;
                for (r, &i) in b.iter().enumerate() {
                    for c in 0..q {
                        impulse[k][(i, c)] += bk[(r, c)] / np;
                    }
                }
            }
        }
    }
    let loadings = impulse[0].clone();

    // shocks and components with the idiosyncratic ARs still unknown
    let no_ar: Vec<ArFit> = (0..n)
        .map(|_| ArFit {
            coefs: Vec::new(),
            ma: vec![1.0],
            stabilized: false,
        })
        .collect();
    let pre = components_from(&centered, &perms, &impulse, &no_ar);
    let ar: Vec<ArFit> = (0..n)
        .map(|i| {
            let z: Vec<f64> = pre.idiosyncratic.row(i).iter().copied().collect();
            fit_ar(&z, opts.max_ar_order, opts.idio_lags)
        })
        .collect();
    let mut components = pre;
    for i in 0..n {
        let z: Vec<f64> = components.idiosyncratic.row(i).iter().copied().collect();
        let v = ar_residuals(&z, &ar[i].coefs);
        for (s, val) in v.into_iter().enumerate() {
            components.residuals[(i, s)] = val;
        }
    }
    if unstable > 0 {
        log::warn!("{unstable} block VARs stabilized across {} permutations", opts.n_perm);
    }
    Ok(GdfmModel {
        options: opts.clone(),
        means,
        permutations: perms,
        loadings,
        impulse,
        ar,
        components,
        unstable_blocks: unstable,
        ridged_blocks: ridged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn blocks_partition_and_pin() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, q) in [(11, 2), (9, 2), (5, 1), (4, 3)] {
            let b = random_blocks(n, q, &mut rng);
            assert_eq!(b.len(), n / (q + 1));
            assert!(b.iter().all(|x| x.len() >= q + 1));
            assert_eq!(&b[0][..q], &(0..q).collect::<Vec<_>>()[..]);
            let mut all: Vec<usize> = b.concat();
            all.sort();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn rotation_lower_triangular() {
        let h = DMatrix::from_row_slice(4, 2, &[0.3, -1.2, 0.8, 0.5, -0.1, 0.9, 1.1, 0.2]);
        let r = identification_rotation(&h, 2);
        let hr = &h * &r;
        assert!(hr[(0, 1)].abs() < 1e-12);
        assert!(hr[(0, 0)] > 0.0 && hr[(1, 1)] > 0.0);
        assert!((r.transpose() * &r - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn yule_walker_var1_exact() {
        // Γ_0 solves Γ_0 = AΓ_0A' + I for A = 0.5·I; Γ_k = A^k Γ_0
        let a = DMatrix::<f64>::identity(2, 2) * 0.5;
        let g0 = DMatrix::<f64>::identity(2, 2) / 0.75;
        let lags = vec![g0.clone(), &a * &g0, &a * &a * &g0];
        let ac = AutocovarianceSet { lags, n_obs: 5000 };
        let fit = yule_walker(&ac, 1, YwRegularization::NONE).unwrap();
        assert!((&fit.coefs[0] - &a).amax() < 1e-10);
        assert!((&fit.innovation_cov - DMatrix::<f64>::identity(2, 2)).amax() < 1e-10);
        let sel = yule_walker_block(&ac, &[0, 1], 2, YwRegularization::NONE).unwrap();
        assert!((&sel.coefs[0] - &a).amax() < 1e-10);
    }

    #[test]
    fn white_noise_yule_walker() {
        let g0 = DMatrix::<f64>::identity(3, 3);
        let z = DMatrix::<f64>::zeros(3, 3);
        let ac = AutocovarianceSet {
            lags: vec![g0, z.clone(), z],
            n_obs: 100,
        };
        let fit = yule_walker_block(&ac, &[0, 1, 2], 2, YwRegularization::NONE).unwrap();
        assert!(fit.coefs.iter().all(|a| a.amax() < 1e-12));
        assert_eq!(fit.order, 1);
    }

    #[test]
    fn order_cap() {
        assert_eq!(identifiable_order(2, 1, 2), 1);
        assert_eq!(identifiable_order(2, 3, 2), 2);
        assert_eq!(identifiable_order(20, 1, 17), 16);
        assert_eq!(identifiable_order(5, 2, 10), 5);
    }

    #[test]
    fn one_step_hand_examples() {
        let impulse = vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 0.5)];
        let shocks = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 2.0]);
        assert!((predict_common(&impulse, &shocks)[0] - 1.0).abs() < 1e-15);
        let only0 = vec![DMatrix::from_element(1, 1, 1.0)];
        assert_eq!(predict_common(&only0, &shocks)[0], 0.0);
        let ar = vec![ArFit {
            coefs: vec![0.5],
            ma: linalg::inverse_ar(&[0.5], 20),
            stabilized: false,
        }];
        let v = DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 0.0, 1.0]);
        assert!((predict_idio(&ar, &v)[0] - 0.5).abs() < 1e-15);
        assert_eq!(predict_idio(&ar, &DMatrix::zeros(1, 4))[0], 0.0);
    }
}
