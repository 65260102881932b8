//! Simulation design with multiplicative volatility factors, Monte Carlo
//! runner and error/coverage metrics.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{GdfmError, Result};
use crate::linalg;
use crate::panel_io::Panel;

/// Periods simulated and discarded before the retained sample.
pub const BURN_IN: usize = 300;
/// Companion radius the log-volatility VAR(3) coefficients are rescaled to.
pub const VOL_RADIUS: f64 = 0.98;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpConfig {
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub q: usize,
    #[serde(rename = "Q")]
    pub q_vol: usize,
    pub replications: usize,
    pub seed: u64,
    /// Variance ratio of common to idiosyncratic log-volatility.
    pub signal_to_noise: f64,
    pub vol_var_order: usize,
    pub common_ar_range: (f64, f64),
    pub idio_ar_range: (f64, f64),
    pub toeplitz_decay: f64,
    pub toeplitz_band: usize,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n: 100,
            t: 1000,
            q: 1,
            q_vol: 1,
            replications: 1,
            seed: 0,
            signal_to_noise: 2.0,
            vol_var_order: 3,
            common_ar_range: (-0.3, 0.7),
            idio_ar_range: (-0.5, 0.5),
            toeplitz_decay: 0.5,
            toeplitz_band: 2,
        }
    }
}

/// Simulated panel with all latent quantities.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub panel: Panel,
    pub common: DMatrix<f64>,
    pub idiosyncratic: DMatrix<f64>,
    /// Common log-volatility.
    pub chi: DMatrix<f64>,
    /// Log-volatility h = log s².
    pub h: DMatrix<f64>,
    /// s = e + v.
    pub s: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub v: DMatrix<f64>,
    /// Companion radii after rescaling of the common and idiosyncratic log-volatility VARs.
    pub vol_radius: (f64, f64),
    /// Share of log-volatility VAR roots with modulus in (0.7, 1).
    pub persistent_root_share: f64,
}

/// Generator seeded by `seed` on an independent stream per `stream`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal_matrix<R: Rng + ?Sized>(r: usize, c: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Diagonal VAR(p) lag coefficients with N(0,1) entries, all halved together
/// until the companion radius of the whole system is at most VOL_RADIUS.
/// Column j holds the coefficients of lag j+1. Returns the coefficients, the
/// achieved radius and all root moduli.
fn stable_diagonal_var<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> (DMatrix<f64>, f64, Vec<f64>) {
    let mut coefs = normal_matrix(n, p, rng);
    let moduli = |c: &DMatrix<f64>| -> Vec<f64> {
        (0..n)
            .flat_map(|i| {
                let comp = ar_companion(&c.row(i).iter().copied().collect::<Vec<_>>());
                comp.complex_eigenvalues().iter().map(|z| z.norm()).collect::<Vec<_>>()
            })
            .collect()
    };
    let mut roots = moduli(&coefs);
    while roots.iter().copied().fold(0.0, f64::max) > VOL_RADIUS {
        coefs *= 0.5;
        roots = moduli(&coefs);
    }
    let max = roots.iter().copied().fold(0.0, f64::max);
    (coefs, max, roots)
}

fn ar_companion(coefs: &[f64]) -> DMatrix<f64> {
    let p = coefs.len();
    let mut c = DMatrix::<f64>::zeros(p, p);
    for (k, a) in coefs.iter().enumerate() {
        c[(0, k)] = *a;
    }
    for k in 1..p {
        c[(k, k - 1)] = 1.0;
    }
    c
}

/// x_t = Σ_k a_{ik} x_{t−k} + u_t per row, zero initial values.
fn diagonal_ar_filter(coefs: &DMatrix<f64>, shocks: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, t) = shocks.shape();
    let p = coefs.ncols();
    let mut x = shocks.clone();
    for s in 0..t {
        for k in 0..p.min(s) {
            for i in 0..n {
                x[(i, s)] += coefs[(i, k)] * x[(i, s - k - 1)];
            }
        }
    }
    x
}

fn row_variances(m: &DMatrix<f64>) -> DVector<f64> {
    let t = m.ncols() as f64;
    DVector::from_iterator(
        m.nrows(),
        m.row_iter().map(|r| {
            let mu = r.sum() / t;
            r.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / t
        }),
    )
}

/// Draws one panel from the design.
pub fn generate<R: Rng + ?Sized>(dgp: &DgpConfig, rng: &mut R) -> Result<Simulated> {
    let (n, t, q, qv) = (dgp.n, dgp.t, dgp.q, dgp.q_vol);
    if n < q + 1 || n < qv + 1 || t < 50 {
        return Err(GdfmError::InvalidInput(format!(
            "design needs n > max(q, Q) and T >= 50 (n={n}, T={t}, q={q}, Q={qv})"
        )));
    }
    let total = t + BURN_IN;

    // common log-volatility χ = M(L)⁻¹ R ε with R'R = n I
    let r0 = normal_matrix(n, qv, rng);
    let gram = r0.tr_mul(&r0);
    let eig = gram.symmetric_eigen();
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose();
    let loadings = r0 * inv_sqrt * (n as f64).sqrt();
    let eps = normal_matrix(qv, total, rng);
    let (m_coefs, m_radius, mut roots) = stable_diagonal_var(n, dgp.vol_var_order, rng);
    let chi_full = diagonal_ar_filter(&m_coefs, &(&loadings * eps));

    // idiosyncratic log-volatility with banded Toeplitz innovations
    let sigma = DMatrix::from_fn(n, n, |i, j| {
        let d = i.abs_diff(j);
        if d <= dgp.toeplitz_band {
            dgp.toeplitz_decay.powi(d as i32)
        } else {
            0.0
        }
    });
    let chol = sigma
        .cholesky()
        .ok_or_else(|| GdfmError::InvalidInput("Toeplitz covariance not positive definite".into()))?;
    let nu = chol.l() * normal_matrix(n, total, rng);
    let (p_coefs, p_radius, p_roots) = stable_diagonal_var(n, dgp.vol_var_order, rng);
    roots.extend(p_roots);
    let xi_star = diagonal_ar_filter(&p_coefs, &nu);

    let chi_full_kept = chi_full.columns(BURN_IN, t).into_owned();
    let xi_kept = xi_star.columns(BURN_IN, t).into_owned();
    let var_chi = row_variances(&chi_full_kept);
    let var_xi = row_variances(&xi_kept);
    let scale = DVector::from_iterator(
        n,
        (0..n).map(|i| (var_chi[i] / (dgp.signal_to_noise * var_xi[i])).sqrt()),
    );

    // level shocks
    let signs = DMatrix::from_fn(n, total, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
    let mut e_star = DMatrix::<f64>::zeros(n, total);
    let mut v_star = DMatrix::<f64>::zeros(n, total);
    for s in 0..total {
        for i in 0..n {
            let c = (chi_full[(i, s)] / 2.0).exp();
            let xi2 = xi_star[(i, s)] * scale[i];
            e_star[(i, s)] = c * signs[(i, s)];
            v_star[(i, s)] = c * (xi2 / 2.0).exp() * signs[(i, s)];
        }
    }
    let e_kept_star = e_star.columns(BURN_IN, t).into_owned();
    let (centered_e, _) = crate::panel_io::center_rows(&e_kept_star);
    let cov = &centered_e * centered_e.transpose() / t as f64;
    let (_, vmat) = linalg::top_eigenvectors(&cov, q);
    let proj = &vmat * vmat.transpose();
    let e_full = &proj * &e_star;
    let v_full = &e_star - &e_full + &v_star;

    let a_dist = Uniform::new(dgp.common_ar_range.0, dgp.common_ar_range.1)
        .map_err(|e| GdfmError::InvalidInput(e.to_string()))?;
    let c_dist = Uniform::new(dgp.idio_ar_range.0, dgp.idio_ar_range.1)
        .map_err(|e| GdfmError::InvalidInput(e.to_string()))?;
    let a = DMatrix::from_fn(n, 1, |_, _| rng.sample(a_dist));
    let c = DMatrix::from_fn(n, 1, |_, _| rng.sample(c_dist));
    let x_full = diagonal_ar_filter(&a, &e_full);
    let z_full = diagonal_ar_filter(&c, &v_full);

    let keep = |m: &DMatrix<f64>| m.columns(BURN_IN, t).into_owned();
    let common = keep(&x_full);
    let idiosyncratic = keep(&z_full);
    let e = keep(&e_full);
    let v = keep(&v_full);
    let s = &e + &v;
    let h = s.map(|x| (x * x).ln());
    let y = &common + &idiosyncratic;
    let persistent = roots.iter().filter(|&&r| r > 0.7 && r < 1.0).count() as f64 / roots.len() as f64;
    Ok(Simulated {
        panel: Panel::from_matrix(y)?,
        common,
        idiosyncratic,
        chi: chi_full_kept,
        h,
        s,
        e,
        v,
        vol_radius: (m_radius, p_radius),
        persistent_root_share: persistent,
    })
}

/// Lag-k sample autocorrelation of each row, averaged over rows.
pub fn mean_autocorrelation(m: &DMatrix<f64>, lag: usize) -> f64 {
    let t = m.ncols();
    let vals: Vec<f64> = m
        .row_iter()
        .map(|r| {
            let mu = r.sum() / t as f64;
            let den: f64 = r.iter().map(|v| (v - mu) * (v - mu)).sum();
            let num: f64 = (lag..t).map(|s| (r[s] - mu) * (r[s - lag] - mu)).sum();
            num / den
        })
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// Sample kurtosis (non-excess) of each row, averaged over rows.
pub fn mean_kurtosis(m: &DMatrix<f64>) -> f64 {
    let t = m.ncols() as f64;
    let vals: Vec<f64> = m
        .row_iter()
        .map(|r| {
            let mu = r.sum() / t;
            let m2: f64 = r.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / t;
            let m4: f64 = r.iter().map(|v| (v - mu).powi(4)).sum::<f64>() / t;
            m4 / (m2 * m2)
        })
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// Mean squared, mean absolute and maximal absolute deviation over all cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mse: f64,
    pub mad: f64,
    pub max: f64,
}

pub fn error_metrics(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<ErrorMetrics> {
    if truth.shape() != estimate.shape() {
        return Err(GdfmError::Shape(format!(
            "truth {:?} vs estimate {:?}",
            truth.shape(),
            estimate.shape()
        )));
    }
    let acc = ErrorAccumulator::default().add(truth, estimate);
    Ok(acc.finish())
}

/// Running sums for pooling error metrics over replications.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct ErrorAccumulator {
    pub sq: f64,
    pub abs: f64,
    pub max: f64,
    pub cells: usize,
}

impl ErrorAccumulator {
    pub fn add(mut self, truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Self {
        for (a, b) in truth.iter().zip(estimate.iter()) {
            let d = (a - b).abs();
            self.sq += d * d;
            self.abs += d;
            self.max = self.max.max(d);
        }
        self.cells += truth.len();
        self
    }

    pub fn merge(mut self, other: &ErrorAccumulator) -> Self {
        self.sq += other.sq;
        self.abs += other.abs;
        self.max = self.max.max(other.max);
        self.cells += other.cells;
        self
    }

    pub fn finish(&self) -> ErrorMetrics {
        let c = self.cells.max(1) as f64;
        ErrorMetrics {
            mse: self.sq / c,
            mad: self.abs / c,
            max: self.max,
        }
    }
}

/// Pooled coverage over series, origins and replications for one α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageStat {
    pub alpha: f64,
    pub coverage: f64,
    pub v_plus: f64,
    pub v_minus: f64,
    pub points: usize,
}

/// Monte Carlo settings on top of the DGP and pipeline configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    /// Also run the out-of-sample coverage exercise.
    pub coverage: bool,
    /// Evaluation points at the end of each sample for the coverage exercise.
    pub holdout: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            coverage: false,
            holdout: 100,
        }
    }
}

/// One replication's outcome; coverage columns repeat per α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub seed: u64,
    pub ok: bool,
    pub mse_x: Option<f64>,
    pub mad_x: Option<f64>,
    pub max_x: Option<f64>,
    pub mse_chi: Option<f64>,
    pub mad_chi: Option<f64>,
    pub max_chi: Option<f64>,
    pub capped_fraction: Option<f64>,
    pub acf_h: f64,
    pub acf_v: f64,
    pub kurt_e: f64,
    pub kurt_v: f64,
    pub alpha: Option<f64>,
    pub coverage: Option<f64>,
    pub v_plus: Option<f64>,
    pub v_minus: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub mse_x: f64,
    pub mad_x: f64,
    pub max_x: f64,
    pub mse_chi: f64,
    pub mad_chi: f64,
    pub max_chi: f64,
    pub coverage: Vec<CoverageStat>,
    /// Means over replications of simulated-data diagnostics.
    pub mean_acf_h: f64,
    pub mean_acf_v: f64,
    pub mean_kurt_e: f64,
    pub mean_kurt_v: f64,
    pub mean_capped_fraction: f64,
    pub seeds: Vec<u64>,
    pub failures: usize,
    pub replications: usize,
    #[serde(skip)]
    pub rows: Vec<ReplicationRow>,
}

/// Seed of replication `rep`.
pub fn replication_seed(seed: u64, rep: usize) -> u64 {
    rng_for(seed, rep as u64).random()
}

fn demeaned(m: &DMatrix<f64>) -> DMatrix<f64> {
    crate::panel_io::center_rows(m).0
}

struct RepOutcome {
    x: ErrorAccumulator,
    chi: ErrorAccumulator,
    capped: f64,
    /// (hits, upper, lower, points) per α.
    cover: Vec<(usize, usize, usize, usize)>,
}

fn run_replication(
    sim: &Simulated,
    cfg: &crate::panel_io::PipelineConfig,
    opts: &McOptions,
) -> Result<RepOutcome> {
    use crate::forecast::FittedPipeline;
    let y = &sim.panel.values;
    let model = FittedPipeline::fit(y, sim.panel.labels.clone(), cfg)?;
    let x = ErrorAccumulator::default().add(&demeaned(&sim.common), &model.levels.components.common);
    let chi = ErrorAccumulator::default().add(&demeaned(&sim.chi), &model.vol.stage.components.common);
    let capped = {
        let st = model.fitted_state()?;
        st.proxy.capped_fraction
    };
    let mut cover = vec![(0, 0, 0, 0); cfg.alphas.len()];
    if opts.coverage {
        let t = y.ncols();
        if opts.holdout == 0 || opts.holdout >= t {
            return Err(GdfmError::Config(format!("holdout {} must lie in [1, T={t})", opts.holdout)));
        }
        let start = t - opts.holdout;
        let est = y.columns(0, start).into_owned();
        let m = FittedPipeline::fit(&est, sim.panel.labels.clone(), cfg)?;
        for tau in start..t {
            let state = if tau == start {
                m.fitted_state()?
            } else {
                m.state(&y.columns(0, tau).into_owned())?
            };
            for (a, &alpha) in cfg.alphas.iter().enumerate() {
                let fc = m.predict_interval(&state, alpha / 2.0, alpha / 2.0, cfg.window)?;
                for f in &fc {
                    let r = y[(f.series, tau)];
                    let c = &mut cover[a];
                    match crate::forecast::violation_side(r, f.lower, f.upper) {
                        0 => c.0 += 1,
                        1 => c.1 += 1,
                        _ => c.2 += 1,
                    }
                    c.3 += 1;
                }
            }
        }
    }
    Ok(RepOutcome { x, chi, capped, cover })
}

/// Runs `dgp.replications` independent replications in parallel and pools
/// error metrics and coverage as in the displayed formulas. Failed
/// replications are logged, excluded and counted.
pub fn run_mc(dgp: &DgpConfig, cfg: &crate::panel_io::PipelineConfig, opts: &McOptions) -> Result<McReport> {
    use rayon::prelude::*;
    if dgp.replications == 0 {
        return Err(GdfmError::Config("at least one replication is needed".into()));
    }
    let seeds: Vec<u64> = (0..dgp.replications).map(|r| replication_seed(dgp.seed, r)).collect();
    let outcomes: Vec<(Vec<ReplicationRow>, Option<RepOutcome>)> = seeds
        .par_iter()
        .enumerate()
        .map(|(rep, &seed)| {
            let mut rng = rng_for(seed, 0);
            let sim = match generate(dgp, &mut rng) {
                Ok(s) => s,
                Err(e) => return (vec![failed_row(rep, seed, &e, None)], None),
            };
            let diag = (
                mean_autocorrelation(&sim.h, 1),
                mean_autocorrelation(&sim.v, 1),
                mean_kurtosis(&sim.e),
                mean_kurtosis(&sim.v),
            );
            let mut c = cfg.clone();
            c.seed = seed;
            match run_replication(&sim, &c, opts) {
                Ok(o) => {
                    let xm = o.x.finish();
                    let cm = o.chi.finish();
                    let base = ReplicationRow {
                        replication: rep,
                        seed,
                        ok: true,
                        mse_x: Some(xm.mse),
                        mad_x: Some(xm.mad),
                        max_x: Some(xm.max),
                        mse_chi: Some(cm.mse),
                        mad_chi: Some(cm.mad),
                        max_chi: Some(cm.max),
                        capped_fraction: Some(o.capped),
                        acf_h: diag.0,
                        acf_v: diag.1,
                        kurt_e: diag.2,
                        kurt_v: diag.3,
                        alpha: None,
                        coverage: None,
                        v_plus: None,
                        v_minus: None,
                        error: None,
                    };
                    let rows = if opts.coverage {
                        c.alphas
                            .iter()
                            .zip(&o.cover)
                            .map(|(&a, &(h, u, l, p))| {
                                let pf = p.max(1) as f64;
                                ReplicationRow {
                                    alpha: Some(a),
                                    coverage: Some(h as f64 / pf),
                                    v_plus: Some(u as f64 / pf),
                                    v_minus: Some(l as f64 / pf),
                                    ..base.clone()
                                }
                            })
                            .collect()
                    } else {
                        vec![base]
                    };
                    (rows, Some(o))
                }
                Err(e) => {
                    log::warn!("replication {rep} (seed {seed}) failed: {e}");
                    (vec![failed_row(rep, seed, &e, Some(diag))], None)
                }
            }
        })
        .collect();

    let mut x = ErrorAccumulator::default();
    let mut chi = ErrorAccumulator::default();
    let mut cover = vec![(0usize, 0usize, 0usize, 0usize); cfg.alphas.len()];
    let mut failures = 0;
    let mut capped = Vec::new();
    let mut rows = Vec::new();
    for (r, o) in outcomes {
        rows.extend(r);
        match o {
            Some(o) => {
                x = x.merge(&o.x);
                chi = chi.merge(&o.chi);
                capped.push(o.capped);
                for (acc, c) in cover.iter_mut().zip(&o.cover) {
                    acc.0 += c.0;
                    acc.1 += c.1;
                    acc.2 += c.2;
                    acc.3 += c.3;
                }
            }
            None => failures += 1,
        }
    }
    let mean_of = |f: fn(&ReplicationRow) -> f64| {
        let mut seen = std::collections::BTreeSet::new();
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| seen.insert(r.replication))
            .map(f)
            .filter(|v| v.is_finite())
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    };
    let xm = x.finish();
    let cm = chi.finish();
    Ok(McReport {
        mse_x: xm.mse,
        mad_x: xm.mad,
        max_x: xm.max,
        mse_chi: cm.mse,
        mad_chi: cm.mad,
        max_chi: cm.max,
        coverage: if opts.coverage {
            cfg.alphas
                .iter()
                .zip(&cover)
                .map(|(&alpha, &(h, u, l, p))| {
                    let pf = p.max(1) as f64;
                    CoverageStat {
                        alpha,
                        coverage: h as f64 / pf,
                        v_plus: u as f64 / pf,
                        v_minus: l as f64 / pf,
                        points: p,
                    }
                })
                .collect()
        } else {
            Vec::new()
        },
        mean_acf_h: mean_of(|r| r.acf_h),
        mean_acf_v: mean_of(|r| r.acf_v),
        mean_kurt_e: mean_of(|r| r.kurt_e),
        mean_kurt_v: mean_of(|r| r.kurt_v),
        mean_capped_fraction: capped.iter().sum::<f64>() / capped.len().max(1) as f64,
        seeds,
        failures,
        replications: dgp.replications,
        rows,
    })
}

fn failed_row(rep: usize, seed: u64, e: &GdfmError, diag: Option<(f64, f64, f64, f64)>) -> ReplicationRow {
    let d = diag.unwrap_or((f64::NAN, f64::NAN, f64::NAN, f64::NAN));
    ReplicationRow {
        replication: rep,
        seed,
        ok: false,
        mse_x: None,
        mad_x: None,
        max_x: None,
        mse_chi: None,
        mad_chi: None,
        max_chi: None,
        capped_fraction: None,
        acf_h: d.0,
        acf_v: d.1,
        kurt_e: d.2,
        kurt_v: d.3,
        alpha: None,
        coverage: None,
        v_plus: None,
        v_minus: None,
        error: Some(e.to_string()),
    }
}
