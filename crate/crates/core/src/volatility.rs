//! Stage two: capped log-volatility proxies from the level shocks, the factor
//! stage run on them, and the resampling diagnostic for the capping rate.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GdfmError, Result};
use crate::gdfm::{fit_stage, Components, GdfmModel, StageOptions};
use crate::simulate::rng_for;

/// Volatility proxies ŝ = ê + v̂ and their capped log squares.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolProxy {
    pub s_hat: DMatrix<f64>,
    pub h_hat: DMatrix<f64>,
    pub kappa: f64,
    pub capped_fraction: f64,
}

/// Capped log square: log ŝ² when |ŝ| ≥ κ, log κ² otherwise.
pub fn capped_log_square(s: f64, kappa: f64) -> f64 {
    if s.abs() >= kappa {
        (s * s).ln()
    } else {
        (kappa * kappa).ln()
    }
}

pub fn build_proxy(e_hat: &DMatrix<f64>, v_hat: &DMatrix<f64>, kappa: f64) -> Result<VolProxy> {
    if e_hat.shape() != v_hat.shape() {
        return Err(GdfmError::Shape(format!(
            "common innovations are {:?}, idiosyncratic residuals {:?}",
            e_hat.shape(),
            v_hat.shape()
        )));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(GdfmError::InvalidInput(format!("kappa {kappa} must be finite and nonnegative")));
    }
    let s_hat = e_hat + v_hat;
    let (n, t) = s_hat.shape();
    let mut capped = 0usize;
    let mut h_hat = DMatrix::<f64>::zeros(n, t);
    for c in 0..t {
        for r in 0..n {
            let s = s_hat[(r, c)];
            if s.abs() < kappa {
                capped += 1;
            } else if s == 0.0 {
                return Err(GdfmError::InvalidInput(format!(
                    "zero volatility proxy at series {r}, period {c} with no capping (kappa = 0)"
                )));
            }
            h_hat[(r, c)] = capped_log_square(s, kappa);
        }
    }
    Ok(VolProxy {
        s_hat,
        h_hat,
        kappa,
        capped_fraction: capped as f64 / (n * t).max(1) as f64,
    })
}

/// Factor model fitted on the log-volatility proxies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolModel {
    pub stage: GdfmModel,
    pub kappa: f64,
}

impl VolModel {
    /// Per-series means of ĥ removed before fitting.
    pub fn means(&self) -> &nalgebra::DVector<f64> {
        &self.stage.means
    }

    pub fn components(&self) -> &Components {
        &self.stage.components
    }
}

pub fn fit_volatility<R: Rng + ?Sized>(proxy: &VolProxy, opts: &StageOptions, rng: &mut R) -> Result<VolModel> {
    let stage = fit_stage(&proxy.h_hat, opts, rng)?;
    Ok(VolModel {
        stage,
        kappa: proxy.kappa,
    })
}

/// One point of the capping-rate diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CappingRow {
    #[serde(rename = "T_j")]
    pub t_j: usize,
    pub phi: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub eps: f64,
    pub r: f64,
}

/// Sample sizes 100, 150, …, 10000.
pub fn default_capping_grid() -> Vec<usize> {
    (0..199).map(|j| 100 + 50 * j).collect()
}

/// Number of resampled series per sample size.
pub const CAPPING_SERIES: usize = 150;

/// For each T_j draws `series` resampled series of length T_j from the pooled
/// |ŝ| values and reports max_i T_j^ε·#{t: |ŝ*_it| < κ}/√T_j with κ = K/ln^φ T_j.
pub fn capping_diagnostic(
    s_panel: &DMatrix<f64>,
    grid: &[usize],
    phi: f64,
    k: f64,
    eps: f64,
    series: usize,
    seed: u64,
) -> Result<Vec<CappingRow>> {
    if s_panel.is_empty() {
        return Err(GdfmError::InvalidInput("empty proxy panel".into()));
    }
    if !(phi > 1.0) || !(k >= 0.0) || !(eps > 0.0) {
        return Err(GdfmError::InvalidInput(format!(
            "need phi > 1, K >= 0 and eps > 0 (phi={phi}, K={k}, eps={eps})"
        )));
    }
    if series == 0 {
        return Err(GdfmError::InvalidInput("at least one resampled series is needed".into()));
    }
    let pool: Vec<f64> = s_panel.iter().map(|v| v.abs()).collect();
    let rows = grid
        .par_iter()
        .enumerate()
        .map(|(j, &tj)| {
            let kappa = if tj > 1 { k / (tj as f64).ln().powf(phi) } else { k };
            let mut rng = rng_for(seed, j as u64);
            let mut worst = 0usize;
            for _ in 0..series {
                let mut count = 0usize;
                for _ in 0..tj {
                    if pool[rng.random_range(0..pool.len())] < kappa {
                        count += 1;
                    }
                }
                worst = worst.max(count);
            }
            let tf = tj as f64;
            CappingRow {
                t_j: tj,
                phi,
                k,
                eps,
                r: tf.powf(eps) * worst as f64 / tf.sqrt(),
            }
        })
        .collect();
    Ok(rows)
}
