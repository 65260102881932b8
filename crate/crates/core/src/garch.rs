//! Univariate GARCH(1,1) by Gaussian quasi-maximum likelihood, used as the
//! benchmark interval method.

use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GdfmError, Result};
use crate::forecast::{quantile_bounds, violation_side, ForecastRecord};
use crate::panel_io::{Panel, PipelineConfig};

/// Fewest observations accepted by the fitter.
pub const MIN_GARCH_PERIODS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl GarchParams {
    /// Unconstrained coordinates (ln ω, logit(γ+β), logit(γ/(γ+β))).
    pub fn to_free(&self) -> [f64; 3] {
        let total = self.gamma + self.beta;
        [self.omega.ln(), logit(total), logit(self.gamma / total)]
    }

    pub fn from_free(x: &[f64]) -> Self {
        let total = logistic(x[1]);
        let share = logistic(x[2]);
        Self {
            omega: x[0].exp(),
            gamma: total * share,
            beta: total * (1.0 - share),
        }
    }

    pub fn feasible(&self) -> bool {
        self.omega > 0.0 && self.gamma >= 0.0 && self.beta >= 0.0 && self.gamma + self.beta < 1.0
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// σ²_1 = `initial`, σ²_t = ω + γ(y_{t−1} − μ)² + β σ²_{t−1}.
pub fn filter_variance(y: &[f64], mean: f64, initial: f64, p: &GarchParams) -> Vec<f64> {
    let mut s2 = Vec::with_capacity(y.len());
    if y.is_empty() {
        return s2;
    }
    s2.push(initial);
    for t in 1..y.len() {
        let d = y[t - 1] - mean;
        s2.push(p.omega + p.gamma * d * d + p.beta * s2[t - 1]);
    }
    s2
}

/// Gaussian quasi-log-likelihood.
pub fn quasi_loglik(y: &[f64], mean: f64, initial: f64, p: &GarchParams) -> f64 {
    let s2 = filter_variance(y, mean, initial, p);
    let c = (2.0 * std::f64::consts::PI).ln();
    -0.5 * y
        .iter()
        .zip(&s2)
        .map(|(v, s)| c + s.ln() + (v - mean) * (v - mean) / s)
        .sum::<f64>()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GarchFit {
    pub params: GarchParams,
    pub mean: f64,
    /// σ²_1, set to the sample variance.
    pub initial_variance: f64,
    pub sigma2: Vec<f64>,
    /// Standardized residuals (y_t − μ)/σ_t.
    pub eps: Vec<f64>,
    pub loglik: f64,
    /// Norm of the numerical gradient in (ω, γ, β) at the optimum.
    pub gradient_norm: f64,
    pub converged: bool,
}

struct NegLoglik<'a> {
    y: &'a [f64],
    mean: f64,
    initial: f64,
}

impl CostFunction for NegLoglik<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, ArgminError> {
        let p = GarchParams::from_free(x);
        let v = -quasi_loglik(self.y, self.mean, self.initial, &p);
        Ok(if v.is_finite() { v } else { f64::MAX })
    }
}

fn nelder_mead(cost: NegLoglik<'_>, start: [f64; 3], iters: u64) -> Result<(Vec<f64>, f64, bool)> {
    let mut simplex = vec![start.to_vec()];
    for i in 0..3 {
        let mut v = start.to_vec();
        v[i] += 0.5;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-12)
        .map_err(|e| GdfmError::InvalidInput(e.to_string()))?;
    let res = Executor::new(cost, solver)
        .configure(|s| s.max_iters(iters))
        .run()
        .map_err(|e| GdfmError::InvalidInput(format!("optimizer failed: {e}")))?;
    let state = res.state();
    let best = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| GdfmError::InvalidInput("optimizer returned no point".into()))?;
    let converged = state.get_iter() < iters;
    Ok((best, state.get_best_cost(), converged))
}

/// Starting values (γ, β) of the multistart search.
const STARTS: [(f64, f64); 5] = [(0.05, 0.90), (0.10, 0.80), (0.20, 0.60), (0.03, 0.95), (0.15, 0.50)];

pub fn fit_garch(y: &[f64]) -> Result<GarchFit> {
    let t = y.len();
    if t < MIN_GARCH_PERIODS {
        return Err(GdfmError::InvalidInput(format!(
            "GARCH needs at least {MIN_GARCH_PERIODS} observations, have {t}"
        )));
    }
    let mean = y.iter().sum::<f64>() / t as f64;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
    if !(var > 0.0) {
        return Err(GdfmError::InvalidInput("GARCH series has zero variance".into()));
    }
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for &(g, b) in &STARTS {
        let p0 = GarchParams {
            omega: var * (1.0 - g - b),
            gamma: g,
            beta: b,
        };
        let cost = NegLoglik { y, mean, initial: var };
        let (x, c, conv) = nelder_mead(cost, p0.to_free(), 4000)?;
        // restart from the optimum to escape a collapsed simplex
        let cost = NegLoglik { y, mean, initial: var };
        let start = [x[0], x[1], x[2]];
        let (x2, c2, conv2) = nelder_mead(cost, start, 4000)?;
        let cand = if c2 <= c { (x2, c2, conv && conv2) } else { (x, c, conv) };
        if best.as_ref().is_none_or(|b| cand.1 < b.1) {
            best = Some(cand);
        }
    }
    let (x, _, converged) = best.expect("at least one start");
    let params = GarchParams::from_free(&x);
    if !converged {
        log::warn!("GARCH optimizer hit its iteration budget");
    }
    Ok(finish(y, mean, var, params, converged))
}

fn finish(y: &[f64], mean: f64, initial: f64, params: GarchParams, converged: bool) -> GarchFit {
    let sigma2 = filter_variance(y, mean, initial, &params);
    let eps = y.iter().zip(&sigma2).map(|(v, s)| (v - mean) / s.sqrt()).collect();
    let loglik = quasi_loglik(y, mean, initial, &params);
    GarchFit {
        params,
        mean,
        initial_variance: initial,
        sigma2,
        eps,
        loglik,
        gradient_norm: gradient_norm(y, mean, initial, &params),
        converged,
    }
}

fn gradient_norm(y: &[f64], mean: f64, initial: f64, p: &GarchParams) -> f64 {
    let base = [p.omega, p.gamma, p.beta];
    let mut sq = 0.0;
    for i in 0..3 {
        let h = 1e-6 * base[i].abs().max(1e-4);
        let mut up = base;
        let mut dn = base;
        up[i] += h;
        dn[i] -= h;
        let f = |v: [f64; 3]| {
            quasi_loglik(
                y,
                mean,
                initial,
                &GarchParams {
                    omega: v[0],
                    gamma: v[1],
                    beta: v[2],
                },
            )
        };
        let g = (f(up) - f(dn)) / (2.0 * h);
        sq += g * g;
    }
    sq.sqrt()
}

impl GarchFit {
    /// Same parameters filtered over a longer (or different) sample.
    pub fn refilter(&self, y: &[f64]) -> GarchFit {
        finish(y, self.mean, self.initial_variance, self.params, self.converged)
    }

    /// σ²_{T+1|T} = ω + γ(y_T − μ)² + β σ²_T.
    pub fn next_variance(&self, last: f64) -> f64 {
        let s = *self.sigma2.last().expect("nonempty fit");
        let d = last - self.mean;
        self.params.omega + self.params.gamma * d * d + self.params.beta * s
    }
}

/// (lower, upper, σ_{T+1|T}) from the last ℓ standardized residuals.
pub fn garch_interval(
    fit: &GarchFit,
    last: f64,
    alpha_minus: f64,
    alpha_plus: f64,
    window: Option<usize>,
) -> Result<(f64, f64, f64)> {
    let eps = &fit.eps;
    let win = match window {
        None => &eps[..],
        Some(l) if l == 0 || l > eps.len() => {
            return Err(GdfmError::InvalidInput(format!(
                "quantile window {l} outside [1, {}]",
                eps.len()
            )))
        }
        Some(l) => &eps[eps.len() - l..],
    };
    let sigma = fit.next_variance(last).sqrt();
    let (lo, hi) = quantile_bounds(fit.mean, sigma, win, alpha_minus, alpha_plus)?;
    Ok((lo, hi, sigma))
}

/// Rolling GARCH intervals on the same origins and cadence as the factor model.
pub fn rolling_garch(panel: &Panel, config: &PipelineConfig) -> Result<Vec<ForecastRecord>> {
    let t = panel.t_len();
    let start = config.eval_start.unwrap_or(t.saturating_sub(100));
    if start == 0 || start >= t {
        return Err(GdfmError::Config(format!("eval_start {start} must lie in [1, T={t})")));
    }
    let every = config.refit_every.max(1);
    let per_series: Vec<Vec<ForecastRecord>> = (0..panel.n())
        .into_par_iter()
        .map(|i| -> Result<Vec<ForecastRecord>> {
            let row: Vec<f64> = panel.values.row(i).iter().copied().collect();
            let mut out = Vec::new();
            let mut fit: Option<GarchFit> = None;
            for tau in start..t {
                let prefix = &row[..tau];
                let current = if (tau - start) % every == 0 {
                    fit_garch(prefix)?
                } else {
                    fit.as_ref().expect("fitted at the first origin").refilter(prefix)
                };
                for &alpha in &config.alphas {
                    let (lower, upper, sigma) =
                        garch_interval(&current, prefix[tau - 1], alpha / 2.0, alpha / 2.0, config.window)?;
                    let realized = row[tau];
                    let side = violation_side(realized, lower, upper);
                    out.push(ForecastRecord {
                        method: "garch".into(),
                        series: panel.labels[i].clone(),
                        alpha,
                        tau,
                        y_hat: current.mean,
                        s_hat: sigma,
                        lower,
                        upper,
                        var: (-lower).max(0.0),
                        realized: Some(realized),
                        hit: Some(u8::from(side == 0)),
                        viol_side: Some(side),
                    });
                }
                fit = Some(current);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_series.into_iter().flatten().collect())
}
