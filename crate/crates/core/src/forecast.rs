//! One-step-ahead level and volatility predictors, multiplicative innovations
//! and quantile-based prediction intervals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GdfmError, Result};
use crate::gdfm::{fit_stage, predict_common, predict_idio, Components, GdfmModel, StageOptions};
use crate::panel_io::{Panel, PipelineConfig};
use crate::simulate::rng_for;
use crate::volatility::{build_proxy, fit_volatility, VolModel, VolProxy};

/// ω̂ = η̂ + ν̂ and ŵ = exp(ω̂/2)·sign(ŝ).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Innovations {
    pub omega: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

pub fn innovations(vol: &Components, proxy: &VolProxy) -> Result<Innovations> {
    let shape = proxy.s_hat.shape();
    if vol.common_innovations.shape() != shape || vol.residuals.shape() != shape {
        return Err(GdfmError::Shape(format!(
            "volatility components {:?} do not match proxy {:?}",
            vol.common_innovations.shape(),
            shape
        )));
    }
    let omega = &vol.common_innovations + &vol.residuals;
    let w = omega.zip_map(&proxy.s_hat, |o, s| {
        let m = (o / 2.0).exp();
        if s < 0.0 {
            -m
        } else {
            m
        }
    });
    Ok(Innovations { omega, w })
}

/// The ⌈ℓα⌉-th order statistic of the window (1-based, clamped to [1, ℓ]).
pub fn empirical_quantile(window: &[f64], alpha: f64) -> Result<f64> {
    if window.is_empty() {
        return Err(GdfmError::InvalidInput("empty quantile window".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(GdfmError::InvalidInput(format!("alpha {alpha} outside (0,1)")));
    }
    let mut sorted = window.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[order_index(sorted.len(), alpha)])
}

/// Zero-based position of the ⌈ℓα⌉-th order statistic.
pub fn order_index(len: usize, alpha: f64) -> usize {
    let k = (len as f64 * alpha).ceil() as usize;
    k.clamp(1, len) - 1
}

/// Interval forecast for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesForecast {
    pub series: usize,
    pub y_hat: f64,
    pub h_hat: f64,
    pub s_hat: f64,
    pub alpha_minus: f64,
    pub alpha_plus: f64,
    pub lower: f64,
    pub upper: f64,
    pub var: f64,
    /// Whether α⁻ < P̂[w ≤ 0] and α⁺ < 1 − P̂[w ≤ 0] on the window, which
    /// places the point predictor inside the interval.
    pub covers_predictor: bool,
}

/// Bounds from a centre, a scale and a window of standardized innovations.
pub fn quantile_bounds(center: f64, scale: f64, window: &[f64], alpha_minus: f64, alpha_plus: f64) -> Result<(f64, f64)> {
    let lo = empirical_quantile(window, alpha_minus)?;
    let hi = empirical_quantile(window, 1.0 - alpha_plus)?;
    Ok((center + scale * lo, center + scale * hi))
}

fn window_slice(row: &[f64], window: Option<usize>) -> Result<&[f64]> {
    match window {
        None => Ok(row),
        Some(l) if l == 0 || l > row.len() => Err(GdfmError::InvalidInput(format!(
            "quantile window {l} outside [1, {}]",
            row.len()
        ))),
        Some(l) => Ok(&row[row.len() - l..]),
    }
}

/// State of both stages on a panel prefix under fixed filters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineState {
    pub levels: Components,
    pub proxy: VolProxy,
    pub vol: Components,
    pub innovations: Innovations,
}

/// Both fitted stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub config: PipelineConfig,
    pub labels: Vec<String>,
    pub levels: GdfmModel,
    pub vol: VolModel,
    /// Number of periods the fit used.
    pub fitted_periods: usize,
}

impl FittedPipeline {
    /// Fits levels then volatilities on an n×T matrix.
    pub fn fit(values: &DMatrix<f64>, labels: Vec<String>, config: &PipelineConfig) -> Result<Self> {
        config.validate(values.nrows(), values.ncols())?;
        let mut rng = rng_for(config.seed, 0);
        let levels = fit_stage(values, &StageOptions::levels(config), &mut rng)?;
        let proxy = build_proxy(
            &levels.components.common_innovations,
            &levels.components.residuals,
            config.kappa,
        )?;
        let mut rng = rng_for(config.seed, 1);
        let vol = fit_volatility(&proxy, &StageOptions::volatility(config), &mut rng)?;
        Ok(Self {
            config: config.clone(),
            labels,
            levels,
            vol,
            fitted_periods: values.ncols(),
        })
    }

    pub fn fit_panel(panel: &Panel, config: &PipelineConfig) -> Result<Self> {
        panel.check_estimable()?;
        Self::fit(&panel.values, panel.labels.clone(), config)
    }

    /// State on the sample the model was fitted on.
    pub fn fitted_state(&self) -> Result<PipelineState> {
        let levels = self.levels.components.clone();
        let proxy = build_proxy(&levels.common_innovations, &levels.residuals, self.vol.kappa)?;
        let vol = self.vol.stage.components.clone();
        let innovations = innovations(&vol, &proxy)?;
        Ok(PipelineState {
            levels,
            proxy,
            vol,
            innovations,
        })
    }

    /// Runs both stages' fixed filters over `data` (same series, any length).
    pub fn state(&self, data: &DMatrix<f64>) -> Result<PipelineState> {
        let levels = self.levels.filter(data)?;
        let proxy = build_proxy(&levels.common_innovations, &levels.residuals, self.vol.kappa)?;
        let vol = self.vol.stage.filter(&proxy.h_hat)?;
        let innovations = innovations(&vol, &proxy)?;
        Ok(PipelineState {
            levels,
            proxy,
            vol,
            innovations,
        })
    }

    /// Ŷ_{T+1|T} and ĥ_{T+1|T} for the last period of `state`.
    pub fn point_forecast(&self, state: &PipelineState) -> (DVector<f64>, DVector<f64>) {
        let y = predict_common(&self.levels.impulse, &state.levels.shocks)
            + predict_idio(&self.levels.ar, &state.levels.residuals)
            + &self.levels.means;
        let vs = &self.vol.stage;
        let h = predict_common(&vs.impulse, &state.vol.shocks) + predict_idio(&vs.ar, &state.vol.residuals) + &vs.means;
        (y, h)
    }

    /// Interval forecasts for every series, one period past `state`.
    pub fn predict_interval(
        &self,
        state: &PipelineState,
        alpha_minus: f64,
        alpha_plus: f64,
        window: Option<usize>,
    ) -> Result<Vec<SeriesForecast>> {
        for a in [alpha_minus, alpha_plus] {
            if !(a > 0.0 && a < 0.5) {
                return Err(GdfmError::InvalidInput(format!("tail probability {a} outside (0, 1/2)")));
            }
        }
        let (y, h) = self.point_forecast(state);
        let w = &state.innovations.w;
        (0..w.nrows())
            .map(|i| {
                let row: Vec<f64> = w.row(i).iter().copied().collect();
                let win = window_slice(&row, window)?;
                let s_hat = (h[i] / 2.0).exp();
                let (lower, upper) = quantile_bounds(y[i], s_hat, win, alpha_minus, alpha_plus)?;
                let p_nonpos = win.iter().filter(|&&v| v <= 0.0).count() as f64 / win.len() as f64;
                Ok(SeriesForecast {
                    series: i,
                    y_hat: y[i],
                    h_hat: h[i],
                    s_hat,
                    alpha_minus,
                    alpha_plus,
                    lower,
                    upper,
                    var: (-lower).max(0.0),
                    covers_predictor: alpha_minus < p_nonpos && alpha_plus < 1.0 - p_nonpos,
                })
            })
            .collect()
    }
}

/// Side of a realized value relative to an interval.
pub fn violation_side(realized: f64, lower: f64, upper: f64) -> i8 {
    if realized < lower {
        -1
    } else if realized > upper {
        1
    } else {
        0
    }
}

/// One line of the forecast output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub method: String,
    pub series: String,
    pub alpha: f64,
    /// Forecast origin: number of observations available when forecasting.
    pub tau: usize,
    pub y_hat: f64,
    pub s_hat: f64,
    pub lower: f64,
    pub upper: f64,
    pub var: f64,
    /// Realized value at τ+1, absent past the sample end.
    pub realized: Option<f64>,
    pub hit: Option<u8>,
    /// −1 below the interval, +1 above, 0 inside.
    pub viol_side: Option<i8>,
}

impl ForecastRecord {
    pub fn from_forecast(method: &str, label: &str, alpha: f64, tau: usize, f: &SeriesForecast, realized: Option<f64>) -> Self {
        let side = realized.map(|r| violation_side(r, f.lower, f.upper));
        Self {
            method: method.to_string(),
            series: label.to_string(),
            alpha,
            tau,
            y_hat: f.y_hat,
            s_hat: f.s_hat,
            lower: f.lower,
            upper: f.upper,
            var: f.var,
            realized,
            hit: side.map(|s| u8::from(s == 0)),
            viol_side: side,
        }
    }
}

/// Forecast past the end of the fitted sample for every α (equal tails).
pub fn forecast_records(model: &FittedPipeline, alphas: &[f64]) -> Result<Vec<ForecastRecord>> {
    let state = model.fitted_state()?;
    let mut out = Vec::new();
    for &alpha in alphas {
        let fc = model.predict_interval(&state, alpha / 2.0, alpha / 2.0, model.config.window)?;
        for f in &fc {
            out.push(ForecastRecord::from_forecast(
                "gdfm",
                &model.labels[f.series],
                alpha,
                model.fitted_periods,
                f,
                None,
            ));
        }
    }
    Ok(out)
}

/// Rolling one-step forecasts for origins τ = eval_start..T−1; the model is
/// refitted on the first τ observations every `refit_every` origins and
/// filtered forward in between.
pub fn rolling_forecast(panel: &Panel, config: &PipelineConfig) -> Result<Vec<ForecastRecord>> {
    let t = panel.t_len();
    let start = match config.eval_start {
        Some(s) => s,
        None => t.checked_sub(100).ok_or_else(|| {
            GdfmError::Config(format!("default evaluation start needs T > 100, have T={t}"))
        })?,
    };
    if start == 0 || start >= t {
        return Err(GdfmError::Config(format!("eval_start {start} must lie in [1, T={t})")));
    }
    let every = config.refit_every.max(1);
    let mut model: Option<FittedPipeline> = None;
    let mut out = Vec::new();
    for tau in start..t {
        let prefix = panel.values.columns(0, tau).into_owned();
        if (tau - start) % every == 0 {
            log::info!("fitting on the first {tau} observations");
            model = Some(FittedPipeline::fit(&prefix, panel.labels.clone(), config)?);
        }
        let m = model.as_ref().expect("fitted at the first origin");
        let state = if m.fitted_periods == tau {
            m.fitted_state()?
        } else {
            m.state(&prefix)?
        };
        for &alpha in &config.alphas {
            let fc = m.predict_interval(&state, alpha / 2.0, alpha / 2.0, config.window)?;
            for f in &fc {
                let realized = panel.values[(f.series, tau)];
                out.push(ForecastRecord::from_forecast(
                    "gdfm",
                    &panel.labels[f.series],
                    alpha,
                    tau,
                    f,
                    Some(realized),
                ));
            }
        }
    }
    Ok(out)
}
