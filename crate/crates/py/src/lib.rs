//! Python module `gdfm`: panels go in as time-down rows (one list per
//! period, one value per series), results come back as plain dicts and lists.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyString};
use pyo3::IntoPyObjectExt;
use serde::Serialize;
use serde_json::Value;

use gdfm::backtest::{lr_combined, lr_cover, lr_independence, mcnemar as mcnemar_test, summarize, HitSeries};
use gdfm::forecast::{forecast_records, rolling_forecast as rolling_gdfm, FittedPipeline};
use gdfm::garch::{fit_garch as fit_garch_series, rolling_garch as rolling_garch_panel};
use gdfm::panel_io::{load_panel, Panel, PanelFormat, PipelineConfig};
use gdfm::simulate::{generate, rng_for, run_mc as run_mc_core, DgpConfig, McOptions};
use gdfm::GdfmError;

fn err(e: GdfmError) -> PyErr {
    match e {
        GdfmError::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    match v {
        Value::Null => Ok(py.None()),
        Value::Bool(b) => b.into_py_any(py),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_py_any(py),
            None => n.as_f64().unwrap_or(f64::NAN).into_py_any(py),
        },
        Value::String(s) => s.into_py_any(py),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_py_any(py)
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_py_any(py)
        }
    }
}

fn serialize<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &v)
}

/// Accepts a JSON string, a dict, or None (defaults).
fn config_from<T: serde::de::DeserializeOwned + Default>(obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    let Some(obj) = obj else { return Ok(T::default()) };
    if obj.is_none() {
        return Ok(T::default());
    }
    let text: String = if obj.is_instance_of::<PyString>() {
        obj.extract()?
    } else {
        let json = obj.py().import("json")?;
        json.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("invalid config: {e}")))
}

fn panel_from(rows: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> PyResult<Panel> {
    let t = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if let Some((r, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(PyValueError::new_err(format!("row {r} has {} values, expected {n}", row.len())));
    }
    let values = DMatrix::from_fn(n, t, |i, s| rows[s][i]);
    let labels = labels.unwrap_or_else(|| (1..=n).map(|i| format!("s{i}")).collect());
    Panel::new(values, labels).map_err(err)
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

/// Fitted two-stage model.
#[pyclass(module = "gdfm")]
struct Model {
    inner: FittedPipeline,
}

#[pymethods]
impl Model {
    #[staticmethod]
    #[pyo3(signature = (rows, labels=None, config=None))]
    fn fit(rows: Vec<Vec<f64>>, labels: Option<Vec<String>>, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let panel = panel_from(rows, labels)?;
        let cfg: PipelineConfig = config_from(config)?;
        let inner = FittedPipeline::fit_panel(&panel, &cfg).map_err(err)?;
        Ok(Model { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Model { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels.clone()
    }

    #[getter]
    fn config(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        serialize(py, &self.inner.config)
    }

    /// One-step intervals past the fitted sample, one dict per (series, alpha).
    #[pyo3(signature = (alphas=None))]
    fn forecast(&self, py: Python<'_>, alphas: Option<Vec<f64>>) -> PyResult<Py<PyAny>> {
        let alphas = alphas.unwrap_or_else(|| self.inner.config.alphas.clone());
        let records = forecast_records(&self.inner, &alphas).map_err(err)?;
        serialize(py, &records)
    }

    /// In-sample components, each as time-down rows.
    fn components(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let st = self.inner.fitted_state().map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("common", rows_of(&st.levels.common))?;
        d.set_item("idiosyncratic", rows_of(&st.levels.idiosyncratic))?;
        d.set_item("s_hat", rows_of(&st.proxy.s_hat))?;
        d.set_item("h_hat", rows_of(&st.proxy.h_hat))?;
        d.set_item("vol_common", rows_of(&st.vol.common))?;
        d.set_item("w", rows_of(&st.innovations.w))?;
        d.set_item("capped_fraction", st.proxy.capped_fraction)?;
        d.into_py_any(py)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner.config;
        format!(
            "Model(n={}, T={}, q={}, Q={})",
            self.inner.labels.len(),
            self.inner.fitted_periods,
            c.q,
            c.q_vol
        )
    }
}

/// Reads a time-down CSV panel; returns (labels, rows).
#[pyfunction]
fn read_csv(path: &str) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
    let p = load_panel(std::path::Path::new(path), PanelFormat::Csv).map_err(err)?;
    Ok((p.labels.clone(), rows_of(&p.values)))
}

/// Rolling one-step factor-model intervals over the evaluation span.
#[pyfunction]
#[pyo3(signature = (rows, labels=None, config=None))]
fn rolling_forecast(
    py: Python<'_>,
    rows: Vec<Vec<f64>>,
    labels: Option<Vec<String>>,
    config: Option<&Bound<'_, PyAny>>,
) -> PyResult<Py<PyAny>> {
    let panel = panel_from(rows, labels)?;
    let cfg: PipelineConfig = config_from(config)?;
    let records = py.detach(|| rolling_gdfm(&panel, &cfg)).map_err(err)?;
    serialize(py, &records)
}

/// Rolling per-series GARCH(1,1) intervals on the same origins.
#[pyfunction]
#[pyo3(signature = (rows, labels=None, config=None))]
fn rolling_garch(
    py: Python<'_>,
    rows: Vec<Vec<f64>>,
    labels: Option<Vec<String>>,
    config: Option<&Bound<'_, PyAny>>,
) -> PyResult<Py<PyAny>> {
    let panel = panel_from(rows, labels)?;
    let cfg: PipelineConfig = config_from(config)?;
    let records = py.detach(|| rolling_garch_panel(&panel, &cfg)).map_err(err)?;
    serialize(py, &records)
}

#[pyfunction]
fn fit_garch(py: Python<'_>, series: Vec<f64>) -> PyResult<Py<PyAny>> {
    let fit = fit_garch_series(&series).map_err(err)?;
    serialize(py, &fit)
}

/// Coverage, conditional coverage and independence tests on a hit sequence.
#[pyfunction]
fn backtest(py: Python<'_>, hits: Vec<bool>, alpha: f64) -> PyResult<Py<PyAny>> {
    let h = HitSeries::from_hits(&hits, alpha);
    let d = PyDict::new(py);
    let s = summarize(&h);
    d.set_item("coverage", s.coverage)?;
    d.set_item("points", h.len())?;
    d.set_item("lr_cover", lr_cover(&h))?;
    d.set_item("lr_independence", serialize(py, &lr_independence(&h))?)?;
    d.set_item("lr_combined", lr_combined(&h))?;
    d.into_py_any(py)
}

#[pyfunction]
fn mcnemar(py: Python<'_>, hits_a: Vec<bool>, hits_b: Vec<bool>) -> PyResult<Py<PyAny>> {
    let a = HitSeries::from_hits(&hits_a, 0.1);
    let b = HitSeries::from_hits(&hits_b, 0.1);
    serialize(py, &mcnemar_test(&a, &b).map_err(err)?)
}

/// One panel from the simulation design; returns a dict of time-down rows.
#[pyfunction]
#[pyo3(signature = (dgp=None))]
fn simulate(py: Python<'_>, dgp: Option<&Bound<'_, PyAny>>) -> PyResult<Py<PyAny>> {
    let d: DgpConfig = config_from(dgp)?;
    let sim = generate(&d, &mut rng_for(d.seed, 0)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("labels", sim.panel.labels.clone())?;
    out.set_item("y", rows_of(&sim.panel.values))?;
    out.set_item("common", rows_of(&sim.common))?;
    out.set_item("idiosyncratic", rows_of(&sim.idiosyncratic))?;
    out.set_item("chi", rows_of(&sim.chi))?;
    out.set_item("h", rows_of(&sim.h))?;
    out.set_item("s", rows_of(&sim.s))?;
    out.into_py_any(py)
}

/// Monte Carlo over replications of the simulation design.
#[pyfunction]
#[pyo3(signature = (dgp=None, config=None, coverage=false, holdout=100))]
fn run_mc(
    py: Python<'_>,
    dgp: Option<&Bound<'_, PyAny>>,
    config: Option<&Bound<'_, PyAny>>,
    coverage: bool,
    holdout: usize,
) -> PyResult<Py<PyAny>> {
    let d: DgpConfig = config_from(dgp)?;
    let cfg: PipelineConfig = config_from(config)?;
    let opts = McOptions { coverage, holdout };
    let report = py.detach(|| run_mc_core(&d, &cfg, &opts)).map_err(err)?;
    serialize(py, &report)
}

#[pymodule(name = "gdfm")]
fn gdfm_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(read_csv, m)?)?;
    m.add_function(wrap_pyfunction!(rolling_forecast, m)?)?;
    m.add_function(wrap_pyfunction!(rolling_garch, m)?)?;
    m.add_function(wrap_pyfunction!(fit_garch, m)?)?;
    m.add_function(wrap_pyfunction!(backtest, m)?)?;
    m.add_function(wrap_pyfunction!(mcnemar, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_mc, m)?)?;
    Ok(())
}
