//! Panel ingestion, centering, pipeline configuration and output helpers.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GdfmError, Result};

/// Minimum cross-section size accepted by the estimators.
pub const MIN_SERIES: usize = 2;
/// Minimum sample length accepted by the estimators.
pub const MIN_PERIODS: usize = 10;

/// An n×T panel, row i holding series i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub values: DMatrix<f64>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelFormat {
    Csv,
}

impl Panel {
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != values.nrows() {
            return Err(GdfmError::Shape(format!(
                "{} labels for {} series",
                labels.len(),
                values.nrows()
            )));
        }
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let n = values.nrows();
            return Err(GdfmError::Ingestion {
                row: idx % n,
                column: idx / n,
                message: "non-finite value".into(),
            });
        }
        Ok(Self { values, labels })
    }

    /// Panel with generated labels `s0, s1, ...`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let labels = (0..values.nrows()).map(|i| format!("s{i}")).collect();
        Self::new(values, labels)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn t_len(&self) -> usize {
        self.values.ncols()
    }

    /// Checks the minimum sizes needed for estimation.
    pub fn check_estimable(&self) -> Result<()> {
        if self.n() < MIN_SERIES || self.t_len() < MIN_PERIODS {
            return Err(GdfmError::InvalidInput(format!(
                "panel is {}x{}, need at least {}x{}",
                self.n(),
                self.t_len(),
                MIN_SERIES,
                MIN_PERIODS
            )));
        }
        for i in 0..self.n() {
            let row = self.values.row(i);
            let first = row[0];
            if row.iter().all(|&v| v == first) {
                return Err(GdfmError::ZeroVariance(i));
            }
        }
        Ok(())
    }

    /// First `t` observations of every series.
    pub fn head(&self, t: usize) -> Panel {
        Panel {
            values: self.values.columns(0, t).into_owned(),
            labels: self.labels.clone(),
        }
    }
}

pub fn load_panel(path: impl AsRef<Path>, format: PanelFormat) -> Result<Panel> {
    match format {
        PanelFormat::Csv => read_panel_csv(File::open(path)?),
    }
}

/// Reads a time-down, series-across CSV with a header row of names.
pub fn read_panel_csv<R: Read>(reader: R) -> Result<Panel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let labels: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let n = labels.len();
    if n == 0 {
        return Err(GdfmError::Ingestion {
            row: 0,
            column: 0,
            message: "empty header".into(),
        });
    }
    let mut data: Vec<f64> = Vec::new();
    let mut t = 0usize;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        if rec.len() != n {
            return Err(GdfmError::Ingestion {
                row,
                column: rec.len().min(n) + 1,
                message: format!("expected {} fields, found {}", n, rec.len()),
            });
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| GdfmError::Ingestion {
                row,
                column: c + 1,
                message: if field.is_empty() || field.eq_ignore_ascii_case("na") {
                    format!("missing value {field:?} in series {}", labels[c])
                } else {
                    format!("non-numeric value {field:?} in series {}", labels[c])
                },
            })?;
            if !v.is_finite() {
                return Err(GdfmError::Ingestion {
                    row,
                    column: c + 1,
                    message: format!("non-finite value {field:?} in series {}", labels[c]),
                });
            }
            data.push(v);
        }
        t += 1;
    }
    if t == 0 {
        return Err(GdfmError::Ingestion {
            row: 1,
            column: 1,
            message: "no data rows".into(),
        });
    }
    // data is time-major: row t holds n values, which is column-major for an n×T matrix
    let values = DMatrix::from_vec(n, t, data);
    Panel::new(values, labels)
}

pub fn save_panel(panel: &Panel, path: impl AsRef<Path>) -> Result<()> {
    write_panel_csv(panel, File::create(path)?)
}

pub fn write_panel_csv<W: Write>(panel: &Panel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&panel.labels)?;
    for t in 0..panel.t_len() {
        // `{}` on f64 prints the shortest string that parses back to the same bits
        w.write_record(panel.values.column(t).iter().map(|v| format!("{v}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Subtracts the row means; returns the centered panel and the means.
pub fn center(panel: &Panel) -> (Panel, DVector<f64>) {
    let (values, means) = center_rows(&panel.values);
    (
        Panel {
            values,
            labels: panel.labels.clone(),
        },
        means,
    )
}

pub fn center_rows(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let t = m.ncols() as f64;
    let means = DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum() / t));
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row.add_scalar_mut(-means[i]);
    }
    (out, means)
}

/// Settings for both estimation stages and the interval forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Number of level factors.
    pub q: usize,
    /// Number of volatility factors.
    #[serde(rename = "Q")]
    pub q_vol: usize,
    #[serde(rename = "B_T")]
    pub level_bandwidth: usize,
    #[serde(rename = "M_T")]
    pub vol_bandwidth: usize,
    #[serde(rename = "kappa_T")]
    pub kappa: f64,
    pub k1_bar: usize,
    pub k2_bar: usize,
    pub k1_star: usize,
    pub k2_star: usize,
    pub n_perm: usize,
    pub max_var_order: usize,
    pub max_ar_order: usize,
    pub seed: u64,
    /// Tail probabilities of the two-sided intervals, split equally.
    pub alphas: Vec<f64>,
    /// Innovation window; `None` uses every available innovation.
    pub window: Option<usize>,
    /// First forecast origin of a rolling exercise; `None` means `T - 100`.
    pub eval_start: Option<usize>,
    /// Refit cadence of the rolling exercise.
    pub refit_every: usize,
    /// Relative ridge added to every block Yule-Walker system (0 = plain Yule-Walker).
    pub yw_shrinkage: f64,
    /// Add a small ridge to near-singular Yule-Walker systems instead of failing.
    pub ridge: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            q: 1,
            q_vol: 1,
            level_bandwidth: 2,
            vol_bandwidth: 17,
            kappa: 0.25,
            k1_bar: 20,
            k2_bar: 20,
            k1_star: 100,
            k2_star: 100,
            n_perm: 10,
            max_var_order: 20,
            max_ar_order: 10,
            seed: 0,
            alphas: vec![0.1, 0.05],
            window: None,
            eval_start: None,
            refit_every: 1,
            yw_shrinkage: 0.03,
            ridge: true,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut s = String::new();
        File::open(path)?.read_to_string(&mut s)?;
        Self::from_json_str(&s)
    }

    /// Validates against a panel of `n` series and `t` periods. Returns soft warnings.
    pub fn validate(&self, n: usize, t: usize) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        let positive = [
            ("q", self.q),
            ("Q", self.q_vol),
            ("B_T", self.level_bandwidth),
            ("M_T", self.vol_bandwidth),
            ("k1_bar", self.k1_bar),
            ("k2_bar", self.k2_bar),
            ("k1_star", self.k1_star),
            ("k2_star", self.k2_star),
            ("n_perm", self.n_perm),
            ("max_var_order", self.max_var_order),
            ("max_ar_order", self.max_ar_order),
            ("refit_every", self.refit_every),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(GdfmError::Config(format!("{name} must be positive")));
            }
        }
        if self.q + 1 > n || self.q_vol + 1 > n {
            return Err(GdfmError::Config(format!(
                "need q+1 <= n and Q+1 <= n (q={}, Q={}, n={n})",
                self.q, self.q_vol
            )));
        }
        for (name, b) in [("B_T", self.level_bandwidth), ("M_T", self.vol_bandwidth)] {
            if b >= t {
                return Err(GdfmError::Config(format!("{name}={b} must be below T={t}")));
            }
            if (b * b) as f64 > t as f64 {
                warnings.push(format!("{name}={b} exceeds sqrt(T) for T={t}"));
            }
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(GdfmError::Config("kappa_T must be finite and nonnegative".into()));
        }
        if !(self.yw_shrinkage >= 0.0) || !self.yw_shrinkage.is_finite() {
            return Err(GdfmError::Config("yw_shrinkage must be finite and nonnegative".into()));
        }
        if self.kappa == 0.0 {
            warnings.push("kappa_T = 0: no capping; consistency theory needs a positive cap".into());
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a < 1.0) {
                return Err(GdfmError::Config(format!("alpha {a} outside (0,1)")));
            }
        }
        if let Some(w) = self.window {
            if w == 0 {
                return Err(GdfmError::Config("window must be positive".into()));
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(warnings)
    }
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let f = File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), value)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let f = File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

/// Writes serializable records as CSV with a header derived from the field names.
pub fn write_records<T: Serialize, W: Write>(records: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_records<T: Serialize>(records: &[T], path: impl AsRef<Path>) -> Result<()> {
    write_records(records, File::create(path)?)
}
