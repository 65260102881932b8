use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gdfm::backtest::{backtest_report, hit_series_from_records, mcnemar, OneSidedMethod};
use gdfm::forecast::{forecast_records, rolling_forecast, FittedPipeline, ForecastRecord};
use gdfm::garch::rolling_garch;
use gdfm::panel_io::{center, load_panel, read_json, write_records, Panel, PanelFormat, PipelineConfig};
use gdfm::simulate::{run_mc, DgpConfig, McOptions};
use gdfm::spectral::{estimate_spectrum, sample_autocov, scree};
use gdfm::volatility::{capping_diagnostic, default_capping_grid, CAPPING_SERIES};

#[derive(Parser)]
#[command(name = "gdfm", version, about = "Two-stage dynamic factor model intervals, VaR and backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum OneSided {
    Exact,
    Normal,
}

impl From<OneSided> for OneSidedMethod {
    fn from(o: OneSided) -> Self {
        match o {
            OneSided::Exact => OneSidedMethod::ExactBinomial,
            OneSided::Normal => OneSidedMethod::NormalApprox,
        }
    }
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input file (panel CSV unless stated otherwise).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit both stages on a panel and save the model as JSON.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Also write the eigenvalue scree of the level spectrum.
        #[arg(long)]
        scree: Option<PathBuf>,
        /// Number of eigenvalues per frequency in the scree output.
        #[arg(long, default_value_t = 10)]
        scree_top: usize,
        /// Also write the capping-rate diagnostic on the fitted volatility proxies.
        #[arg(long)]
        capping: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        phi: f64,
        #[arg(long = "cap-k", default_value_t = 0.5)]
        cap_k: f64,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
    },
    /// One-step interval forecasts, either from a saved model or rolling over a panel.
    Forecast {
        #[command(flatten)]
        common: Common,
        /// Saved model; when given, forecasts one period past the fitted sample
        /// (or past `--input` filtered through the model).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Refit cadence of the rolling exercise.
        #[arg(long)]
        refit_every: Option<usize>,
    },
    /// Coverage, independence and one-sided tests on forecast records (CSV input).
    Backtest {
        #[command(flatten)]
        common: Common,
        /// Label of the quantile window written into the report.
        #[arg(long, default_value = "all")]
        window: String,
        #[arg(long, value_enum, default_value = "exact")]
        one_sided: OneSided,
    },
    /// Monte Carlo replications of the simulation design.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Pipeline configuration used on each replication.
        #[arg(long)]
        pipeline: Option<PathBuf>,
        /// Per-replication CSV.
        #[arg(long)]
        replications_csv: Option<PathBuf>,
        /// Also run the out-of-sample coverage exercise on the last `holdout` periods.
        #[arg(long)]
        coverage: bool,
        #[arg(long, default_value_t = 100)]
        holdout: usize,
    },
    /// Rolling factor-model and GARCH intervals on the same origins, with McNemar comparisons.
    CompareGarch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        refit_every: Option<usize>,
        /// Backtest report for both methods.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "exact")]
        one_sided: OneSided,
    },
}

#[derive(Serialize)]
struct McNemarRow {
    series: String,
    alpha: f64,
    n_gdfm_only: usize,
    n_garch_only: usize,
    p_gdfm_better: f64,
    p_garch_better: f64,
    no_information: bool,
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit<T: Serialize>(rows: &[T], path: Option<&Path>, format: Format) -> Result<()> {
    let mut w = sink(path)?;
    match format {
        Format::Csv => write_records(rows, &mut w)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

fn emit_value<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn pipeline_config(path: Option<&Path>, seed: Option<u64>) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn input_panel(common: &Common) -> Result<Panel> {
    let path = common.input.as_deref().context("--input is required")?;
    load_panel(path, PanelFormat::Csv).with_context(|| format!("reading panel {}", path.display()))
}

fn read_forecasts(path: &Path) -> Result<Vec<ForecastRecord>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        out.push(rec.with_context(|| format!("forecast record on data row {}", i + 1))?);
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit {
            common,
            scree: scree_path,
            scree_top,
            capping,
            phi,
            cap_k,
            eps,
        } => {
            let cfg = pipeline_config(common.config.as_deref(), common.seed)?;
            let panel = input_panel(&common)?;
            for w in cfg.validate(panel.n(), panel.t_len())? {
                log::warn!("{w}");
            }
            let model = FittedPipeline::fit_panel(&panel, &cfg)?;
            if common.format == Format::Csv && common.output.is_some() {
                log::info!("the model is always written as JSON");
            }
            emit_value(&model, common.output.as_deref())?;
            if let Some(p) = scree_path {
                let (centered, _) = center(&panel);
                let spec = estimate_spectrum(&sample_autocov(&centered.values, cfg.level_bandwidth)?, cfg.level_bandwidth)?;
                emit(&scree(&spec, scree_top)?, Some(&p), common.format)?;
            }
            if let Some(p) = capping {
                let state = model.fitted_state()?;
                let rows = capping_diagnostic(
                    &state.proxy.s_hat,
                    &default_capping_grid(),
                    phi,
                    cap_k,
                    eps,
                    CAPPING_SERIES,
                    cfg.seed,
                )?;
                emit(&rows, Some(&p), common.format)?;
            }
        }
        Command::Forecast {
            common,
            model,
            refit_every,
        } => {
            let records = match model {
                Some(mpath) => {
                    let mut m: FittedPipeline =
                        read_json(&mpath).with_context(|| format!("reading model {}", mpath.display()))?;
                    if let Some(cpath) = common.config.as_deref() {
                        let cfg = PipelineConfig::load(cpath)?;
                        m.config.alphas = cfg.alphas;
                        m.config.window = cfg.window;
                    }
                    match common.input.as_deref() {
                        Some(_) => {
                            let panel = input_panel(&common)?;
                            if panel.labels != m.labels {
                                bail!("panel series do not match the model's series");
                            }
                            let state = m.state(&panel.values)?;
                            let mut out = Vec::new();
                            for &alpha in &m.config.alphas {
                                for f in m.predict_interval(&state, alpha / 2.0, alpha / 2.0, m.config.window)? {
                                    out.push(ForecastRecord::from_forecast(
                                        "gdfm",
                                        &m.labels[f.series],
                                        alpha,
                                        panel.t_len(),
                                        &f,
                                        None,
                                    ));
                                }
                            }
                            out
                        }
                        None => forecast_records(&m, &m.config.alphas.clone())?,
                    }
                }
                None => {
                    let mut cfg = pipeline_config(common.config.as_deref(), common.seed)?;
                    if let Some(k) = refit_every {
                        cfg.refit_every = k;
                    }
                    rolling_forecast(&input_panel(&common)?, &cfg)?
                }
            };
            emit(&records, common.output.as_deref(), common.format)?;
        }
        Command::Backtest {
            common,
            window,
            one_sided,
        } => {
            let path = common.input.as_deref().context("--input (forecast CSV) is required")?;
            let records = read_forecasts(path)?;
            let rows = backtest_report(&records, &window, one_sided.into());
            if rows.is_empty() {
                bail!("no evaluated forecasts (realized values) in {}", path.display());
            }
            emit(&rows, common.output.as_deref(), common.format)?;
        }
        Command::Simulate {
            common,
            pipeline,
            replications_csv,
            coverage,
            holdout,
        } => {
            let mut dgp: DgpConfig = match common.config.as_deref() {
                Some(p) => read_json(p).with_context(|| format!("reading DGP config {}", p.display()))?,
                None => DgpConfig::default(),
            };
            if let Some(s) = common.seed {
                dgp.seed = s;
            }
            let cfg = pipeline_config(pipeline.as_deref(), None)?;
            let report = run_mc(&dgp, &cfg, &McOptions { coverage, holdout })?;
            emit_value(&report, common.output.as_deref())?;
            if let Some(p) = replications_csv {
                emit(&report.rows, Some(&p), Format::Csv)?;
            }
            if report.failures > 0 {
                log::warn!("{} of {} replications failed", report.failures, report.replications);
            }
        }
        Command::CompareGarch {
            common,
            refit_every,
            report,
            one_sided,
        } => {
            let mut cfg = pipeline_config(common.config.as_deref(), common.seed)?;
            if let Some(k) = refit_every {
                cfg.refit_every = k;
            }
            let panel = input_panel(&common)?;
            let mut records = rolling_forecast(&panel, &cfg)?;
            records.extend(rolling_garch(&panel, &cfg)?);
            emit(&records, common.output.as_deref(), common.format)?;
            if let Some(p) = report {
                let window = cfg.window.map_or_else(|| "all".to_string(), |w| w.to_string());
                emit(&backtest_report(&records, &window, one_sided.into()), Some(&p), common.format)?;
            }
            let groups = hit_series_from_records(&records);
            let mut rows = Vec::new();
            for (method, series, a) in groups.iter().filter(|g| g.0 == "gdfm") {
                let Some((_, _, b)) = groups
                    .iter()
                    .find(|(m, s, h)| m == "garch" && s == series && h.alpha == a.alpha)
                else {
                    continue;
                };
                let t = mcnemar(a, b)?;
                debug_assert_eq!(method, "gdfm");
                rows.push(McNemarRow {
                    series: series.clone(),
                    alpha: a.alpha,
                    n_gdfm_only: t.n12,
                    n_garch_only: t.n21,
                    p_gdfm_better: t.p_a_better,
                    p_garch_better: t.p_b_better,
                    no_information: t.no_information,
                });
            }
            let mut err = io::stderr().lock();
            write_records(&rows, &mut err)?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
