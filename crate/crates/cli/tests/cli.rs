use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gdfm::panel_io::save_panel;
use gdfm::simulate::{generate, rng_for, DgpConfig};

fn gdfm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdfm")).args(args).output().expect("running gdfm")
}

fn ok(args: &[&str]) -> String {
    let out = gdfm(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_panel(dir: &Path, n: usize, t: usize) -> String {
    let d = DgpConfig { n, t, seed: 2, ..DgpConfig::default() };
    let sim = generate(&d, &mut rng_for(2, 0)).unwrap();
    let path = dir.join("panel.csv");
    save_panel(&sim.panel, &path).unwrap();
    path.to_str().unwrap().to_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn header(csv: &str) -> Vec<String> {
    csv.lines().next().unwrap().split(',').map(str::to_owned).collect()
}

#[test]
fn fit_then_forecast_from_saved_model() {
    let dir = tempfile::tempdir().unwrap();
    let panel = write_panel(dir.path(), 15, 250);
    let cfg = write_config(dir.path(), r#"{"M_T": 10, "alphas": [0.1, 0.05]}"#);
    let model = dir.path().join("model.json");
    let scree = dir.path().join("scree.csv");
    let capping = dir.path().join("capping.csv");
    ok(&[
        "fit", "--input", &panel, "--config", &cfg, "--output", model.to_str().unwrap(),
        "--scree", scree.to_str().unwrap(), "--capping", capping.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&model).unwrap();
    assert!(serde_json::from_str::<serde_json::Value>(&text).is_ok());
    assert_eq!(header(&fs::read_to_string(&scree).unwrap()).len(), 3);
    assert_eq!(header(&fs::read_to_string(&capping).unwrap()).len(), 5);

    let out = ok(&["forecast", "--model", model.to_str().unwrap()]);
    let cols = header(&out);
    for c in ["series", "tau", "y_hat", "s_hat", "lower", "upper", "var", "realized", "hit", "viol_side"] {
        assert!(cols.iter().any(|h| h == c), "missing column {c} in {cols:?}");
    }
    assert_eq!(out.lines().count(), 1 + 15 * 2);

    let json = ok(&["forecast", "--model", model.to_str().unwrap(), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 30);
}

#[test]
fn rolling_forecast_backtest_and_garch_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let panel = write_panel(dir.path(), 10, 230);
    let cfg = write_config(dir.path(), r#"{"M_T": 8, "eval_start": 200, "alphas": [0.1]}"#);
    let fc = dir.path().join("fc.csv");
    ok(&["forecast", "--input", &panel, "--config", &cfg, "--refit-every", "10", "--output", fc.to_str().unwrap()]);
    let text = fs::read_to_string(&fc).unwrap();
    assert_eq!(text.lines().count(), 1 + 30 * 10);

    let report = ok(&["backtest", "--input", fc.to_str().unwrap()]);
    assert_eq!(report.lines().count(), 1 + 10 + 1);

    let cmp = dir.path().join("cmp.csv");
    let out = gdfm(&["compare-garch", "--input", &panel, "--config", &cfg, "--refit-every", "10", "--output", cmp.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&cmp).unwrap();
    assert!(text.contains("garch") && text.contains("gdfm"));
    assert!(String::from_utf8_lossy(&out.stderr).lines().count() >= 1 + 10);
}

#[test]
fn simulate_writes_report_and_replications() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"n": 20, "T": 200, "replications": 2}"#);
    let reps = dir.path().join("reps.csv");
    let out = ok(&["simulate", "--config", &cfg, "--seed", "4", "--replications-csv", reps.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["seeds"].as_array().unwrap().len(), 2);
    assert!(v["mse_x"].as_f64().unwrap().is_finite());
    assert_eq!(fs::read_to_string(&reps).unwrap().lines().count(), 3);
}

#[test]
fn malformed_panels_are_rejected_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "a,b\n1,2\n3,NA\n").unwrap();
    let out = gdfm(&["fit", "--input", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2") && err.contains("column 2"), "{err}");
}
