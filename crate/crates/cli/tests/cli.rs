use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sobolev-lab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn constants_table_for_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["constants", "--model", "sphere", "--d", "3", "--q", "4", "--n", "64", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&read(&dir.path().join("constants.json"))).unwrap();
    let a_opt = json["result"]["a_opt"].as_f64().unwrap();
    let expected = 2.0 / 3.0 / (2.0 * std::f64::consts::PI.powi(2)).sqrt();
    assert!((a_opt - expected).abs() < 1e-14);
    assert_eq!(json["schema_version"], 1);
    assert!(read(&dir.path().join("constants.txt")).contains("A_opt"));
}

#[test]
fn product_strict_binding() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["constants", "--model", "product", "--d", "4", "--n", "64", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&read(&dir.path().join("constants.json"))).unwrap();
    assert_eq!(json["result"]["strict_binding"], true);
}

#[test]
fn config_errors_exit_2() {
    assert_eq!(run(&["constants", "--d", "2"]).status.code(), Some(2));
    assert_eq!(run(&["scan", "--ray", "bubbles:1"]).status.code(), Some(2));
    assert_eq!(run(&["reproduce", "--only", "nothing"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"d": 3, "typo": true}"#).unwrap();
    let out = run(&["spectrum", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo"));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"d": 4, "k": 3}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["spectrum", "--d", "3", "--n", "64", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let csv = read(&out_dir.join("spectrum.csv"));
    let second: f64 = csv.lines().nth(2).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((second - 4.0).abs() < 1e-8);
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn minimize_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = run(&["minimize", "--model", "sphere", "--d", "3", "--q", "4", "--init", "random", "--seed", "7", "--n", "64", "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push((read(&out_dir.join("minimizer.csv")), read(&out_dir.join("minimize.json"))));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(outputs[0].0.starts_with("node,value\n"));
}

#[test]
fn minimize_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["minimize", "--init", "random", "--q", "4", "--n", "64", "--max-iter", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let diag: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(diag["exit_code"], 3);
}

#[test]
fn scan_fit_and_config_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let out = run(&["scan", "--model", "sphere", "--d", "3", "--q", "4", "--ray", "constants:phi1", "--n", "128", "--out", first.to_str().unwrap()]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&read(&first.join("scan.json"))).unwrap();
    let slope = report["result"]["fitted_slope"].as_f64().unwrap();
    assert!((slope - 4.0).abs() < 0.05, "slope {slope}");
    assert_eq!(report["result"]["classification"], "degenerate");
    assert!(read(&first.join("scan.csv")).starts_with("epsilon,deficit,distance,q_value,in_fit_window\n"));

    let second = dir.path().join("second");
    let out = run(&["scan", "--config", first.join("scan.json").to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(read(&first.join("scan.json")), read(&second.join("scan.json")));

    let out = run(&["fit", "--input", first.join("scan.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let fit: serde_json::Value = serde_json::from_str(&read(&dir.path().join("fit.json"))).unwrap();
    assert_eq!(fit["fitted_slope"].as_f64().unwrap(), slope);
}

#[test]
fn fit_on_inconclusive_report_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let scan_dir = dir.path().join("scan");
    let out = run(&["scan", "--q", "4", "--n", "64", "--eps-lo", "1e-9", "--eps-hi", "1e-8", "--eps-count", "6", "--out", scan_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let out = run(&["fit", "--input", scan_dir.join("scan.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Inconclusive"));
}

#[test]
fn reproduce_subset_passes() {
    let out = bin()
        .args(["reproduce", "--only", "constants", "--n", "64"])
        .env("SOBOLEV_LAB_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3);
}

#[test]
fn bad_thread_count_is_config_error() {
    let out = bin().args(["spectrum", "--n", "32"]).env("SOBOLEV_LAB_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
