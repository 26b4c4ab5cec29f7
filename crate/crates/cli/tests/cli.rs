use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn cqsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqsim"))
        .args(args)
        .output()
        .expect("spawn cqsim")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> String {
    configs().join(name).display().to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(cqsim(&["--help"]).status.code(), Some(0));
    assert_eq!(cqsim(&["steady", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(cqsim(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cqsim(&["steady", "--taus", "1:0:2"]).status.code(), Some(1));
}

#[test]
fn zero_interaction_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "v0.toml", "[model]\nv = 0.0\n");
    let out = cqsim(&["steady", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("interaction strength v must be positive"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn every_violation_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "[system]\nkappa = -1.0\nn_max = 0\n\n[optimizer]\nstep = -0.1\n",
    );
    let out = cqsim(&["steady", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(
        msg.contains("kappa") && msg.contains("n_max") && msg.contains("step"),
        "{msg}"
    );
}

#[test]
fn degenerate_state_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    // K = R = 0 on two levels: every density is stationary
    let zeros = vec!["0.0"; 13].join(", ");
    let cfg = write(
        dir.path(),
        "flat.toml",
        &format!("[system]\nmode = \"free\"\nbond_dim = 2\n\n[optimizer]\nstart = [{zeros}]\n"),
    );
    let out = cqsim(&["steady", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn physical_units_are_converted_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = cqsim(&[
        "steady",
        "--config",
        &config("physical.toml"),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = json(&out_dir.join("steady.json"));
    let system = &report["config"]["system"];
    assert_eq!(system["kappa"], 1.0);
    assert!((system["g"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((system["omega"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(report["config"]["unit_conversion"]["kappa"], 0.05);
    assert!((report["trace"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let out = cqsim(&[
        "optimize",
        "--config",
        &config("scalar.toml"),
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let resolved = first.join("resolved.toml").display().to_string();
    let out = cqsim(&["optimize", "--config", &resolved, "--out", second.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));

    let a = json(&first.join("summary.json"));
    let b = json(&second.join("summary.json"));
    assert_eq!(a["results"], b["results"]);
    let row = &a["results"][0];
    assert!((row["f_star"].as_f64().unwrap() + 0.25).abs() < 1e-6);
    assert_eq!(row["converged"], true);
}

#[test]
fn correlation_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = cqsim(&[
        "correlate",
        "--config",
        &config("scalar.toml"),
        "--v",
        "1.0",
        "--taus",
        "0:0.5:2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("correlation.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# cqsim "));
    assert!(lines[1].starts_with("# config {"));
    assert_eq!(lines[2], "tau,re,im,normalized");
    let rows = &lines[3..];
    assert_eq!(rows.len(), 5);
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 4);
        // 17 significant digits
        let mantissa = fields[1].split('e').next().unwrap().replace(['-', '.'], "");
        assert_eq!(mantissa.len(), 17, "{row}");
        // coherent optimum: g2 is flat at n²
        let normalized: f64 = fields[3].parse().unwrap();
        assert!((normalized - 1.0).abs() < 1e-9, "{row}");
    }
}

#[test]
fn json_series_to_stdout() {
    let out = cqsim(&[
        "correlate",
        "--config",
        &config("scalar.toml"),
        "--kind",
        "g1",
        "--taus",
        "0:1:1",
        "--format",
        "json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let body: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(body["version"].is_string());
    assert!(body.to_string().contains("tau"));
}

#[test]
fn small_sweep_writes_series_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sweep.toml",
        "[system]\nmode = \"free\"\nbond_dim = 1\n\n[model]\nv_list = [0.5, 2.0]\n\n\
         [optimizer]\nstep = 0.1\ntol = 1e-12\nstart = [0.0, 0.1, 0.0, 0.0]\n\n[output]\ntaus = \"0:1:3\"\n",
    );
    let out_dir = dir.path().join("sweep");
    let out = cqsim(&["sweep", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = json(&out_dir.join("summary.json"));
    let rows = summary["results"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for (row, v) in rows.iter().zip([0.5, 2.0]) {
        // D = 1: f* = -1/4v
        assert!((row["f_star"].as_f64().unwrap() + 0.25 / v).abs() < 1e-6, "{row}");
    }
    assert!(out_dir.join("g2_0_v0.5.csv").exists());
    assert!(out_dir.join("g2_1_v2.csv").exists());
}

#[test]
fn noisy_optimize_reports_stderr() {
    let out = cqsim(&["noisy-optimize", "--config", &config("noisy.toml"), "--seed", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let body: Value = serde_json::from_slice(&out.stdout).unwrap();
    let row = &body["results"][0];
    assert!(row["stderr"].as_f64().unwrap() > 0.0);
    let density = -row["breakdown"]["N"].as_f64().unwrap();
    assert!((density - 0.5).abs() <= 0.05, "{row}");
}
