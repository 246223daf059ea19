use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cde"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = cde(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let mut runs = Vec::new();
    for _ in 0..2 {
        let out = cde(&[
            "generate",
            "--family",
            "perturbed",
            "--param",
            "r=2",
            "--param",
            "m=2",
            "--n",
            "1000",
            "--seed",
            "7",
            "--out",
            path_str(&path),
        ]);
        assert!(out.status.success());
        runs.push(std::fs::read(&path).unwrap());
    }
    let (ta, tb) = (runs.remove(0), runs.remove(0));
    assert_eq!(ta, tb);
    let text = String::from_utf8(ta).unwrap();
    let lines = data_lines(&text);
    assert_eq!(lines[0], "x_1,z_1");
    assert_eq!(lines.len(), 1001);
    assert!(text.starts_with("# cde-core "));
    assert!(text.contains("\"seed\":7"));
}

#[test]
fn budget_violation_is_a_validation_error() {
    let out = cde(&[
        "generate",
        "--family",
        "perturbed",
        "--param",
        "r=2",
        "--param",
        "m=2",
        "--param",
        "rho=3",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("budget") && msg.contains("1/2"), "{msg}");
}

#[test]
fn zero_samples_give_header_only() {
    let out = cde(&["generate", "--n", "0"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(data_lines(&text), vec!["x_1,z_1"]);
}

#[test]
fn unknown_family_and_bad_flags_fail() {
    assert_eq!(cde(&["generate", "--family", "gaussian"]).status.code(), Some(1));
    assert_eq!(cde(&["generate", "--param", "noequals"]).status.code(), Some(1));
    assert_eq!(cde(&["fit", "--family", "nope"]).status.code(), Some(1));
    assert_eq!(cde(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cde(&["--help"]).status.code(), Some(0));
}

#[test]
fn fixed_fit_reports_loss() {
    let doc = ok_json(&["fit", "--n", "4096", "--h", "0.125", "--m", "8", "--seed", "3"]);
    let loss = doc["loss"]["mean"].as_f64().unwrap();
    assert!(loss > 0.0 && loss < 0.5, "{loss}");
    assert_eq!(doc["tuning"]["m"], 8);
    assert_eq!(doc["estimators"].as_array().unwrap().len(), 1);
    assert_eq!(doc["config"]["n"], 4096);
    assert!(doc["version"].as_str().unwrap().starts_with("cde-core"));
    assert!(doc.get("selection").is_none());
}

#[test]
fn rate_optimal_fit_uses_family_smoothness() {
    let doc = ok_json(&["fit", "--n", "4096"]);
    assert!((doc["tuning"]["h"].as_f64().unwrap() - 0.125).abs() < 1e-12);
    assert_eq!(doc["tuning"]["m"], 8);
}

#[test]
fn adaptive_fit_includes_diagnostics_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let fit = dir.path().join("fit.json");
    let out = cde(&["fit", "--n", "600", "--cross-fit", "--out", path_str(&fit)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&std::fs::read(&fit).unwrap()).unwrap();
    assert_eq!(doc["selection"]["rounds"].as_array().unwrap().len(), 2);
    assert_eq!(doc["estimators"].as_array().unwrap().len(), 2);
    let eval = ok_json(&["evaluate", "--estimator", path_str(&fit)]);
    // Same seed, same z draws: the evaluation reproduces the fit's own loss.
    assert_eq!(eval["loss"], doc["loss"]);
    assert!(eval["per_z_tv"]["z_points"].as_u64().unwrap() == 1000);
}

#[test]
fn select_reports_oracle_comparison() {
    let doc = ok_json(&["select", "--n", "400", "--seed", "5"]);
    let selected = doc["selected"].as_u64().unwrap() as usize;
    let losses = doc["losses"].as_array().unwrap();
    assert_eq!(losses.len(), doc["candidates"].as_array().unwrap().len());
    assert_eq!(doc["oracle"]["selected_loss"], losses[selected]);
    assert_eq!(
        doc["train_size"].as_u64().unwrap() + doc["holdout_size"].as_u64().unwrap(),
        400
    );
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"family": {"name": "linear", "c": 0.5}, "n": 10, "seed": 1}"#).unwrap();
    let out = cde(&["generate", "--config", path_str(&cfg), "--seed", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"seed\":2") && text.contains("\"name\":\"linear\""));
    assert_eq!(data_lines(&text).len(), 11);
    std::fs::write(&cfg, r#"{"n": 10, "colour": "red"}"#).unwrap();
    assert_eq!(cde(&["generate", "--config", path_str(&cfg)]).status.code(), Some(1));
}

#[test]
fn rate_sweep_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("sweep.csv");
    let files = ["sweep.csv", "sweep.plot.csv", "sweep.summary.json"];
    let run = |threads: &str| {
        let out = cde(&[
            "rate-sweep",
            "--n-values",
            "64,128,256",
            "--replications",
            "2",
            "--z-samples",
            "32",
            "--threads",
            threads,
            "--out",
            path_str(&p),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        files.map(|f| std::fs::read_to_string(dir.path().join(f)).unwrap())
    };
    let [rows, plot, summary] = run("1");
    assert_eq!(run("3"), [rows.clone(), plot.clone(), summary.clone()]);
    assert_eq!(data_lines(&rows).len(), 1 + 3 * 2);
    assert_eq!(data_lines(&rows)[0], "n,replication,loss,h,m,selected_flag");
    assert_eq!(data_lines(&plot).len(), 4);
    let summary: Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(summary["target_exponent"].as_f64().unwrap(), -0.25);
    assert!(summary["slope"].as_f64().unwrap() < 0.0);
    assert_eq!(summary["config"]["family"]["name"], "perturbed");
}

#[test]
fn rate_sweep_needs_three_sample_sizes() {
    let out = cde(&["rate-sweep", "--n-values", "64,128,128"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn kernel_and_smoothness_checks() {
    let doc = ok_json(&["kernel-check", "--orders", "0,2,4", "--dims", "1,3"]);
    assert_eq!(doc["pass"], true);
    assert_eq!(doc["reports"].as_array().unwrap().len(), 6);
    let doc = ok_json(&[
        "check-smoothness",
        "--family",
        "linear",
        "--param",
        "c=0",
        "--beta",
        "1",
        "--w1",
        "2.0001",
    ]);
    assert!((doc["holder"]["max_ratio"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert_eq!(doc["holder"]["pass"], true);
    let doc = ok_json(&["check-smoothness", "--gamma", "1.5"]);
    assert!(doc["tv"]["max_ratio"].as_f64().unwrap() > 0.0);
}
