use std::process::{Command, Output};

use serde_json::Value;

fn mista(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mista"))
        .args(args)
        .env("MISTA_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = mista(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn close(v: &Value, want: f64, tol: f64) -> bool {
    (v.as_f64().unwrap() - want).abs() <= tol
}

#[test]
fn every_command_has_an_anchor() {
    let cases: &[&[&str]] = &[
        &["bound"],
        &["roots", "--alpha", "10", "--r", "1.59", "--tau2", "0.38"],
        &["age", "--alpha", "10", "--r", "1.59", "--tau2", "0.38", "--n", "100"],
        &["pmf", "--n", "20", "--gamma", "30", "--tau1", "0.3", "--tau2", "0.4"],
        &["spectral", "--theta2", "0.5", "--theta1", "0.35"],
        &["optimize", "--policy", "sa"],
        &["compare", "--ns", "20", "--slots", "20000"],
    ];
    for args in cases {
        let v = json(args);
        assert!(v["paper_anchor"].is_string(), "{args:?}");
    }
}

#[test]
fn bound_values() {
    let v = json(&["bound", "--n", "1000"]);
    assert!(close(&v["q_max"], 0.5315, 0.001));
    assert!(close(&v["bound_slope"], 0.9407, 0.0005));
    let ta = json(&["bound", "--tau2", "1"]);
    assert!(close(&ta["q_max"], (-1.0f64).exp(), 1e-9));
    assert!(close(&ta["G"], 1.0, 1e-6));
}

#[test]
fn oracle_deviation() {
    let v = json(&["oracle", "--n", "3", "--gamma", "5", "--tau1", "0.3", "--tau2", "0.5"]);
    assert!(v["max_deviation"].as_f64().unwrap() < 1e-10);
    assert_eq!(v["states"].as_f64().unwrap(), 73.0);
}

#[test]
fn spectral_ratio_above_one() {
    let v = json(&["spectral", "--theta2", "0.5251", "--theta1", "0.3632", "--c", "16384", "--d", "128"]);
    assert!(v["ratio"].as_f64().unwrap() > 1.0);
}

#[test]
fn scaled_flags_are_converted() {
    let v = json(&["simulate", "--n", "100", "--r", "1.59", "--alpha", "10", "--tau2", "0.38", "--slots", "20000", "--seed", "3"]);
    assert_eq!(v["conversion"]["gamma"], 159);
    assert!(close(&v["conversion"]["tau1"], 0.1, 1e-15));
    assert_eq!(v["params"]["gamma"], 159);
}

#[test]
fn simulate_is_deterministic() {
    let args = ["simulate", "--policy", "ta", "--n", "30", "--gamma", "40", "--tau1", "0.1", "--slots", "50000", "--seed", "11", "--replications", "2"];
    assert_eq!(mista(&args).stdout, mista(&args).stdout);
}

#[test]
fn simulate_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("run");
    json(&["simulate", "--policy", "mumista", "--minislots", "4", "--n", "20", "--gamma", "30", "--tau1", "0.2", "--tau2", "0.4", "--slots", "30000", "--out", prefix.to_str().unwrap()]);
    let traj = std::fs::read_to_string(dir.path().join("run_trajectory.csv")).unwrap();
    assert!(traj.starts_with("slot,k,mean_age"));
    assert_eq!(traj.lines().count(), 10_001);
    let hist = std::fs::read_to_string(dir.path().join("run_histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 22);
}

#[test]
fn exit_codes() {
    let zero_reps = mista(&["simulate", "--n", "10", "--gamma", "5", "--tau1", "0.1", "--replications", "0"]);
    assert_eq!(zero_reps.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&zero_reps.stderr);
    assert_eq!(stderr.trim().lines().count(), 1);
    assert_eq!(mista(&["simulate", "--n", "10", "--tau1", "2", "--gamma", "5"]).status.code(), Some(2));
    assert_eq!(mista(&["simulate", "--n", "10", "--gamma", "3", "--r", "1"]).status.code(), Some(2));
    assert_eq!(mista(&["nonsense"]).status.code(), Some(2));
    let overflow = mista(&["simulate", "--n", "100000", "--gamma", "5", "--tau1", "0.1", "--slots", "9000000000000000000"]);
    assert_eq!(overflow.status.code(), Some(3));
}

#[test]
fn sweep_reports_minimum_and_gaps() {
    let v = json(&["optimize", "--sweep", "tau2", "--from", "0.2", "--to", "1.0", "--points", "81"]);
    assert!(close(&v["minimum"]["value"], 0.38, 0.03));
    let curve = v["curve"].as_array().unwrap();
    assert_eq!(curve.len(), 81);
    let gaps = json(&["optimize", "--sweep", "r", "--from", "-1", "--to", "2", "--points", "4"]);
    assert!(gaps["curve"][0]["age"].is_null());
    assert!(gaps["curve"][0]["error"].is_string());
}

#[test]
fn numbers_have_twelve_significant_digits() {
    let v = json(&["spectral", "--theta2", "1", "--theta1", "0.3"]);
    let text = v["throughput_ratio"].to_string();
    assert_eq!(text, "3.33333333333");
}
