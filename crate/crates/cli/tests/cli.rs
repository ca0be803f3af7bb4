use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn lmce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmce")).args(args).output().expect("binary runs")
}

fn example(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples").join(name).display().to_string()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("failure JSON on stderr")
}

#[test]
fn classical_small_phase_converges() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("c");
    let o = lmce(&["classical", &example("small_phase.json"), "--grid", "65", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("classical.json"));
    assert!(r["residual"].as_f64().unwrap() <= 1e-8);
    assert!(r["contraction"].as_f64().unwrap() < 1.0);
    assert!(out.join("v.field").exists());
}

#[test]
fn classical_refuses_large_phase() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "big.json", r#"{ "grid": 33, "theta": "1.2" }"#);
    let o = lmce(&["classical", &cfg, "--out", tmp.path().join("c").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["code"], "phase_not_small");
}

#[test]
fn phase_crossing_zero_is_rejected_with_location() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", r#"{ "grid": 33, "theta": "x1 - 0.5" }"#);
    let o = lmce(&["run", &cfg, "--out", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["code"], "c2_violation");
    assert_eq!(e["exit"], 2);
    assert!(e["message"].as_str().unwrap().contains("(0.5000, "), "{e}");
}

#[test]
fn unknown_config_field_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "typo.json", r#"{ "theta": "pi/2", "gird": 65 }"#);
    let o = lmce(&["run", &cfg, "--out", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["code"], "invalid_argument");
}

#[test]
fn infeasible_schedule_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let o = lmce(&["run", &example("ma_square.json"), "--grid", "129", "--out", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["code"], "unresolvable_schedule");
}

#[test]
fn zero_stage_run_writes_report_and_fields() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "z.json", r#"{ "grid": 65, "theta": "pi/2", "schedule": { "stages": 0 } }"#);
    let out = tmp.path().join("r");
    let o = lmce(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("report.json"));
    assert!(r["stop"].is_null());
    assert_eq!(r["states"].as_array().unwrap().len(), 1);

    let o = lmce(&["report", out.join("report.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("stop: none"));

    let o = lmce(&["dump", out.join("h.field").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let d: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(d["nx"], 65);
    assert_eq!(d["components"].as_array().unwrap().len(), 3);

    let o = lmce(&["dump", out.join("v.field").to_str().unwrap(), "--values"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 65 * 65);
}

#[test]
fn failed_stage_exits_three_and_keeps_report() {
    // Too coarse for the stage to stay positive.
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "coarse.json",
        r#"{ "grid": 129, "theta": "pi/2",
             "schedule": { "stages": 1, "r0": 0.3, "overrides": [ { "f1": 16, "f2": 32, "floor_fraction": 0.25 } ] },
             "stage": { "allow_unresolved": true } }"#,
    );
    let out = tmp.path().join("r");
    let o = lmce(&["run", &cfg, "--out", out.to_str().unwrap(), "--dump-stages"]);
    assert_eq!(o.status.code(), Some(3));
    let r = read_json(&out.join("report.json"));
    assert!(!r["stop"].is_null());
    assert!(out.join("stage_0").join("v.field").exists());
}

#[test]
fn gamma_probe_is_deterministic() {
    let a = lmce(&["probe", "gamma", "--seed", "3"]);
    let b = lmce(&["probe", "gamma", "--seed", "3"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["all_within"], true);
}

#[test]
fn decompose_probe_has_small_residual() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("d.json");
    let o = lmce(&["probe", "decompose", "--grid", "257", "--seed", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    assert!(v["residual"].as_f64().unwrap() <= 1e-3, "{v}");
    assert!(v["min_det"].as_f64().unwrap() > 0.0);
}

#[test]
fn unknown_probe_kind_is_a_usage_error() {
    let o = lmce(&["probe", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("possible values"));
}
