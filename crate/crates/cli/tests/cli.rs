use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn calderon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calderon"))
        .args(args)
        .env("CALDERON_THREADS", "2")
        .output()
        .unwrap()
}

fn config(experiment: &str, extra: Value) -> Value {
    let mut v = json!({
        "experiment": experiment,
        "n": 1,
        "s": 0.5,
        "geometry": {
            "omega": {"lo": [0.0], "hi": [1.0]},
            "w": {"lo": [1.5], "hi": [2.0]},
            "nodes_per_axis": 32
        },
        "seed": 4
    });
    if let (Some(obj), Some(more)) = (v.as_object_mut(), extra.as_object()) {
        for (k, x) in more {
            obj.insert(k.clone(), x.clone());
        }
    }
    v
}

fn write_config(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, v.to_string()).unwrap();
    p
}

fn run(dir: &Path, v: &Value, out: &str, extra: &[&str]) -> Output {
    let cfg = write_config(dir, v);
    let out = dir.join(out);
    let mut args = vec!["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    calderon(&args)
}

#[test]
fn list_names_all_experiments() {
    let out = calderon(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "oracle-crosscheck",
        "duality",
        "bridge-residual",
        "decay-slopes",
        "density",
        "tikhonov-sweep",
        "distinguishability",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn schema_is_json_and_lists_experiments() {
    let out = calderon(&["schema"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["properties"]["experiment"]["enum"].as_array().unwrap().len(), 7);
}

#[test]
fn out_of_range_order_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &config("duality", json!({"s": 1.2})), "o", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("ConfigError") && err.contains("s=1.2"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_experiment_is_an_experiment_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &config("levitation", json!({})), "o", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("ExperimentError"));
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config("decay-slopes", json!({})));
    let out = Command::new(env!("CARGO_BIN_EXE_calderon"))
        .args(["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
        .env("CALDERON_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("CALDERON_THREADS"));
}

#[test]
fn runs_are_byte_identical_for_the_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let v = config(
        "tikhonov-sweep",
        json!({"params": {"alphas": [1.0, 1e-2, 1e-4], "probes": 10, "noise": 0.01}}),
    );
    let a = run(dir.path(), &v, "a", &["--seed", "9"]);
    let b = run(dir.path(), &v, "b", &["--seed", "9"]);
    let c = run(dir.path(), &v, "c", &["--seed", "10"]);
    for o in [&a, &b, &c] {
        assert!(o.status.code().is_some_and(|c| c <= 1), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["tikhonov_sweep.csv", "closed_loop.csv", "misfit_vs_alpha.dat"] {
        let x = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let x = std::fs::read(dir.path().join("a/tikhonov_sweep.csv")).unwrap();
    let z = std::fs::read(dir.path().join("c/tikhonov_sweep.csv")).unwrap();
    assert_ne!(x, z);
    let summary: Value = serde_json::from_slice(&std::fs::read(dir.path().join("a/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 9);
}

#[test]
fn csv_files_have_headers_and_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &config("duality", json!({"params": {"refinement_levels": [16, 32]}})), "o", &[]);
    assert!(out.status.code().is_some_and(|c| c <= 1));
    let text = std::fs::read_to_string(dir.path().join("o/duality.csv")).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "N,J,trace_error,bulk_residual");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let mantissa = row[2].split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{}", row[2]);
    let plot = std::fs::read_to_string(dir.path().join("o/duality_bulk_residual.dat")).unwrap();
    assert!(plot.lines().skip(1).all(|l| l.split(' ').count() == 2));
}

#[test]
fn exit_code_reports_tolerances() {
    let dir = tempfile::tempdir().unwrap();
    let pass = run(dir.path(), &config("decay-slopes", json!({})), "pass", &[]);
    assert_eq!(pass.status.code(), Some(0), "{}", String::from_utf8_lossy(&pass.stdout));
    let summary: Value = serde_json::from_slice(&std::fs::read(dir.path().join("pass/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert!(summary["files"].as_array().unwrap().iter().any(|f| f == "decay.csv"));

    // truncating the vertical direction far too early spoils the trace
    let truncated = config(
        "oracle-crosscheck",
        json!({"vertical": {"levels": 16, "height": 0.05}, "params": {"refinement_levels": [16, 32]}}),
    );
    let fail = run(dir.path(), &truncated, "fail", &[]);
    assert_eq!(fail.status.code(), Some(1), "{}", String::from_utf8_lossy(&fail.stdout));
    let summary: Value = serde_json::from_slice(&std::fs::read(dir.path().join("fail/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], false);
}
