//! End-to-end checks of the `mll` binary: exit codes, report artifacts,
//! byte-stable outputs, recipe listing.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn mll() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mll"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mll_cli_{tag}_{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

const SMALL_SAMPLE: &str = r#"{
    "experiment": "sample",
    "seed": 11,
    "map": {"kind": "quadratic", "dim": 1},
    "potential": {"kind": "quadratic_gaussian", "c": 1.0},
    "h": 0.1, "iterations": 50, "chains": 2000,
    "init": {"kind": "gaussian", "mean": [0.0], "std": 0.1}
}"#;

#[test]
fn run_writes_report_and_exits_zero() {
    let dir = temp_dir("ok");
    let cfg = dir.join("config.json");
    fs::write(&cfg, SMALL_SAMPLE).unwrap();
    let out = dir.join("out");
    let status = mll().args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("report.json").exists());
    assert!(out.join("sample_moments.csv").exists());
    assert!(out.join("timing.txt").exists());
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn same_config_and_seed_give_identical_report_bytes() {
    let dir = temp_dir("det");
    let cfg = dir.join("config.json");
    fs::write(&cfg, SMALL_SAMPLE).unwrap();
    let out1 = dir.join("a");
    let out2 = dir.join("b");
    for out in [&out1, &out2] {
        let status = mll()
            .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    let a = fs::read(out1.join("report.json")).unwrap();
    let b = fs::read(out2.join("report.json")).unwrap();
    assert_eq!(a, b, "report bytes must be identical for a fixed config and seed");
    let ca = fs::read(out1.join("sample_moments.csv")).unwrap();
    let cb = fs::read(out2.join("sample_moments.csv")).unwrap();
    assert_eq!(ca, cb);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn seed_override_changes_the_report() {
    let dir = temp_dir("seed");
    let cfg = dir.join("config.json");
    fs::write(&cfg, SMALL_SAMPLE).unwrap();
    let out1 = dir.join("a");
    let out2 = dir.join("b");
    mll().args(["run", cfg.to_str().unwrap(), "--out", out1.to_str().unwrap()])
        .status()
        .unwrap();
    mll().args(["run", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap(), "--seed", "999"])
        .status()
        .unwrap();
    let a = fs::read(out1.join("sample_moments.csv")).unwrap();
    let b = fs::read(out2.join("sample_moments.csv")).unwrap();
    assert_ne!(a, b);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn tolerance_failure_exits_two() {
    // An impossible oracle: the chain's distance to the exact target cannot
    // be 10, so the check fails while the run itself succeeds.
    let dir = temp_dir("tol");
    let cfg = dir.join("config.json");
    fs::write(
        &cfg,
        r#"{
            "experiment": "sample",
            "seed": 11,
            "map": {"kind": "quadratic", "dim": 1},
            "potential": {"kind": "quadratic_gaussian", "c": 1.0},
            "h": 0.1, "iterations": 50, "chains": 2000,
            "init": {"kind": "gaussian", "mean": [0.0], "std": 0.1},
            "expected_bias": 10.0, "bias_tolerance_frac": 0.0001
        }"#,
    )
    .unwrap();
    let out = dir.join("out");
    let status = mll().args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    // The report is still written, with the failing flag recorded.
    let report = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"passed\": false"));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn invalid_config_exits_one() {
    let dir = temp_dir("bad");
    let cfg = dir.join("config.json");
    fs::write(&cfg, r#"{"experiment": "sample", "seed": 1}"#).unwrap();
    let status = mll().args(["run", cfg.to_str().unwrap()]).status().unwrap();
    assert_eq!(status.code(), Some(1));
    let status = mll().args(["run", "no_such_recipe_or_file"]).status().unwrap();
    assert_eq!(status.code(), Some(1));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn recipes_are_listed() {
    let out = mll().arg("recipes").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.len() >= 8, "expected at least 8 recipes:\n{text}");
    assert!(text.contains("bias_scan_orthant"));
    assert!(text.contains("msc_2d_epsilon"));
}

#[test]
fn schema_prints_field_documentation() {
    let out = mll().arg("schema").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("violation_policy"));
    assert!(text.contains("polytope_log_barrier"));
}

#[test]
fn bundled_recipe_runs_by_name() {
    let dir = temp_dir("recipe");
    let status = mll()
        .args(["run", "constants_orthant", "--out", dir.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(dir.join("report.json").exists());
    fs::remove_dir_all(&dir).ok();
}
