//! End-to-end CLI behavior: printed values, exit codes, artifact files.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_oodrisk")
}

fn repo_path(rel: &str) -> PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

#[test]
fn distance_between_point_masses() {
    let a = repo_path("configs/examples/point_a.json");
    let b = repo_path("configs/examples/point_b.json");
    for p in ["2", "inf"] {
        let out = run(&[
            "distance",
            "--p",
            p,
            "--a",
            a.to_str().unwrap(),
            "--b",
            b.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1.0");
    }
    let out = run(&[
        "distance",
        "--p",
        "tv",
        "--a",
        a.to_str().unwrap(),
        "--b",
        b.to_str().unwrap(),
    ]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1.0");
}

#[test]
fn bounds_winf_reference_value() {
    let out = run(&[
        "bounds", "winf", "--eps", "0.1", "--m", "1", "--d0", "2", "--diam", "2", "--r", "2",
        "--n", "100", "--theta", "0.5",
    ]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0.4532");
}

#[test]
fn bounds_pretrain_reference_values() {
    let out = run(&["bounds", "pretrain", "--eps-pre", "0.2", "--m", "1", "--tv", "0.1"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0.4000");

    let out = run(&[
        "bounds", "pretrain", "--eps-pre", "0.2", "--m", "1", "--tv", "0.125", "--p", "2",
        "--diam", "2", "--r", "1",
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("required_pretrain_radius 1.41421"), "got: {text}");
}

#[test]
fn bounds_excess_runs_and_writes_report() {
    let dir = std::env::temp_dir().join(format!("oodrisk-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let report = dir.join("excess.json");
    let out = run(&[
        "bounds", "excess", "--eps0", "0.05", "--theta", "0.2", "--t", "128", "--n", "200",
        "--d0", "2", "--diam", "2", "--r", "1", "--p", "inf", "--m", "1", "--g", "5", "--l11",
        "1", "--l12", "1", "--l21", "1", "--l22", "1", "--mu-w", "1", "--mu-x", "1", "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["formula"], "excess_risk");
    assert!(parsed["components"]["optimization"].as_f64().unwrap() > 0.0);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn bounds_vacuous_prints_vacuous() {
    let out = run(&[
        "bounds", "winf", "--eps", "0.1", "--m", "1", "--d0", "3000", "--diam", "2", "--r",
        "0.1", "--n", "100", "--theta", "0.5",
    ]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "vacuous");
}

#[test]
fn worst_case_and_certify_on_quadratic() {
    let cfg = repo_path("configs/train_demo.json");
    let dist = repo_path("configs/examples/point_a.json");
    // Single atom at the origin, w = (1, 0), r = 0.5: the sphere worst case
    // is 0.875 and the measured robustness is 0.625.
    let out = run(&[
        "worst-case",
        "--config",
        cfg.to_str().unwrap(),
        "--dist",
        dist.to_str().unwrap(),
        "--w",
        "1,0",
        "--p",
        "2",
        "--r",
        "0.5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let value: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((value - 0.875).abs() < 1e-6);

    let out = run(&[
        "certify",
        "--config",
        cfg.to_str().unwrap(),
        "--dist",
        dist.to_str().unwrap(),
        "--w",
        "1,0",
        "--p",
        "2",
        "--r",
        "0.5",
    ]);
    assert!(out.status.success());
    let value: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((value - 0.625).abs() < 1e-9);
}

#[test]
fn unknown_subcommand_exits_one_with_usage() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.to_lowercase().contains("usage"), "stderr: {err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn invalid_inputs_exit_one() {
    // Missing config file.
    let out = run(&["train", "--config", "/nonexistent/config.json", "--out", "/tmp/x.csv"]);
    assert_eq!(out.status.code(), Some(1));

    // Config whose experiment id does not match the subcommand.
    let cfg = repo_path("configs/train_demo.json");
    let out = run(&["converge", "--config", cfg.to_str().unwrap(), "--out", "/tmp/x.csv"]);
    assert_eq!(out.status.code(), Some(1));

    // Invalid bound inputs (theta outside (0, 1)).
    let out = run(&[
        "bounds", "winf", "--eps", "0.1", "--m", "1", "--d0", "2", "--diam", "2", "--r", "2",
        "--n", "100", "--theta", "1.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
}

#[test]
fn train_writes_trace_with_frozen_header() {
    let dir = std::env::temp_dir().join(format!("oodrisk-trace-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let trace = dir.join("trace.csv");
    let cfg = repo_path("configs/train_demo.json");
    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,i_t,objective_stoch,objective_full,grad_norm");
    assert_eq!(lines.count(), 200);
    let _ = std::fs::remove_dir_all(&dir);
}
