use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn noise_lab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noise-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("NOISE_LAB_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn verify_defaults_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = noise_lab(&["verify"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = read_json(&dir.path().join("verify.json"));
    let checks = v["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    for c in checks {
        for k in ["check", "lhs", "rhs", "margin", "holds", "notes"] {
            assert!(c.get(k).is_some(), "missing {k}");
        }
    }
}

#[test]
fn config_errors_exit_2_and_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = noise_lab(&["sweep", "--epsilon", "0"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("sweep.epsilon"), "{}", stderr(&o));

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"optimizer": {"algo": "sgd", "eta": 0.1, "batch_size": 0}}"#).unwrap();
    let o = noise_lab(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("optimizer.batch_size"), "{}", stderr(&o));

    std::fs::write(
        &cfg,
        r#"{"problem": {"kind": "noisy-quadratic", "dim": 2, "params": {"curvature": [1, 1], "tilt": 3}}}"#,
    )
    .unwrap();
    let o = noise_lab(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("problem.params"), "{}", stderr(&o));

    std::fs::write(&cfg, "{ not json").unwrap();
    let o = noise_lab(&["verify", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_lipschitz_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"problem": {"kind": "finite-sum-least-squares", "dim": 1,
            "params": {"features": [[1.0], [2.0]], "targets": [1.0, 2.0]}}}"#,
    )
    .unwrap();
    let o = noise_lab(&["smooth", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("smooth.lipschitz"));
}

#[test]
fn bad_seed_variable_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_noise-lab"))
        .args(["table1", "--out"])
        .arg(dir.path())
        .env("NOISE_LAB_SEED", "minus one")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("NOISE_LAB_SEED"));
}

#[test]
fn seed_variable_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_noise-lab"))
        .args(["sharpness", "--method", "random-search", "--out"])
        .arg(dir.path())
        .env("NOISE_LAB_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = read_json(&dir.path().join("sharpness.json"));
    assert_eq!(v["config"]["master_seed"], 42);
}

#[test]
fn sweep_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = noise_lab(&["sweep", "--batch-grid", "16,64", "--seeds", "2"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("b,seed,steps,sfo,exit_reason"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let b: u64 = r[0].parse().unwrap();
        let steps: u64 = r[2].parse().unwrap();
        assert_eq!(r[3].parse::<u64>().unwrap(), b * steps);
        assert!(["converged", "step-cap", "diverged"].contains(&r[4]));
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("b,mean_steps,mean_sfo,converged_fraction,analytic_steps,analytic_sfo\n"));
    let crit = read_json(&dir.path().join("critical.json"));
    for k in [
        "empirical_b_star",
        "analytic_b_star",
        "variance_upper_bound",
        "params",
        "config",
    ] {
        assert!(crit.get(k).is_some(), "missing {k}");
    }
}

#[test]
fn embedded_config_reproduces_the_report() {
    let a = tempfile::tempdir().unwrap();
    let o = noise_lab(&["noise", "--window", "2000"], a.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let first = read_json(&a.path().join("noise_summary.json"));
    let cfg = a.path().join("again.json");
    std::fs::write(&cfg, serde_json::to_string(&first["config"]).unwrap()).unwrap();
    // same output_dir, since it is part of the config
    let o = noise_lab(&["noise", "--config", cfg.to_str().unwrap()], a.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let second = read_json(&a.path().join("noise_summary.json"));
    assert_eq!(first, second);
}

#[test]
fn smooth_points_file_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("pts.json");
    std::fs::write(&pts, "[[0, 0, 0], [1, 2, -1]]").unwrap();
    let args = [
        "smooth",
        "--delta",
        "0.3",
        "--dist",
        "gaussian-scaled",
        "--samples",
        "20000",
        "--points-file",
        pts.to_str().unwrap(),
    ];
    let o = noise_lab(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let first = std::fs::read(dir.path().join("smooth.json")).unwrap();
    let v: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    for k in ["point", "f", "f_hat", "std_error", "gap", "bound", "pass"] {
        assert!(v["rows"][0].get(k).is_some());
    }
    let o = noise_lab(&[&args[..], &["--jobs", "3"]].concat(), dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(first, std::fs::read(dir.path().join("smooth.json")).unwrap());

    std::fs::write(&pts, "[[0, 0]]").unwrap();
    let o = noise_lab(&args, dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("smooth.points[0]"));
}

#[test]
fn run_writes_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let o = noise_lab(&["run", "--steps", "25"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("run.jsonl")).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 25);
    assert_eq!(lines[3]["t"], 3);
    assert!(lines[0]["omega_sq"].as_f64().is_some());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("wrote ")).count(), 3);
}

#[test]
fn table1_prints_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let o = noise_lab(&["table1"], dir.path());
    assert_eq!(code(&o), 0);
    let fixture = include_str!("../fixtures/table1.txt");
    assert!(String::from_utf8_lossy(&o.stdout).starts_with(fixture));
    assert_eq!(std::fs::read_to_string(dir.path().join("table1.txt")).unwrap(), fixture);
}
