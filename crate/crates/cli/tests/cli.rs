use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use paradjoint::{predict_linear, TimingProfile};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_paradjoint"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn small_burgers(dir: &Path, extra: &str) -> PathBuf {
    let body = format!(
        r#"{{"problem": {{"kind": "burgers", "nx": 8, "ny": 8, "diffusion": 1, "final_time": 0.5}},
            "algorithm": "hybrid", "workers": [1, 3], "repeats": 1{extra}}}"#
    );
    write_config(dir, "burgers.json", &body)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rd = csv::Reader::from_path(path).unwrap();
    let headers = rd.headers().unwrap().iter().map(String::from).collect();
    let rows = rd
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (headers, rows)
}

#[test]
fn missing_field_is_a_configuration_error_naming_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"problem": {"kind": "burgers", "nx": 8, "ny": 8, "final_time": 1}, "algorithm": "hybrid"}"#,
    );
    let out = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("diffusion"), "{err}");
    assert!(err.contains("field `problem`"), "{err}");
}

#[test]
fn wrong_type_reports_the_nested_path() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"problem": {"kind": "burgers", "nx": "eight", "diffusion": 1, "final_time": 1}, "algorithm": "hybrid"}"#,
    );
    let out = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("problem.nx"), "{}", stderr(&out));
}

#[test]
fn linear_algorithm_on_burgers_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"problem": {"kind": "burgers", "nx": 8, "ny": 8, "diffusion": 1, "final_time": 1}, "algorithm": "linear"}"#,
    );
    let out = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_exits_with_one() {
    let out = run(&["run", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn dry_run_prints_the_plan_without_writing() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = small_burgers(dir.path(), "");
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--output", out_dir.to_str().unwrap(), "--dry-run"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let plan: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(plan["state_dimension"], 128);
    assert_eq!(plan["config"]["algorithm"], "hybrid");
    assert!(!out_dir.exists());
}

#[test]
fn run_writes_results_and_repeats_deterministically() {
    let dir = TempDir::new().unwrap();
    let cfg = small_burgers(dir.path(), r#", "checkpoints": 2"#);
    let mut tables = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = run(&["run", "--config", cfg.to_str().unwrap(), "--output", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        for file in ["results.csv", "summary.json", "messages.jsonl", "events.csv"] {
            assert!(out_dir.join(file).exists(), "missing {file}");
        }
        tables.push(read_rows(&out_dir.join("results.csv")));
    }
    let (headers, rows) = &tables[0];
    assert_eq!(
        headers,
        &[
            "algorithm",
            "workers",
            "checkpoints",
            "repeats",
            "cost",
            "grad_norm",
            "iterations",
            "peak_resident_nodes",
            "mean_seconds",
            "min_seconds",
            "serial_seconds",
            "speedup",
            "lag_seconds",
            "rough_seconds"
        ]
    );
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][1], "3");
    // Everything before the timing columns is reproducible.
    let timing = headers.iter().position(|h| h == "mean_seconds").unwrap();
    for (a, b) in tables[0].1.iter().zip(&tables[1].1) {
        assert_eq!(a[..timing], b[..timing]);
    }
}

#[test]
fn workers_flag_overrides_the_list() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = small_burgers(dir.path(), "");
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--output", out_dir.to_str().unwrap(), "--workers", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (_, rows) = read_rows(&out_dir.join("results.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1], "2");
}

#[test]
fn nonconvergence_is_a_solver_failure() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "stiff.json",
        r#"{"problem": {"kind": "burgers", "nx": 8, "ny": 8, "diffusion": 1, "final_time": 0.5, "forcing": "sin_sin"},
            "algorithm": "nonlinear", "workers": 4, "repeats": 1, "eps": 1e-14, "max_iter": 2}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--output", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("solver failure"), "{}", stderr(&out));
}

fn write_profile(dir: &Path, p: &TimingProfile) -> PathBuf {
    let path = dir.join("profile.json");
    fs::write(&path, serde_json::to_string(p).unwrap()).unwrap();
    path
}

#[test]
fn predict_from_profile_matches_the_closed_form() {
    let dir = TempDir::new().unwrap();
    let profile = TimingProfile {
        tau_i: 1.0,
        tau_h: 0.1,
        tau_i_adj: 2.0,
        tau_h_adj: 0.2,
        tau_d_serial: 1.0,
    };
    let path = write_profile(dir.path(), &profile);
    let out = run(&[
        "predict",
        "--profile",
        path.to_str().unwrap(),
        "--algorithm",
        "linear",
        "--max-workers",
        "8",
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (headers, rows) = read_rows(&dir.path().join("predict.csv"));
    let speedup = headers.iter().position(|h| h == "speedup").unwrap();
    assert_eq!(rows.len(), 8);
    for (i, row) in rows.iter().enumerate() {
        let expect = predict_linear(&profile, i + 1).unwrap().speedup;
        let got: f64 = row[speedup].parse().unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect, "N={}: {got} vs {expect}", i + 1);
    }
}

#[test]
fn expensive_homogeneous_solves_are_flagged() {
    let dir = TempDir::new().unwrap();
    let path = write_profile(
        dir.path(),
        &TimingProfile {
            tau_i: 1.0,
            tau_h: 1.5,
            tau_i_adj: 1.0,
            tau_h_adj: 1.5,
            tau_d_serial: 1.0,
        },
    );
    let out = run(&["predict", "--profile", path.to_str().unwrap(), "--algorithm", "linear", "--max-workers", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let flagged = text.lines().filter(|l| l.contains("not beneficial")).count();
    assert_eq!(flagged, 4, "{text}");
}

#[test]
fn hybrid_prediction_prints_partitions() {
    let dir = TempDir::new().unwrap();
    let path = write_profile(
        dir.path(),
        &TimingProfile {
            tau_i: 1.0,
            tau_h: 0.1,
            tau_i_adj: 2.11,
            tau_h_adj: 0.2,
            tau_d_serial: 1.0,
        },
    );
    let out = run(&[
        "predict",
        "--profile",
        path.to_str().unwrap(),
        "--algorithm",
        "hybrid",
        "--max-workers",
        "3",
        "--final-time",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let partitions: Vec<&str> = text.lines().filter(|l| l.trim_start().starts_with("partition")).collect();
    assert_eq!(partitions.len(), 3, "{text}");
    let last: Vec<f64> = partitions[2].split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(last.len(), 4);
    assert_eq!(last[0], 0.0);
    assert_eq!(*last.last().unwrap(), 2.0);
    assert!(last.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn predict_needs_an_algorithm_with_a_bare_profile() {
    let dir = TempDir::new().unwrap();
    let path = write_profile(
        dir.path(),
        &TimingProfile {
            tau_i: 1.0,
            tau_h: 0.1,
            tau_i_adj: 1.0,
            tau_h_adj: 0.1,
            tau_d_serial: 1.0,
        },
    );
    let out = run(&["predict", "--profile", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_gradient_writes_error_tables() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = small_burgers(dir.path(), "");
    let out = run(&[
        "verify-gradient",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out_dir.to_str().unwrap(),
        "--fd-components",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (headers, rows) = read_rows(&out_dir.join("gradient_errors.csv"));
    let err = headers.iter().position(|h| h == "relative_error").unwrap();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        let e: f64 = row[err].parse().unwrap();
        assert!(e < 1e-2, "{row:?}");
    }
    let (headers, rows) = read_rows(&out_dir.join("finite_differences.csv"));
    assert_eq!(headers, ["component", "adjoint", "finite_difference", "relative_error"]);
    assert_eq!(rows.len(), 2);
}

#[test]
fn profile_writes_a_loadable_profile() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = small_burgers(dir.path(), "");
    let out = run(&["profile", "--config", cfg.to_str().unwrap(), "--output", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(out_dir.join("profile.json")).unwrap();
    let p: TimingProfile = serde_json::from_str(&text).unwrap();
    p.validate().unwrap();
    let out = run(&[
        "predict",
        "--profile",
        out_dir.join("profile.json").to_str().unwrap(),
        "--algorithm",
        "nonlinear",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}
