//! End-to-end checks of the command-line interface: exit codes, artifacts,
//! determinism.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graphexp"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("graphexp_cli_{name}"));
    let _ = std::fs::remove_dir_all(&p);
    std::fs::create_dir_all(&p).unwrap();
    p
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

#[test]
fn expand_writes_coefficients_and_manifest() {
    let dir = tmp_dir("expand");
    let status = bin().args(["expand", "--out", dir.to_str().unwrap()]).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let json = read(&dir, "coefficients.json");
    assert!(json.contains("\"i\": 2"));
    // c2 at the origin for the unit sphere cap is 1/2
    assert!(json.contains("\"origin\": 5.0000000000000000e-1"), "{json}");
    let manifest = read(&dir, "manifest.txt");
    assert!(manifest.contains("command = expand"));
    assert!(manifest.contains("phi = sphere_cap:R=1"));
}

#[test]
fn artifacts_are_deterministic() {
    let d1 = tmp_dir("det1");
    let d2 = tmp_dir("det2");
    for d in [&d1, &d2] {
        let status = bin()
            .args(["solve", "--out", d.to_str().unwrap(), "--override", "mesh.M=16"])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    assert_eq!(read(&d1, "solution.csv"), read(&d2, "solution.csv"));
}

#[test]
fn usage_errors_exit_1() {
    let dir = tmp_dir("usage");
    // unknown subcommand
    let status = bin().args(["frobnicate"]).status().unwrap();
    assert_eq!(status.code(), Some(1));
    // missing config file
    let status = bin()
        .args(["expand", "--out", dir.to_str().unwrap(), "--config", "/nonexistent.ini"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    // fit without input
    let status = bin().args(["fit", "--out", dir.to_str().unwrap()]).status().unwrap();
    assert_eq!(status.code(), Some(1));
    // help is not an error
    let status = bin().args(["--help"]).status().unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn validation_errors_exit_3() {
    let dir = tmp_dir("validation");
    // n = 5 rejected for pde pipelines
    let status = bin()
        .args(["solve", "--out", dir.to_str().unwrap(), "--override", "problem.n=5"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    // unknown config key
    let cfg = dir.join("bad.ini");
    std::fs::write(&cfg, "[mesh]\nspacing = 0.1\n").unwrap();
    let status = bin()
        .args(["expand", "--out", dir.to_str().unwrap(), "--config", cfg.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn numerical_failure_exits_2() {
    let dir = tmp_dir("numerical");
    let status = bin()
        .args(["solve", "--out", dir.to_str().unwrap(), "--override", "solver.max_iters=1"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn fit_pipeline_reads_csv() {
    let dir = tmp_dir("fit");
    let input = dir.join("samples.csv");
    let mut body = String::from("t,value\n");
    for i in 0..20 {
        let t = 1e-4 * (1e3f64).powf(i as f64 / 19.0);
        body.push_str(&format!("{t},{}\n", 3.0 * t.powi(4)));
    }
    std::fs::write(&input, body).unwrap();
    let status = bin()
        .args([
            "fit",
            "--out",
            dir.to_str().unwrap(),
            "--override",
            &format!("analysis.input={}", input.display()),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report = read(&dir, "fit_report.csv");
    let row = report.lines().nth(1).unwrap();
    let gamma: f64 = row.split(',').next().unwrap().parse().unwrap();
    assert!((gamma - 4.0).abs() < 1e-6, "{report}");
}

#[test]
fn verify_pipeline_passes_on_defaults() {
    let dir = tmp_dir("verify");
    let status = bin()
        .args(["verify", "--out", dir.to_str().unwrap(), "--override", "mesh.M=24"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report = read(&dir, "verify_report.csv");
    assert!(report.lines().skip(1).all(|l| l.ends_with("true")), "{report}");
    let table = read(&dir, "fit_report.csv");
    assert!(table.starts_with("tau,m,gamma,j,C,pass"));
    assert_eq!(table.lines().count(), 7, "{table}");
}

#[test]
fn solve_with_config_file() {
    let dir = tmp_dir("cfgfile");
    let cfg = dir.join("exp.ini");
    std::fs::write(
        &cfg,
        "[problem]\nn = 2\nphi = sphere_cap:R=1\n[mesh]\nny = 9\nM = 12\n",
    )
    .unwrap();
    let status = bin()
        .args(["solve", "--out", dir.to_str().unwrap(), "--config", cfg.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let sol = read(&dir, "solution.csv");
    assert!(sol.starts_with("y1,t,u"));
    // 9 tangential nodes × 13 levels + header
    assert_eq!(sol.lines().count(), 9 * 13 + 1);
}
