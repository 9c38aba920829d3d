use std::path::Path;
use std::process::{Command, Output};

fn perfwall(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perfwall"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn check_passes_and_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = perfwall(&["check", "--out", "o", "--seed", "3"], tmp.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest = std::fs::read_to_string(tmp.path().join("o/manifest.txt")).unwrap();
    assert!(manifest.contains("command = check"));
    for line in manifest.lines().filter(|l| l.ends_with(".csv")) {
        assert!(tmp.path().join(line).exists(), "{line}");
    }
}

#[test]
fn validation_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.cfg", "geometry.eps_list = 0.3\n");
    assert_eq!(
        perfwall(&["info", "--config", &bad], tmp.path())
            .status
            .code(),
        Some(1)
    );
    let unknown = write(tmp.path(), "unknown.cfg", "geometry.zeta = 1\n");
    let out = perfwall(&["homogenize", "--config", &unknown], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown.cfg:1"));
    assert_eq!(
        perfwall(&["info", "--config", "missing.cfg"], tmp.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn singular_solve_exits_2() {
    // omega = 0 with a pure Neumann problem has constants in the kernel
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "zero.cfg",
        "geometry.omega = 0.000000001\nsource.kind = constant\n",
    );
    let out = perfwall(
        &["solve-effective", "--config", &cfg, "--out", "o"],
        tmp.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn failed_gate_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "coarse.cfg",
        "study.eps_list = 0.25\ncheck.levels = 0.5, 0.25\n",
    );
    let out = perfwall(&["homogenize", "--config", &cfg, "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(
        perfwall(&["check", "--config", &cfg, "--out", "o"], tmp.path())
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn homogenize_writes_the_stable_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "h.cfg",
        "study.eps_list = 0.25, 0.125\noutput.profiles = true\noutput.dir = results\n",
    );
    let out = perfwall(
        &["homogenize", "--config", &cfg, "--threads", "2"],
        tmp.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(tmp.path().join("results/homogenization.csv")).unwrap();
    let golden = include_str!("golden/homogenization_header.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], golden.trim_end());
    assert_eq!(lines.len(), 3);
    assert!(lines[1].split(',').nth(7).is_some_and(|r| !r.is_empty()));
    assert_eq!(lines[2].split(',').nth(7), Some(""));
    let v = std::fs::read_to_string(tmp.path().join("results/profiles/row0_v.csv")).unwrap();
    assert!(v.starts_with("x1,value\n"));
}

#[test]
fn sweep_and_single_solves() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.cfg", "geometry.eps = 0.25\n");
    for cmd in ["sweep", "solve-eps", "solve-effective", "info"] {
        let out = perfwall(&[cmd, "--config", &cfg, "--out", cmd], tmp.path());
        assert_eq!(
            out.status.code(),
            Some(0),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let summary = std::fs::read_to_string(tmp.path().join("sweep/resonance_summary.csv")).unwrap();
    assert!(summary.contains("predicted_omega,1\n"));
    assert!(tmp.path().join("solve-eps/j_eps.csv").exists());
    assert!(tmp.path().join("solve-effective/w.csv").exists());
}
