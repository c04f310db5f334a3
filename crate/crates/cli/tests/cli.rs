//! End-to-end runs of the `immpc` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn immpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_immpc")).args(args).output().unwrap()
}

fn desk() -> String {
    configs().join("desk.json").display().to_string()
}

#[test]
fn missing_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = immpc(&["run", "--config", "/nonexistent.json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_planner_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = immpc(&["run", "--config", &desk(), "--planner", "oracle", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_horizon_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.csv");
    let o = immpc(&["windows", "--config", &desk(), "--horizon", "0", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut metrics = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = immpc(&[
            "run", "--config", &desk(), "--planner", "imm", "--trials", "5", "--seed", "7", "--horizon", "6",
            "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        metrics.push(std::fs::read(out.join("metrics.csv")).unwrap());
    }
    assert_eq!(metrics[0], metrics[1]);
    assert_eq!(String::from_utf8_lossy(&metrics[0]).lines().count(), 6);
}

#[test]
fn bipartite_solves_once_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = immpc(&[
        "run", "--config", &desk(), "--planner", "bipartite", "--trials", "2", "--horizon", "6", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let timing = std::fs::read_to_string(out.join("timing.csv")).unwrap();
    let mut lines = timing.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "solver_calls").unwrap();
    for line in lines {
        assert_eq!(line.split(',').nth(col), Some("1"), "{line}");
    }
}

#[test]
fn compare_writes_table_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = immpc(&[
        "compare", "--config", &desk(), "--trials", "2", "--horizon", "4", "--trace", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("overall_pct"));
    let cmp = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert!(cmp.starts_with("metric,bipartite,bipartite_ci95,binary,binary_ci95,imm,imm_ci95\n"));
    for planner in ["bipartite", "binary", "imm"] {
        for trial in 0..2 {
            assert!(out.join("trace").join(format!("{planner}_trial{trial:04}.jsonl")).exists());
        }
    }
    assert!(out.join("manifest.json").exists());
}

#[test]
fn occupied_output_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("keep.txt"), "x").unwrap();
    let base = ["run", "--config", &desk(), "--horizon", "2", "--planner", "binary", "--out", dir.path().to_str().unwrap()];
    assert_eq!(immpc(&base).status.code(), Some(2));
    let mut forced = base.to_vec();
    forced.push("--force");
    assert!(immpc(&forced).status.success());
}
