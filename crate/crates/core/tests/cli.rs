//! Exit codes and outputs of the command-line tool.

use std::path::Path;
use std::process::{Command, Output};

fn nicrep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nicrep")).args(args).output().expect("binary runs")
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).to_string_lossy().into_owned()
}

#[test]
fn run_writes_report_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let hist = dir.path().join("h.jsonl");
    let o = nicrep(&[
        "run", "--replicas", "3", "--keys", "100", "--ops", "500", "--format", "csv",
        "--out", out.to_str().unwrap(), "--history", hist.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    // header, three replicas, aggregate
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().last().unwrap().starts_with("all,"));

    // the recorded history passes the standalone checker
    let o = nicrep(&["check", hist.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn json_report_parses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let o = nicrep(&["run", "--replicas", "2", "--ops", "300", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["replicas"], 2);
    assert_eq!(v["per_replica"].as_array().unwrap().len(), 2);
}

#[test]
fn bad_config_is_a_usage_error() {
    assert_eq!(nicrep(&["run", "--replicas", "0"]).status.code(), Some(2));
    assert_eq!(nicrep(&["run", "--write-ratio", "1.5"]).status.code(), Some(2));
    assert_eq!(nicrep(&["run", "--batch-size", "0"]).status.code(), Some(2));
    assert_eq!(nicrep(&["run", "--crash", "9@100", "--replicas", "3"]).status.code(), Some(2));
    assert_eq!(nicrep(&["run", "--overlay", "ring"]).status.code(), Some(2));
    assert_eq!(nicrep(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn check_exit_codes() {
    assert_eq!(nicrep(&["check", &fixture("ok_concurrent.jsonl")]).status.code(), Some(0));
    for f in ["violation_stale_read.jsonl", "violation_session_stale.jsonl", "violation_lost_write.jsonl"] {
        assert_eq!(nicrep(&["check", &fixture(f)]).status.code(), Some(3), "{f}");
    }
    let o = nicrep(&["check", "--json", &fixture("violation_phantom_value.jsonl")]);
    assert_eq!(o.status.code(), Some(3));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(!v["failures"].as_array().unwrap().is_empty());

    // a key with more ops than the cap cannot be decided
    assert_eq!(nicrep(&["check", "--key-cap", "2", &fixture("ok_concurrent.jsonl")]).status.code(), Some(4));
    assert_eq!(nicrep(&["check", "/nonexistent/history.jsonl"]).status.code(), Some(1));
}

#[test]
fn sweep_reports_every_seed() {
    let o = nicrep(&["sweep", "--seeds", "1..4", "--replicas", "3", "--keys", "8", "--ops", "400"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("sweep: 4/4 seeds passed"), "{stdout}");
    assert_eq!(nicrep(&["sweep", "--seeds", "5..1"]).status.code(), Some(2));
}
