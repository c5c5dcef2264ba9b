use std::path::PathBuf;
use std::process::{Command, Output};

use edgesplit_harness::report::CSV_HEADER;

fn edgesplit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgesplit"))
        .args(args)
        .env("EDGESPLIT_WORKER", env!("CARGO_BIN_EXE_edgesplit-worker"))
        .output()
        .unwrap()
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_prints_csv() {
    let out = edgesplit(&["run", &fixture("three-boards.toml"), "--time-scale", "0"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some(CSV_HEADER.join(",").as_str()));
    assert_eq!(text.lines().count(), 5);
    assert!(String::from_utf8_lossy(&out.stderr).contains("proportional"));
}

#[test]
fn run_writes_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    let out = edgesplit(&["run", &fixture("three-boards.toml"), "--time-scale", "0", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(&path).unwrap();
    assert!(csv.starts_with(&CSV_HEADER.join(",")));
    assert!(stdout(&out).contains("uniform_apx"));
}

#[test]
fn modes_agree_from_the_command_line() {
    let run = |mode: &str| stdout(&edgesplit(&["run", &fixture("three-boards.toml"), "--time-scale", "0", "--mode", mode]));
    let inproc = run("inproc");
    assert_eq!(inproc, run("sockets"));
    assert_eq!(inproc, run("processes"));
}

#[test]
fn missing_or_invalid_scenario_is_a_setup_error() {
    assert_eq!(edgesplit(&["run", "/nonexistent.toml"]).status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nseed = 1\n").unwrap();
    assert_eq!(edgesplit(&["run", bad.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(edgesplit(&["fsm-trace", bad.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn bad_arguments_are_usage_errors() {
    assert_eq!(edgesplit(&["run", &fixture("three-boards.toml"), "--mode", "carrier-pigeon"]).status.code(), Some(2));
    assert_eq!(edgesplit(&["oracle-check", "--nodes", "9"]).status.code(), Some(2));
    assert_eq!(edgesplit(&[]).status.code(), Some(2));
}

#[test]
fn oracle_check_agrees() {
    let out = edgesplit(&["oracle-check", "--cases", "50", "--nodes", "3", "--levels", "4", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("50/50 cases agree"));
}

#[test]
fn fsm_trace_prints_transitions() {
    let out = edgesplit(&["fsm-trace", &fixture("availability.toml"), "--strategy", "proportional"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.lines().all(|l| l.starts_with("[proportional] ")));
    assert!(text.contains("--NodeDisconnected"), "{text}");
    assert!(text.contains("--BroadcastDone--> Inference"));
}
