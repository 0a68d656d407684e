//! Black-box tests of the `crossing` binary: exit codes, trace files on disk,
//! and the run/verify/summarize round trip.

use std::path::Path;
use std::process::{Command, Output};

fn crossing(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossing"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_verify_summarize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("clean.jsonl");
    let trace = trace.to_str().unwrap();

    let run = crossing(&[
        "run", "--preset", "cross8", "--horizon", "200", "--p", "0", "--trace", trace,
    ]);
    assert_eq!(run.status.code(), Some(0), "stderr: {}", stderr(&run));
    assert!(stdout(&run).contains("seed 0:"));
    assert!(Path::new(trace).exists());

    let verify = crossing(&[
        "verify", trace, "--preset", "cross8", "--horizon", "200", "--p", "0",
    ]);
    assert_eq!(verify.status.code(), Some(0), "stderr: {}", stderr(&verify));
    assert!(stdout(&verify).contains("replay: ok"));

    let summary = crossing(&["summarize", trace, "--json"]);
    assert_eq!(summary.status.code(), Some(0), "stderr: {}", stderr(&summary));
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&summary)).unwrap();
    assert_eq!(parsed["slots"], 200);
    assert!(parsed["throughput"].as_f64().unwrap() > 0.0);
}

#[test]
fn monitor_violation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("forced.jsonl");
    let out = crossing(&[
        "run", "--preset", "cross8-adversarial", "--trace", trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "stdout: {}", stdout(&out));
    assert!(stderr(&out).contains("violation"));
}

#[test]
fn tampered_trace_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("clean.jsonl");
    let trace = trace.to_str().unwrap();
    let run = crossing(&[
        "run", "--preset", "cross8", "--horizon", "200", "--p", "0", "--trace", trace,
    ]);
    assert_eq!(run.status.code(), Some(0));

    let raw = std::fs::read_to_string(trace).unwrap();
    let mut lines: Vec<serde_json::Value> = raw
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let target = lines
        .iter_mut()
        .find(|l| l["slot"].as_u64().unwrap_or(0) > 50 && l["x"].is_number())
        .expect("a robot line after slot 50");
    target["x"] = (target["x"].as_f64().unwrap() + 2.0).into();
    let tampered: String = lines
        .iter()
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(trace, tampered).unwrap();

    let verify = crossing(&[
        "verify", trace, "--preset", "cross8", "--horizon", "200", "--p", "0",
    ]);
    assert_eq!(verify.status.code(), Some(1), "stdout: {}", stdout(&verify));
    assert!(!stdout(&verify).contains("replay: ok"));
    assert!(stderr(&verify).contains("failed verification"));
}

#[test]
fn bad_inputs_exit_two() {
    let unknown = crossing(&["run", "--preset", "nonesuch"]);
    assert_eq!(unknown.status.code(), Some(2));

    let bad_rate = crossing(&["run", "--preset", "cross8", "--arrival-rate", "1.5"]);
    assert_eq!(bad_rate.status.code(), Some(2));
    assert!(stderr(&bad_rate).contains("arrival"));

    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let trace = trace.to_str().unwrap();
    let run = crossing(&[
        "run", "--preset", "cross8", "--horizon", "120", "--p", "0", "--trace", trace,
    ]);
    assert_eq!(run.status.code(), Some(0));
    let wrong_seed = crossing(&[
        "verify", trace, "--preset", "cross8", "--horizon", "120", "--p", "0", "--seed", "99",
    ]);
    assert_eq!(wrong_seed.status.code(), Some(2), "stdout: {}", stdout(&wrong_seed));
}

#[test]
fn batch_writes_one_trace_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("batch.jsonl");
    let out = crossing(&[
        "run", "--preset", "cross8", "--horizon", "120", "--p", "0", "--batch", "2",
        "--trace", trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("seed 0:") && text.contains("seed 1:"));
    assert!(dir.path().join("batch.seed0.jsonl").exists());
    assert!(dir.path().join("batch.seed1.jsonl").exists());
}
