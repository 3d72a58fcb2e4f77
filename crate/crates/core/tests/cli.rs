use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cloudpay::harness::SCENARIOS;

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.toml")
}

fn cloudpay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cloudpay"))
        .args(args)
        .output()
        .unwrap()
}

fn run(scenario: &str, seed: &str, out: &Path) -> Output {
    let config = demo_config();
    cloudpay(&[
        "run",
        "--scenario",
        scenario,
        "--config",
        config.to_str().unwrap(),
        "--seed",
        seed,
        "--out",
        out.to_str().unwrap(),
    ])
}

fn verify(transcript: &Path) -> Output {
    let config = demo_config();
    cloudpay(&[
        "verify",
        "--transcript",
        transcript.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ])
}

#[test]
fn run_writes_transcript_and_final_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("happy-path", "1", dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let state: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("final_state.json")).unwrap()).unwrap();
    assert_eq!(state["scenario"], "happy-path");
    assert!(dir.path().join("transcript.jsonl").is_file());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        assert_eq!(run("device-swap", "42", dir.path()).status.code(), Some(0));
    }
    for file in ["transcript.jsonl", "final_state.json"] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn every_scenario_runs_and_verifies() {
    for s in SCENARIOS {
        let dir = tempfile::tempdir().unwrap();
        let out = run(s.name, "5", dir.path());
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}: {}",
            s.name,
            String::from_utf8_lossy(&out.stdout)
        );
        let out = verify(&dir.path().join("transcript.jsonl"));
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}: {}",
            s.name,
            String::from_utf8_lossy(&out.stdout)
        );
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok: "));
    }
}

#[test]
fn verify_rejects_an_edited_transcript() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("happy-path", "1", dir.path()).status.code(), Some(0));
    let path = dir.path().join("transcript.jsonl");
    let text = fs::read_to_string(&path)
        .unwrap()
        .replace("\"amount\":605", "\"amount\":6");
    fs::write(&path, text).unwrap();
    let out = verify(&path);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("FAIL record "));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("no-such-scenario", "1", dir.path()).status.code(), Some(2));

    let missing = dir.path().join("missing.toml");
    let out = cloudpay(&[
        "run",
        "--scenario",
        "happy-path",
        "--config",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let garbled = dir.path().join("garbled.toml");
    fs::write(&garbled, "[network]\nplmn = 7\n").unwrap();
    let out = cloudpay(&[
        "verify",
        "--transcript",
        garbled.to_str().unwrap(),
        "--config",
        garbled.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(cloudpay(&["run"]).status.code(), Some(2));
    assert_eq!(verify(&dir.path().join("absent.jsonl")).status.code(), Some(2));
}

#[test]
fn list_scenarios_is_stable() {
    let first = cloudpay(&["list-scenarios"]);
    assert_eq!(first.status.code(), Some(0));
    let names: Vec<String> = String::from_utf8(first.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().next().unwrap().to_owned())
        .collect();
    assert!(names.len() >= 7);
    assert_eq!(names, SCENARIOS.iter().map(|s| s.name).collect::<Vec<_>>());
    assert_eq!(cloudpay(&["list-scenarios"]).stdout, first.stdout);
}
