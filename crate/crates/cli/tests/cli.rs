use std::path::Path;
use std::process::{Command, Output};

fn lgw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lgw")).args(args).output().unwrap()
}

fn synth(dir: &Path) -> String {
    let data = dir.join("d.jsonl").to_string_lossy().into_owned();
    let out = lgw(&["synth", "--seed", "1", "--factors", "2", "--values", "2", "--dim", "4", "--samples", "200", "--layout", "clusters", "--out", &data]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    data
}

#[test]
fn help_lists_every_subcommand() {
    let out = lgw(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["synth", "metrics", "traverse", "interpolate", "arith", "tree", "guided", "train-vae", "project"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let report = dir.path().join("metrics.json");
    let out = lgw(&["metrics", "--input", &data, "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage: lgw metrics"), "{err}");
    assert!(err.contains("seed"), "{err}");
    let last: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(last["exit_code"], 1);
    assert!(!dir.path().join("metrics.json").exists());
}

#[test]
fn unreadable_input_exits_two() {
    let out = lgw(&["metrics", "--input", "/nonexistent/x.jsonl", "--seed", "1", "--out", "/nonexistent/m.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    let last: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(last["exit_code"], 2);
}

#[test]
fn unknown_flag_exits_one() {
    assert_eq!(lgw(&["tree", "--bogus"]).status.code(), Some(1));
}

#[test]
fn metrics_report_echoes_seed_and_input_hash() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let report = dir.path().join("m.json");
    let out = lgw(&["metrics", "--input", &data, "--seed", "9", "--metrics", "mig,modularity", "--out", report.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let config = |key: &str| v["config"].as_array().unwrap().iter().find(|c| c["key"] == key).map(|c| c["value"].clone());
    assert_eq!(config("seed"), Some(serde_json::json!("9")));
    assert_eq!(config("input_sha256").unwrap().as_str().unwrap().len(), 64);
    let names: Vec<&str> = v["metrics"].as_array().unwrap().iter().map(|m| m["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"mig") && !names.contains(&"z_min_var"));
}
