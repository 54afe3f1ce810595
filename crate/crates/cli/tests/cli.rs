use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn combo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_combo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn scenarios_lists_every_preset() {
    let out = combo(&["scenarios", "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["s1", "s2", "s3", "s4", "s5", "lower_bound"]);
    let text = combo(&["scenarios"]);
    assert!(text.status.success());
    assert!(String::from_utf8(text.stdout).unwrap().contains("s3"));
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "scenario = \"s1\"\nreplications = 2\n[overrides]\nhorizon = 330\n",
    );
    let out_dir = dir.path().join("out");
    let out = combo(&[
        "run",
        &cfg,
        "--seed",
        "4",
        "--reps",
        "3",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(out_dir.join("regret.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 330 * 2);
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("diagnostics.json")).unwrap())
            .unwrap();
    assert_eq!(diag["replications"], 3);
    assert_eq!(diag["seed"], 4);
}

#[test]
fn diagnose_prints_plan() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scenario = \"s1\"\n");
    let out = combo(&["diagnose", &cfg]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["exploration"]["rounds"], 309);
}

#[test]
fn validation_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scenario = \"s1\"\n[overrides]\nhorizon = 2\n");
    let out = combo(&["diagnose", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error [validation]"));
    let cfg = write_config(dir.path(), "scenario = \"s9\"\n");
    assert_eq!(combo(&["diagnose", &cfg]).status.code(), Some(2));
    let cfg = write_config(dir.path(), "scenario = \"s1\"\n[overrides]\nbogus = 1\n");
    assert_eq!(combo(&["diagnose", &cfg]).status.code(), Some(2));
}

#[test]
fn missing_config_exits_with_code_4() {
    let out = combo(&["diagnose", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(4));
}
