use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tiny() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.json")
}

fn recon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recon")).args(args).env_remove("RECON_DEFAULT_THREADS").output().unwrap()
}

fn run_in(dir: &Path, stage: &str, extra: &[&str]) -> Output {
    let cfg = tiny();
    let mut args = vec![stage, "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    recon(&args)
}

#[test]
fn tiny_end_to_end_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "end-to-end", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(value["meta"]["seed"], 3);
    assert_eq!(value["meta"]["config_hash"].as_str().unwrap().len(), 64);
    assert!(dir.path().join("manifest.json").exists());
    let again = run_in(dir.path(), "report", &[]);
    assert_eq!(again.status.code(), Some(0));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = recon(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"pipeline": {"windw": 3}}"#).unwrap();
    let out = recon(&["build-trees", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&cfg, r#"{"pipeline": {"window": 1}}"#).unwrap();
    let out = recon(&["build-trees", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_checks_exit_one_with_a_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "end-to-end", &["--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let failures = std::fs::read_to_string(dir.path().join("failures.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&failures).unwrap();
    assert!(!value["data"].as_array().unwrap().is_empty());
}

#[test]
fn same_config_gives_identical_csvs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for stage in ["recon-distance", "shock-measure", "build-trees"] {
        assert_eq!(run_in(a.path(), stage, &[]).status.code(), Some(0));
        assert_eq!(run_in(b.path(), stage, &["--threads", "1"]).status.code(), Some(0));
    }
    let mut compared = 0;
    for entry in std::fs::read_dir(a.path()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_name().unwrap();
            assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name:?}");
            compared += 1;
        }
    }
    assert!(compared >= 4);
}

#[test]
fn every_csv_starts_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), "sample-field", &["--seed", "11"]).status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("weights.csv")).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("# config_hash=") && first.contains(" seed=11 ") && first.contains(" version="));
}
