use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn contagion(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contagion")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = contagion(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn synth_fixture(dir: &Path) -> String {
    let spec = dir.join("synth.json");
    fs::write(&spec, r#"{"n_obs": 1200, "n_periods": 2, "n_markets": 4, "coupling": [], "loadings": [[0.4,0.4,0.4,0.4,0.4],[0.45,0.45,0.45,0.45,0.45],[0.5,0.5,0.5,0.5,0.5],[0.55,0.55,0.55,0.55,0.55]]}"#).unwrap();
    let fx = dir.join("fx");
    ok(&["synth", "--out", fx.to_str().unwrap(), "--config", spec.to_str().unwrap(), "--seed", "3"]);
    fx.join("config.json").to_str().unwrap().to_string()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn pipeline_is_thread_count_invariant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_fixture(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["pipeline", "--config", &cfg, "--out", a.to_str().unwrap(), "--threads", "1"]);
    ok(&["pipeline", "--config", &cfg, "--out", b.to_str().unwrap(), "--threads", "4"]);
    let ta = tree(&a);
    assert!(ta.iter().any(|(n, _)| n == "run_manifest.json"));
    assert_eq!(ta, tree(&b));
}

#[test]
fn stage_commands_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_fixture(tmp.path());
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();
    let listed = ok(&["ingest", "--config", &cfg, "--out", o]);
    assert!(listed.contains("returns.csv") && listed.contains("periods.csv"));
    ok(&["detect", "--config", &cfg, "--out", o, "--periods", "P2"]);
    let summary = fs::read_to_string(out.join("stage1_summary.csv")).unwrap();
    assert!(summary.lines().skip(1).all(|l| l.starts_with("P2,")));
    ok(&["attribute", "--config", &cfg, "--out", o]);
    assert!(out.join("identification_status.csv").exists());
}

#[test]
fn report_prints_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_fixture(tmp.path());
    let out = tmp.path().join("r");
    let text = ok(&["report", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(text.contains("stage1_summary.csv") && text.contains("identification_status.csv"));
    let again = ok(&["report", "--out", out.to_str().unwrap()]);
    assert_eq!(text, again);
}

#[test]
fn seed_flag_lands_in_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_fixture(tmp.path());
    let out = tmp.path().join("s");
    ok(&["pipeline", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "99"]);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 99);
}

#[test]
fn errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = contagion(&["pipeline", "--config", "/nonexistent/config.json", "--out", "x"]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error"));
    assert!(!contagion(&["pipeline", "--out", tmp.path().to_str().unwrap()]).status.success());
    assert!(!contagion(&["report", "--out", tmp.path().to_str().unwrap()]).status.success());
    let cfg = synth_fixture(tmp.path());
    assert!(!contagion(&["detect", "--config", &cfg, "--out", "y", "--threads", "0"]).status.success());
}
