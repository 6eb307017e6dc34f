use std::fs;

use contagion_core::report::{self, PipelineConfig, ThresholdMode};
use contagion_core::synth::{self, SynthConfig};

fn small_fixture(dir: &std::path::Path) -> PipelineConfig {
    let cfg = SynthConfig {
        n_obs: 1200,
        n_periods: 2,
        ..Default::default()
    };
    let (_, mut pc) = synth::write_fixture(dir, &cfg).unwrap();
    pc.bootstrap_replications = 50;
    pc
}

#[test]
fn fixture_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let pc = small_fixture(dir.path());
    let loaded = PipelineConfig::from_file(&dir.path().join("config.json")).unwrap();
    assert_eq!(loaded.schedule, pc.schedule);
    assert_eq!(loaded.seed, pc.seed);
    assert!(loaded.force_rigobon);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    fs::write(&p, r#"{"prices": "p.csv", "channels": "c.csv", "bogus": 1}"#).unwrap();
    assert!(PipelineConfig::from_file(&p).is_err());
}

#[test]
fn pipeline_writes_every_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_fixture(dir.path());
    let rep = report::run_pipeline(&cfg, None).unwrap();
    assert_eq!(rep.detection.periods.len(), 2);
    let out = dir.path().join("out");
    report::write_report(&out, &cfg, &rep).unwrap();
    for f in [
        "stage1_summary.csv",
        "edges_P1.csv",
        "shares_iv.csv",
        "shares_lasso.csv",
        "shares_lp_h5.csv",
        "shares_rigobon.csv",
        "diagnostics.csv",
        "bootstrap_ci.csv",
        "sensitivity.csv",
        "identification_status.csv",
        "communities.csv",
        "degree_shares.csv",
        "run_manifest.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let shares = fs::read_to_string(out.join("shares_iv.csv")).unwrap();
    for line in shares.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let sum: f64 = cols[2..7].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], cfg.seed);
}

#[test]
fn period_filter_and_fixed_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_fixture(dir.path());
    cfg.threshold = ThresholdMode::Fixed { value: 1e9 };
    let inputs = report::load_inputs(&cfg).unwrap();
    let det = report::run_detection(&cfg, &inputs, Some(&["P2".to_string()])).unwrap();
    assert_eq!(det.periods.len(), 1);
    assert_eq!(det.periods[0].period.name, "P2");
    assert!(det.periods[0].network().edges.is_empty());
    let attr = report::run_attribution(&cfg, &inputs, &det).unwrap();
    assert!(attr.iter().all(|p| p.links.is_empty()));
}

#[test]
fn seed_changes_only_bootstrap() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_fixture(dir.path());
    let a = report::run_pipeline(&cfg, None).unwrap();
    cfg.seed += 1;
    let b = report::run_pipeline(&cfg, None).unwrap();
    for (pa, pb) in a.attribution.iter().zip(&b.attribution) {
        assert_eq!(pa.shares, pb.shares);
    }
}
