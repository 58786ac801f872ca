use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use biaslab_core::scenario::{
    catalog, catalog_entry, catalog_ids, run_scenario, Analysis, AnalysisOutput, RunContext, ScenarioConfig,
};

/// Shrinks Monte Carlo work so whole scenarios run quickly.
fn quick(mut cfg: ScenarioConfig) -> ScenarioConfig {
    if let Some(mc) = &mut cfg.mc {
        mc.template.reps = 40;
    }
    for a in &mut cfg.analyses {
        if let Analysis::RepeatedSamples { reps, .. } = &mut a.op {
            *reps = 20;
        }
    }
    cfg
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn run_into(cfg: &ScenarioConfig, dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let ctx = RunContext { out_dir: dir.to_path_buf(), ..Default::default() };
    run_scenario(cfg, &ctx).unwrap();
    read_dir(dir)
}

#[test]
fn catalog_configs_round_trip_through_json() {
    assert!(catalog_ids().len() >= 15);
    for cfg in catalog() {
        let text = cfg.to_json();
        let back = ScenarioConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg, "{}", cfg.id);
        assert_eq!(back.to_json(), text);
    }
}

#[test]
fn every_catalog_scenario_runs_cleanly() {
    for id in catalog_ids() {
        let cfg = quick(catalog_entry(id).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let out = run_scenario(&cfg, &RunContext { out_dir: dir.path().to_path_buf(), ..Default::default() }).unwrap();
        for a in &out.report.analyses {
            assert!(a.error.is_none(), "{id}/{}: {:?}", a.label, a.error);
        }
        assert!(!out.all_failed(), "{id}");
        for o in &cfg.outputs {
            assert!(dir.path().join(&o.path).exists(), "{id}: {} missing", o.path);
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    for id in ["entry3-collinearity-high", "entry4-outliers", "entry13-dv-measurement", "entry7-confounder-pp"] {
        let cfg = quick(catalog_entry(id).unwrap());
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let (fa, fb) = (run_into(&cfg, a.path()), run_into(&cfg, b.path()));
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{id}");
    }
}

#[test]
fn seed_changes_generated_data() {
    let cfg = catalog_entry("entry1-linearity").unwrap();
    let other = ScenarioConfig { seed: cfg.seed + 1, ..cfg.clone() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_ne!(run_into(&cfg, a.path())["data.csv"], run_into(&other, b.path())["data.csv"]);
}

#[test]
fn collinearity_scenario_reports_known_vif() {
    let cfg = catalog_entry("entry3-collinearity-high").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_scenario(&cfg, &RunContext { out_dir: dir.path().to_path_buf(), ..Default::default() }).unwrap();
    let rec = out.report.analyses.iter().find(|a| a.label == "collinearity").unwrap();
    let Some(AnalysisOutput::Collinearity(r)) = &rec.result else { panic!("collinearity output expected") };
    for v in &r.vif {
        assert!((v - 3.25).abs() < 1e-9);
    }
}

#[test]
fn csv_data_source_is_read_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.csv"), "X,Y\n1,3\n2,5\n3,7\n4,9.5\n").unwrap();
    let cfg = ScenarioConfig::from_json(
        r#"{"id": "csv", "data": {"csv": "d.csv"},
            "analyses": [{"label": "ols", "op": "fit", "formula": "Y ~ X"}],
            "outputs": [{"what": "analysis:ols", "path": "ols.csv"}]}"#,
    )
    .unwrap();
    let ctx = RunContext { base_dir: dir.path().to_path_buf(), out_dir: dir.path().join("out"), ..Default::default() };
    let out = run_scenario(&cfg, &ctx).unwrap();
    assert_eq!(out.report.n_rows, Some(4));
    assert!(dir.path().join("out/ols.csv").exists());
}

#[test]
fn invalid_configs_are_validation_errors() {
    let bad = [
        r#"{"id": "x", "bogus": 1}"#,
        r#"{"id": ""}"#,
        r#"{"id": "x", "data": {"scm": {"n": 10, "sources": [{"name": "A", "kind": "normal", "params": {"mean": 0, "sd": 1}}]}},
            "analyses": [{"op": "fit", "formula": "B ~ A"}]}"#,
        r#"{"id": "x", "data": {"scm": {"n": 10, "sources": [{"name": "A", "kind": "normal", "params": {"mean": 0, "sd": 1}}]}},
            "analyses": [{"label": "a", "op": "summarize", "vars": ["A"]}, {"label": "a", "op": "summarize", "vars": ["A"]}]}"#,
        r#"{"id": "x", "data": {"scm": {"n": 10, "sources": [{"name": "A", "kind": "normal", "params": {"mean": 0, "sd": -1}}]}}}"#,
        r#"{"id": "x", "data": {"scm": {"n": 10, "sources": [{"name": "A", "kind": "normal", "params": {"mean": 0, "sd": 1}}]}},
            "outputs": [{"what": "analysis:nope", "path": "a.csv"}]}"#,
    ];
    for text in bad {
        let e = ScenarioConfig::from_json(text).unwrap_err();
        assert!(e.is_validation(), "{text}: {e:?}");
    }
}

#[test]
fn failing_analysis_is_recorded_not_fatal() {
    let cfg = ScenarioConfig::from_json(
        r#"{"id": "x", "data": {"scm": {"n": 50, "sources": [
                {"name": "A", "kind": "normal", "params": {"mean": 0, "sd": 1}},
                {"name": "B", "kind": "normal", "params": {"mean": 0, "sd": 1}}]}},
            "analyses": [
                {"label": "ok", "op": "fit", "formula": "B ~ A"},
                {"label": "bad", "op": "fit", "formula": "B ~ A", "family": "binomial"}]}"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_scenario(&cfg, &RunContext { out_dir: dir.path().to_path_buf(), ..Default::default() }).unwrap();
    assert!(out.report.analyses[0].error.is_none());
    assert!(out.report.analyses[1].error.is_some());
    assert!(!out.all_failed());
}
