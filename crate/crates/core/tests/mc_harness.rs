mod common;

use biaslab_core::datakit::{CmpOp, Condition};
use biaslab_core::mc::{filter_replicates, histogram, repeated_samples, run_mc, series_correlation, summarize_series, McTemplate, RecordSpec};
use biaslab_core::rng::RngState;
use biaslab_core::scenario::catalog_entry;
use biaslab_core::simcore::{evaluate_scm, ScmSpec};
use biaslab_core::scenario::DataSource;
use common::{median, pearson};

fn template(id: &str, reps: usize, seed: u64) -> McTemplate {
    let mut t = catalog_entry(id).unwrap().mc.expect("mc section").template;
    t.reps = reps;
    t.master_seed = seed;
    t
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn valid_instrument_recovers_adjusted_estimate() {
    let r = run_mc(&template("entry11-iv-valid", 2000, 1992)).unwrap();
    let kept = filter_replicates(&r, &[Condition::new("IN_byx", CmpOp::Ge, 0.0)]).unwrap();
    assert!((kept.removed as f64) < 0.02 * r.records.len() as f64, "removed {}", kept.removed);
    let d = kept.present("D_byx").unwrap();
    assert!(median(&d).abs() < 0.01, "median D {}", median(&d));
    let rho = series_correlation(&kept, "IN_byx", "M1_byx").unwrap();
    assert!(rho > 0.85, "corr {rho}");
    let (a, b) = (kept.present("IN_byx").unwrap(), kept.present("M1_byx").unwrap());
    assert!((rho - pearson(&a, &b)).abs() < 1e-12);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let t = template("entry8-collider-pm", 200, 5);
    let one = in_pool(1, || run_mc(&t).unwrap());
    let three = in_pool(3, || run_mc(&t).unwrap());
    assert_eq!(one, three);
    let mut a = Vec::new();
    let mut b = Vec::new();
    one.write_csv(&mut a).unwrap();
    three.write_csv(&mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn replicate_is_reproducible_in_isolation() {
    let full = run_mc(&template("entry7-confounder-mm", 50, 11)).unwrap();
    let single = run_mc(&template("entry7-confounder-mm", 1, 11)).unwrap();
    assert_eq!(full.records[0], single.records[0]);
    assert_eq!(full.provenance.master_seed, 11);
    assert_eq!(full.provenance.template_sha256.len(), 64);
}

#[test]
fn filtering_then_summarizing_matches_manual_subset() {
    let r = run_mc(&template("entry12-noncausal-covariates", 300, 3)).unwrap();
    let cond = [Condition::new("N", CmpOp::Gt, 2000.0), Condition::new("M1_byx", CmpOp::Ge, 1.0)];
    let kept = filter_replicates(&r, &cond).unwrap();
    let manual: Vec<f64> = r
        .records
        .iter()
        .filter(|rec| rec.n > 2000 && rec.values[0].is_some_and(|v| v >= 1.0))
        .filter_map(|rec| rec.values[2])
        .collect();
    let s = summarize_series(&kept, "D_byx").unwrap();
    assert_eq!(s.n, manual.len());
    assert!((s.median - median(&manual)).abs() < 1e-12);
    assert!((s.mean - manual.iter().sum::<f64>() / manual.len() as f64).abs() < 1e-12);
    assert_eq!(kept.removed + kept.records.len(), 300);
    // filters compose
    let twice = filter_replicates(&filter_replicates(&r, &cond[..1]).unwrap(), &cond[1..]).unwrap();
    assert_eq!(twice, kept);
}

#[test]
fn histogram_counts_every_present_value() {
    let r = run_mc(&template("entry7-confounder-pp", 200, 2)).unwrap();
    let bins = histogram(&r, "bXY", 50).unwrap();
    assert_eq!(bins.len(), 50);
    assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), r.present("bXY").unwrap().len());
    assert!(bins.windows(2).all(|w| w[0].hi == w[1].lo));
}

#[test]
fn invalid_templates_are_rejected() {
    let mut t = template("entry7-confounder-pp", 10, 0);
    t.reps = 0;
    assert!(run_mc(&t).is_err());
    let mut t = template("entry7-confounder-pp", 10, 0);
    t.placeholders.remove("c_to_x");
    assert!(run_mc(&t).unwrap_err().is_validation());
}

#[test]
fn repeated_samples_are_deterministic_and_filtered() {
    let Some(DataSource::Scm(spec)) = catalog_entry("entry5-unknown-interactions").unwrap().data else {
        panic!("scm expected")
    };
    let spec = ScmSpec { n: 20_000, ..spec };
    let mut spec = spec;
    for s in &mut spec.sources {
        if s.name == "EP" {
            s.kind = serde_json::from_value(serde_json::json!({
                "kind": "repeat", "params": { "values": [0, 1], "mode": "times", "k": 10000 }
            }))
            .unwrap();
        }
    }
    let pop = evaluate_scm(&spec, &mut RngState::new(1, 0)).unwrap();
    let plan = [RecordSpec::coef("b", "SIEM ~ EP", "EP")];
    let high = [Condition::new("PEA", CmpOp::Ge, 15.0)];
    let a = repeated_samples(&pop, 200, 100, Some(&high), &plan, 9).unwrap();
    let b = in_pool(2, || repeated_samples(&pop, 200, 100, Some(&high), &plan, 9).unwrap());
    assert_eq!(a, b);
    assert!(a.records.iter().all(|r| r.n == 200 && r.error.is_none()));
    // the high-PEA effect is negative, the unrestricted one positive
    assert!(median(&a.present("b").unwrap()) < 0.0);
    let all = repeated_samples(&pop, 200, 100, None, &plan, 9).unwrap();
    assert!(median(&all.present("b").unwrap()) > 0.0);
    assert!(repeated_samples(&pop, 30_000, 1, None, &plan, 9).is_err());
}
