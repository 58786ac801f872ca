mod common;

use biaslab_core::datakit::{pearson, summarize, Condition, CmpOp};
use biaslab_core::estimators::{fit, Family, Formula};
use biaslab_core::rng::RngState;
use biaslab_core::scenario::{catalog_entry, DataSource};
use biaslab_core::simcore::{evaluate_scm, mvn_exact, CorrTarget, ScmSpec};
use common::linear_gaussian_moments;
use statrs::distribution::{ContinuousCDF, Normal};

fn catalog_scm(id: &str, n: usize) -> ScmSpec {
    match catalog_entry(id).unwrap().data {
        Some(DataSource::Scm(mut s)) => {
            s.n = n;
            s
        }
        _ => panic!("{id} is not an scm scenario"),
    }
}

/// Sample slopes agree with population slopes from the covariance oracle.
fn check_regressions(id: &str, cases: &[(&str, &[&str])]) {
    let spec = catalog_scm(id, 200_000);
    let pop = linear_gaussian_moments(&spec);
    let data = evaluate_scm(&spec, &mut RngState::new(77, 0)).unwrap();
    for (y, xs) in cases {
        let truth = pop.regression(y, xs);
        let f = fit(&data, &Formula::linear(y, xs), Family::Gaussian).unwrap();
        for (k, x) in xs.iter().enumerate() {
            let (b, se) = (f.coef(x).unwrap(), f.se_of(x).unwrap());
            assert!((b - truth[k]).abs() < 4.0 * se, "{id}: {y} ~ {xs:?}, {x}: {b} vs {}", truth[k]);
        }
    }
}

#[test]
fn confounder_scm_matches_covariance_oracle() {
    check_regressions("entry7-confounder-pp", &[("y", &["x"]), ("y", &["x", "c"]), ("x", &["c"])]);
    check_regressions("entry7-confounder-mp", &[("y", &["x"]), ("y", &["x", "c"])]);
}

#[test]
fn collider_scm_matches_covariance_oracle() {
    check_regressions("entry8-collider-pp", &[("y", &["x"]), ("y", &["x", "c"])]);
    check_regressions("entry8-collider-pm", &[("y", &["x", "c"])]);
}

#[test]
fn descendant_and_instrument_scms_match_covariance_oracle() {
    check_regressions("entry10-descendants", &[("Y", &["X"]), ("Y", &["X", "Des"]), ("Y", &["X", "Con"])]);
    check_regressions("entry11-iv-valid", &[("Y", &["X"]), ("Y", &["X", "C"]), ("Y", &["IN"]), ("X", &["IN"])]);
}

#[test]
fn sample_moments_approach_oracle_moments() {
    let spec = catalog_scm("entry10-descendants", 200_000);
    let pop = linear_gaussian_moments(&spec);
    let data = evaluate_scm(&spec, &mut RngState::new(3, 9)).unwrap();
    for (i, name) in pop.names.iter().enumerate() {
        let s = summarize(data.column(name).unwrap()).unwrap();
        let sd = pop.cov[(i, i)].sqrt();
        assert!((s.mean - pop.mean[i]).abs() < 4.0 * sd / (200_000f64).sqrt(), "{name} mean");
        assert!((s.sd / sd - 1.0).abs() < 0.01, "{name} sd {} vs {sd}", s.sd);
    }
}

#[test]
fn exact_moment_generation_hits_targets() {
    for id in ["none", "small", "modsmall", "moderate", "high"] {
        let cfg = catalog_entry(&format!("entry3-collinearity-{id}")).unwrap();
        let Some(DataSource::Corr(c)) = cfg.data else { panic!("corr source expected") };
        for seed in [1, 2, 3] {
            let d = mvn_exact(&c.target, c.n, &mut RngState::new(seed, 0)).unwrap();
            for (i, a) in c.target.names.iter().enumerate() {
                let s = summarize(d.column(a).unwrap()).unwrap();
                assert!(s.mean.abs() < 1e-12);
                assert!((s.sd - 1.0).abs() < 1e-12);
                for (j, b) in c.target.names.iter().enumerate() {
                    let r = pearson(d.column(a).unwrap(), d.column(b).unwrap()).unwrap();
                    assert!((r - c.target.corr[i][j]).abs() < 1e-10, "{id} r({a},{b}) = {r}");
                }
            }
        }
    }
}

#[test]
fn exact_moments_respect_requested_means_and_sds() {
    let mut t = CorrTarget::new(&["A", "B"], vec![vec![1.0, -0.3], vec![-0.3, 1.0]]);
    t.means = Some(vec![10.0, -2.0]);
    t.sds = Some(vec![3.0, 0.5]);
    let d = mvn_exact(&t, 50, &mut RngState::new(4, 0)).unwrap();
    let a = summarize(d.column("A").unwrap()).unwrap();
    let b = summarize(d.column("B").unwrap()).unwrap();
    assert!((a.mean - 10.0).abs() < 1e-12 && (a.sd - 3.0).abs() < 1e-12);
    assert!((b.mean + 2.0).abs() < 1e-12 && (b.sd - 0.5).abs() < 1e-12);
}

/// Probability mass of trunc(N(mean, sd)) clamped to [lo, hi].
fn clamped_trunc_pmf(mean: f64, sd: f64, lo: i64, hi: i64) -> Vec<(f64, f64)> {
    let nd = Normal::new(mean, sd).unwrap();
    (lo..=hi)
        .map(|k| {
            let k = k as f64;
            // trunc maps (k-1, k] to k-1 for k <= 0 ... handled by sign
            let (a, b) = if k > 0.0 { (k, k + 1.0) } else if k < 0.0 { (k - 1.0, k) } else { (-1.0, 1.0) };
            let mut p = nd.cdf(b) - nd.cdf(a);
            if k == lo as f64 {
                p += nd.cdf(a);
            }
            if k == hi as f64 {
                p += 1.0 - nd.cdf(b);
            }
            (k, p)
        })
        .collect()
}

#[test]
fn unknown_interaction_subgroups_match_discrete_oracle() {
    let spec = catalog_scm("entry5-unknown-interactions", 500_000);
    let data = evaluate_scm(&spec, &mut RngState::new(1992, 0)).unwrap();
    let pmf = clamped_trunc_pmf(12.0, 2.5, 4, 19);
    assert!((pmf.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
    let cond_mean = |keep: &dyn Fn(f64) -> bool| {
        let (s, w) = pmf.iter().filter(|(k, _)| keep(*k)).fold((0.0, 0.0), |(s, w), (k, p)| (s + k * p, w + p));
        s / w
    };
    // the treatment effect at PEA = v is 7 - 0.5 v
    let cases: [(Option<Condition>, f64); 3] = [
        (None, 7.0 - 0.5 * cond_mean(&|_| true)),
        (Some(Condition::new("PEA", CmpOp::Ge, 15.0)), 7.0 - 0.5 * cond_mean(&|k| k >= 15.0)),
        (Some(Condition::new("PEA", CmpOp::Le, 8.0)), 7.0 - 0.5 * cond_mean(&|k| k <= 8.0)),
    ];
    for (cond, truth) in cases {
        let d = match &cond {
            Some(c) => biaslab_core::datakit::filter_rows(&data, std::slice::from_ref(c)).unwrap(),
            None => data.clone(),
        };
        let f = fit(&d, &Formula::linear("SIEM", &["EP"]), Family::Gaussian).unwrap();
        let (b, se) = (f.coef("EP").unwrap(), f.se_of("EP").unwrap());
        assert!((b - truth).abs() < 4.0 * se, "{cond:?}: {b} vs {truth}");
    }
    // published values for these three effects: 1.25, -0.88 and 3.37
    assert!((7.0 - 0.5 * cond_mean(&|_| true) - 1.25).abs() < 0.05);
    assert!((7.0 - 0.5 * cond_mean(&|k| k >= 15.0) + 0.88).abs() < 0.05);
    assert!((7.0 - 0.5 * cond_mean(&|k| k <= 8.0) - 3.37).abs() < 0.05);
}

#[test]
fn heteroscedastic_group_errors_have_requested_spread() {
    let spec = catalog_scm("entry2-heteroscedastic-expanding", 1000);
    let mut pooled = Vec::new();
    for seed in 0..50 {
        pooled.push(evaluate_scm(&spec, &mut RngState::new(seed, 0)).unwrap());
    }
    let data = pooled.iter().skip(1).fold(pooled[0].clone(), |acc, d| acc.vstack(d).unwrap());
    for (level, sd) in [(1.0, 1.0), (3.0, 2.4), (5.0, 3.8)] {
        let d = biaslab_core::datakit::filter_rows(&data, &[Condition::new("X", CmpOp::Eq, level)]).unwrap();
        let s = summarize(d.column("Y").unwrap()).unwrap();
        assert!((s.sd / sd - 1.0).abs() < 0.04, "level {level}: sd {}", s.sd);
        assert!((s.mean - (2.0 * level + 10.0)).abs() < 4.0 * sd / (d.n_rows() as f64).sqrt());
    }
}
