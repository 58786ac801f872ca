//! Adjustment comparisons, instrumental variables, mediation and moderation.

use serde::{Deserialize, Serialize};

use crate::datakit::{filter_rows, listwise_complete, pearson, Condition, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{fit_ols, two_sided_normal_p, FitResult, Formula, Term};

/// One model in a [`ScenarioReport`]; `fit` is `None` when fitting failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub label: String,
    pub covariates: Vec<String>,
    pub fit: Option<FitResult>,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub stat: Option<f64>,
    pub bias: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario_id: String,
    pub focal_term: String,
    pub truth: Option<f64>,
    pub fits: Vec<NamedFit>,
}

impl ScenarioReport {
    pub fn get(&self, label: &str) -> Option<&NamedFit> {
        self.fits.iter().find(|f| f.label == label)
    }
}

fn check_names(data: &Dataset, names: &[&str]) -> Result<()> {
    for n in names {
        if !data.has_column(n) {
            return Err(Error::Validation(format!("variable '{n}' is not in the data")));
        }
    }
    Ok(())
}

pub fn adjustment_label(covariates: &[String]) -> String {
    if covariates.is_empty() {
        "bivariate".to_string()
    } else {
        format!("adjusted:{}", covariates.join("+"))
    }
}

/// Fits `y ~ x` and `y ~ x + set` for every covariate set. A failing fit is
/// reported in its row; the others are still computed.
pub fn compare_adjustments(
    data: &Dataset,
    y: &str,
    x: &str,
    covariate_sets: &[Vec<String>],
    truth: Option<f64>,
) -> Result<ScenarioReport> {
    check_names(data, &[y, x])?;
    for set in covariate_sets {
        check_names(data, &set.iter().map(String::as_str).collect::<Vec<_>>())?;
    }
    let mut sets: Vec<Vec<String>> = vec![Vec::new()];
    for s in covariate_sets {
        if !sets.contains(s) {
            sets.push(s.clone());
        }
    }
    let fits = sets
        .into_iter()
        .map(|set| {
            let mut preds = vec![x];
            preds.extend(set.iter().map(String::as_str));
            let label = adjustment_label(&set);
            match fit_ols(data, &Formula::linear(y, &preds)) {
                Ok(fit) => {
                    let b = fit.b[1];
                    NamedFit {
                        label,
                        covariates: set,
                        estimate: Some(b),
                        se: Some(fit.se[1]),
                        stat: Some(fit.stat[1]),
                        bias: truth.map(|t| b - t),
                        fit: Some(fit),
                        error: None,
                    }
                }
                Err(e) => NamedFit {
                    label,
                    covariates: set,
                    fit: None,
                    estimate: None,
                    se: None,
                    stat: None,
                    bias: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(ScenarioReport { scenario_id: String::new(), focal_term: x.to_string(), truth, fits })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IvEstimate {
    pub b_yin: f64,
    pub se_yin: f64,
    pub b_xin: f64,
    pub se_xin: f64,
    /// `b_yin / b_xin`; withheld only when the instrument is weak and the
    /// override is off (in which case an error is returned instead).
    pub ratio: f64,
    pub weak: bool,
    pub n_used: usize,
    /// Correlation of the instrument with each observed confounder.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub confounder_corr: Vec<(String, f64)>,
}

/// Multiple of SE(b_xin) that |b_xin| must exceed.
pub const WEAK_FLOOR: f64 = 10.0;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IvOptions {
    /// Report the ratio even below the weak-instrument floor.
    #[serde(default)]
    pub allow_weak: bool,
    /// Observed confounders to report correlations with the instrument for.
    #[serde(default)]
    pub confounders: Vec<String>,
}

/// Wald ratio from the two bivariate regressions `y ~ in` and `x ~ in`.
pub fn iv_wald(data: &Dataset, y: &str, x: &str, instrument: &str, opts: &IvOptions) -> Result<IvEstimate> {
    check_names(data, &[y, x, instrument])?;
    check_names(data, &opts.confounders.iter().map(String::as_str).collect::<Vec<_>>())?;
    let (data, _) = listwise_complete(data, &[y, x, instrument])?;
    if data.n_rows() < 10 {
        return Err(Error::InsufficientData(format!(
            "instrumental-variable estimation needs at least 10 rows, got {}",
            data.n_rows()
        )));
    }
    let fy = fit_ols(&data, &Formula::linear(y, &[instrument]))?;
    let fx = fit_ols(&data, &Formula::linear(x, &[instrument]))?;
    let (b_xin, se_xin) = (fx.b[1], fx.se[1]);
    let floor = WEAK_FLOOR * se_xin;
    let weak = !(b_xin.abs() > floor);
    if weak && !opts.allow_weak {
        return Err(Error::WeakInstrument { b_xin, floor_multiple: WEAK_FLOOR, floor });
    }
    let confounder_corr = opts
        .confounders
        .iter()
        .map(|c| Ok((c.clone(), pearson(data.column(instrument)?, data.column(c)?)?)))
        .collect::<Result<_>>()?;
    Ok(IvEstimate {
        b_yin: fy.b[1],
        se_yin: fy.se[1],
        b_xin,
        se_xin,
        ratio: fy.b[1] / b_xin,
        weak,
        n_used: data.n_rows(),
        confounder_corr,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediationResult {
    /// x -> m
    pub a: f64,
    pub se_a: f64,
    /// m -> y given x
    pub b: f64,
    pub se_b: f64,
    /// x -> y given m
    pub direct: f64,
    pub se_direct: f64,
    pub indirect: f64,
    pub total: f64,
    pub sobel_se: f64,
    pub z_indirect: f64,
    pub p_indirect: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_used: usize,
}

/// First-order delta-method (Sobel) inference for `a * b`.
pub fn sobel(a: f64, se_a: f64, b: f64, se_b: f64) -> (f64, f64, f64) {
    let indirect = a * b;
    let se = (b * b * se_a * se_a + a * a * se_b * se_b).sqrt();
    (indirect, se, indirect / se)
}

/// Path decomposition from `m ~ x` and `y ~ x + m` on the rows complete for
/// all three variables.
pub fn mediation(data: &Dataset, y: &str, x: &str, m: &str) -> Result<MediationResult> {
    check_names(data, &[y, x, m])?;
    let (data, _) = listwise_complete(data, &[y, x, m])?;
    let fa = fit_ols(&data, &Formula::linear(m, &[x]))?;
    let fb = fit_ols(&data, &Formula::linear(y, &[x, m]))?;
    let (a, se_a) = (fa.b[1], fa.se[1]);
    let (direct, se_direct) = (fb.b[1], fb.se[1]);
    let (b, se_b) = (fb.b[2], fb.se[2]);
    let (indirect, sobel_se, z) = sobel(a, se_a, b, se_b);
    Ok(MediationResult {
        a,
        se_a,
        b,
        se_b,
        direct,
        se_direct,
        indirect,
        total: direct + indirect,
        sobel_se,
        z_indirect: z,
        p_indirect: two_sided_normal_p(z),
        ci_lo: indirect - 1.96 * sobel_se,
        ci_hi: indirect + 1.96 * sobel_se,
        n_used: data.n_rows(),
    })
}

/// `y ~ x + mo + x:mo`
pub fn moderated_fit(data: &Dataset, y: &str, x: &str, mo: &str) -> Result<FitResult> {
    check_names(data, &[y, x, mo])?;
    let f = Formula::new(
        y,
        vec![Term::Main(x.into()), Term::Main(mo.into()), Term::Interaction(x.into(), mo.into())],
        true,
    )?;
    fit_ols(data, &f)
}

/// Simple slope of `x` at a given moderator value.
pub fn conditional_slope(fit: &FitResult, x: &str, mo: &str, mo_value: f64) -> Result<f64> {
    Ok(fit.coef(x)? + fit.coef(&format!("{x}:{mo}"))? * mo_value)
}

/// `y ~ x` on the rows satisfying every condition.
pub fn subgroup_effect(data: &Dataset, y: &str, x: &str, predicate: &[Condition]) -> Result<FitResult> {
    check_names(data, &[y, x])?;
    let sub = filter_rows(data, predicate)?;
    let (sub, _) = listwise_complete(&sub, &[y, x])?;
    if sub.n_rows() <= 3 {
        return Err(Error::InsufficientData(format!("subgroup has only {} complete rows", sub.n_rows())));
    }
    fit_ols(&sub, &Formula::linear(y, &[x]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::{CmpOp, Column};
    use crate::rng::RngState;

    fn ds(cols: Vec<(&str, Vec<f64>)>) -> Dataset {
        Dataset::from_columns(cols.into_iter().map(|(n, v)| Column::new(n, v)).collect()).unwrap()
    }

    fn noisy(seed: u64, n: usize) -> Dataset {
        let mut r = RngState::new(seed, 0);
        let x = r.normal_draws(n, 0.0, 1.0).unwrap();
        let e1 = r.normal_draws(n, 0.0, 1.0).unwrap();
        let e2 = r.normal_draws(n, 0.0, 1.0).unwrap();
        let m: Vec<f64> = (0..n).map(|i| 0.7 * x[i] + e1[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| 0.3 * x[i] + 0.5 * m[i] + e2[i]).collect();
        ds(vec![("x", x), ("m", m), ("y", y)])
    }

    #[test]
    fn sobel_example() {
        let (ind, _, z) = sobel(1.036, 0.020, 0.990, 0.010);
        assert!((ind - 1.026).abs() < 0.001);
        assert!((z - 46.0).abs() < 0.5, "{z}");
    }

    #[test]
    fn mediation_decomposes_total() {
        let d = noisy(3, 500);
        let r = mediation(&d, "y", "x", "m").unwrap();
        assert!((r.total - (r.direct + r.indirect)).abs() < 1e-12);
        let biv = fit_ols(&d, &Formula::linear("y", &["x"])).unwrap();
        assert!((biv.b[1] - r.total).abs() < 1e-8);
    }

    #[test]
    fn conditional_slopes() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 - 10.0).collect();
        let mo: Vec<f64> = (0..20).map(|i| ((i * 7) % 5) as f64).collect();
        let y: Vec<f64> = x.iter().zip(&mo).map(|(a, b)| a * b).collect();
        let fit = moderated_fit(&ds(vec![("x", x), ("mo", mo), ("y", y)]), "y", "x", "mo").unwrap();
        assert!((fit.coef("x:mo").unwrap() - 1.0).abs() < 1e-10);
        assert!(fit.coef("x").unwrap().abs() < 1e-10);
        assert!((fit.r2.unwrap() - 1.0).abs() < 1e-12);
        assert!((conditional_slope(&fit, "x", "mo", 3.0).unwrap() - 3.0).abs() < 1e-9);
        assert!(conditional_slope(&fit, "x", "nope", 3.0).is_err());
    }

    #[test]
    fn constant_moderator_is_singular() {
        let d = ds(vec![("x", (0..10).map(f64::from).collect()), ("mo", vec![2.0; 10]), ("y", (0..10).map(|i| f64::from(i * i)).collect())]);
        assert!(matches!(moderated_fit(&d, "y", "x", "mo"), Err(Error::SingularDesign { .. })));
    }

    #[test]
    fn iv_ratio_and_weak_instrument() {
        let mut r = RngState::new(1, 0);
        let n = 2000;
        let z = r.normal_draws(n, 0.0, 1.0).unwrap();
        let u = r.normal_draws(n, 0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..n).map(|i| 2.0 * z[i] + u[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| x[i] + u[i]).collect();
        let noise = r.normal_draws(n, 0.0, 1.0).unwrap();
        let d = ds(vec![("z", z.clone()), ("x", x), ("y", y), ("w", noise)]);
        let est = iv_wald(&d, "y", "x", "z", &IvOptions::default()).unwrap();
        assert!((est.ratio - est.b_yin / est.b_xin).abs() < 1e-15);
        assert!((est.ratio - 1.0).abs() < 0.1);
        assert!(matches!(iv_wald(&d, "y", "x", "w", &IvOptions::default()), Err(Error::WeakInstrument { .. })));
        let allowed = iv_wald(&d, "y", "x", "w", &IvOptions { allow_weak: true, confounders: vec![] }).unwrap();
        assert!(allowed.weak);
        // rescaled instrument
        let mut d2 = d.clone();
        d2.set_column(Column::new("z", z.iter().map(|v| -3.5 * v).collect())).unwrap();
        let est2 = iv_wald(&d2, "y", "x", "z", &IvOptions::default()).unwrap();
        assert!((est2.ratio - est.ratio).abs() < 1e-12);
    }

    #[test]
    fn subgroup_filters() {
        let d = noisy(9, 300);
        let all = subgroup_effect(&d, "y", "x", &[]).unwrap();
        assert_eq!(all, fit_ols(&d, &Formula::linear("y", &["x"])).unwrap());
        let none = [Condition::new("x", CmpOp::Gt, 1e9)];
        assert!(matches!(subgroup_effect(&d, "y", "x", &none), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn adjustment_rows_survive_failures() {
        let mut d = noisy(2, 200);
        d.push_column(Column::new("k", vec![1.0; 200])).unwrap();
        let r = compare_adjustments(&d, "y", "x", &[vec!["m".into()], vec!["k".into()]], Some(0.3)).unwrap();
        assert_eq!(r.fits.len(), 3);
        assert_eq!(r.fits[0].label, "bivariate");
        assert!(r.get("adjusted:m").unwrap().estimate.is_some());
        assert!(r.get("adjusted:k").unwrap().error.is_some());
    }
}
