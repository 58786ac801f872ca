//! Regression fitters and inference.

mod diagnostics;
mod formula;
mod logistic;
mod ols;
mod ordered;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::datakit::{Column, Dataset};
use crate::error::{Error, Result};

pub use diagnostics::{collinearity_diagnostics, CollinearityReport};
pub use formula::{Design, Formula, Term, INTERCEPT};
pub use logistic::fit_logistic;
pub use ols::fit_ols;
pub use ordered::fit_ordered_logit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    #[serde(alias = "binomial-logit", alias = "logit")]
    Binomial,
    #[serde(alias = "ordered-logit", alias = "polr")]
    Ordered,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Binomial => "binomial",
            Family::Ordered => "ordered",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Family::Gaussian),
            "binomial" | "binomial-logit" | "logit" => Ok(Family::Binomial),
            "ordered" | "ordered-logit" | "polr" => Ok(Family::Ordered),
            _ => Err(Error::Validation(format!(
                "unknown family '{s}' (expected gaussian, binomial or ordered)"
            ))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One fitted model. Vectors are aligned with `terms`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub formula: Formula,
    pub terms: Vec<String>,
    pub b: Vec<f64>,
    pub se: Vec<f64>,
    /// t for gaussian and ordered fits, z for binomial.
    pub stat: Vec<f64>,
    pub p: Vec<f64>,
    /// Standardized coefficients, `b * sd(x) / sd(y)`; 0 for the intercept.
    pub beta: Vec<f64>,
    /// Ordered fits only, labelled `1|2`, `2|3`, ...
    pub cutpoints: Vec<f64>,
    pub cutpoint_names: Vec<String>,
    pub cutpoint_se: Vec<f64>,
    pub r2: Option<f64>,
    pub adj_r2: Option<f64>,
    /// Residual standard error (gaussian only).
    pub sigma: Option<f64>,
    pub deviance: f64,
    pub null_deviance: f64,
    pub aic: f64,
    pub df_residual: usize,
    pub n_used: usize,
    pub n_dropped: usize,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn term_index(&self, term: &str) -> Result<usize> {
        self.terms
            .iter()
            .position(|t| t == term)
            .or_else(|| {
                // accept B:A for a fitted A:B
                let (a, b) = term.split_once(':')?;
                let swapped = format!("{b}:{a}");
                self.terms.iter().position(|t| *t == swapped)
            })
            .ok_or_else(|| Error::Lookup(format!("term '{term}' not in fit ({})", self.terms.join(", "))))
    }

    pub fn coef(&self, term: &str) -> Result<f64> {
        Ok(self.b[self.term_index(term)?])
    }

    pub fn se_of(&self, term: &str) -> Result<f64> {
        Ok(self.se[self.term_index(term)?])
    }

    pub fn stat_of(&self, term: &str) -> Result<f64> {
        Ok(self.stat[self.term_index(term)?])
    }

    /// Reads one per-term quantity by name: `b`, `se`, `stat`, `p` or `beta`.
    pub fn value(&self, term: &str, which: Quantity) -> Result<f64> {
        let i = self.term_index(term)?;
        Ok(match which {
            Quantity::B => self.b[i],
            Quantity::Se => self.se[i],
            Quantity::Stat => self.stat[i],
            Quantity::P => self.p[i],
            Quantity::Beta => self.beta[i],
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    #[default]
    B,
    Se,
    Stat,
    P,
    Beta,
}

/// Fits `formula` with the requested family.
pub fn fit(data: &Dataset, formula: &Formula, family: Family) -> Result<FitResult> {
    match family {
        Family::Gaussian => fit_ols(data, formula),
        Family::Binomial => fit_logistic(data, formula),
        Family::Ordered => fit_ordered_logit(data, formula),
    }
}

/// Single-restriction Wald test of `term = 0`.
pub fn wald_chisq(fit: &FitResult, term: &str) -> Result<(f64, f64)> {
    let s = fit.stat_of(term)?;
    Ok(chisq_from_stat(s))
}

pub fn chisq_from_stat(stat: f64) -> (f64, f64) {
    let chisq = stat * stat;
    let p = if chisq.is_nan() {
        f64::NAN
    } else {
        ChiSquared::new(1.0).expect("df 1 is valid").sf(chisq)
    };
    (chisq, p)
}

/// Fitted values: linear predictor for gaussian and ordered fits, probability
/// for binomial fits. Rows with a missing predictor are missing.
pub fn predict(fit: &FitResult, data: &Dataset) -> Result<Column> {
    let f = &fit.formula;
    for t in &f.terms {
        for v in t.variables() {
            if !data.has_column(v) {
                return Err(Error::Validation(format!("predictor '{v}' is not in the data")));
            }
        }
    }
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    let x = f.matrix_rows(data, &rows)?;
    let cells = (0..data.n_rows())
        .map(|i| {
            let eta: f64 = x.row(i).iter().zip(&fit.b).map(|(a, b)| a * b).sum();
            if !eta.is_finite() {
                None
            } else if fit.family == Family::Binomial {
                Some(logistic_cdf(eta))
            } else {
                Some(eta)
            }
        })
        .collect();
    Ok(Column::from_options("fitted", cells))
}

/// Response-scale residuals `y - fitted`.
pub fn residuals(fit: &FitResult, data: &Dataset) -> Result<Column> {
    let y = data
        .column(&fit.formula.response)
        .map_err(|_| Error::Validation(format!("response '{}' is not in the data", fit.formula.response)))?;
    let yhat = predict(fit, data)?;
    let cells = y.cells().zip(yhat.cells()).map(|(a, b)| Some(a? - b?)).collect();
    Ok(Column::from_options("residual", cells))
}

pub(crate) fn logistic_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn two_sided_normal_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    2.0 * Normal::standard().cdf(-z.abs())
}

pub(crate) fn two_sided_t_p(t: f64, df: usize) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    match StudentsT::new(0.0, 1.0, df as f64) {
        Ok(d) => 2.0 * d.cdf(-t.abs()),
        Err(_) => f64::NAN,
    }
}

fn sample_sd(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let mean = v.clone().sum::<f64>() / n;
    (v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// `b_j * sd(x_j) / sd(y)`, with 0 for the intercept column.
pub(crate) fn standardized(design: &Design, b: &[f64], has_intercept: bool) -> Vec<f64> {
    let sy = sample_sd(design.y.iter().copied());
    b.iter()
        .enumerate()
        .map(|(j, bj)| {
            if has_intercept && j == 0 {
                0.0
            } else {
                bj * sample_sd(design.x.column(j).iter().copied()) / sy
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wald_examples() {
        let (c, p) = chisq_from_stat(35.143);
        assert!((c - 1235.03).abs() < 0.01);
        assert!(p < 1e-100);
        assert_eq!(chisq_from_stat(0.0), (0.0, 1.0));
        assert!((chisq_from_stat(25.730).0 - 662.03).abs() < 0.01);
    }

    #[test]
    fn family_names() {
        assert_eq!("binomial".parse::<Family>().unwrap(), Family::Binomial);
        assert!("poisson".parse::<Family>().is_err());
        assert_eq!(serde_json::to_string(&Family::Ordered).unwrap(), "\"ordered\"");
    }

    #[test]
    fn logistic_cdf_is_stable() {
        assert_eq!(logistic_cdf(0.0), 0.5);
        assert!(logistic_cdf(-800.0) >= 0.0 && logistic_cdf(800.0) == 1.0);
        assert!((logistic_cdf(2.0) + logistic_cdf(-2.0) - 1.0).abs() < 1e-15);
    }
}
