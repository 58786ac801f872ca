use nalgebra::DVector;

use super::ols::least_squares;
use super::{logistic_cdf, standardized, two_sided_normal_p, Family, FitResult, Formula};
use crate::datakit::Dataset;
use crate::error::{Error, Result};

const MAX_ITER: usize = 25;
const TOL: f64 = 1e-8;
const EDGE: f64 = 1e-10;

fn binomial_deviance(y: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    let mut d = 0.0;
    for (yi, mi) in y.iter().zip(mu.iter()) {
        let m = mi.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
        d -= 2.0 * if *yi == 1.0 { m.ln() } else { (1.0 - m).ln() };
    }
    d
}

/// Binary logistic regression by iteratively reweighted least squares.
pub fn fit_logistic(data: &Dataset, formula: &Formula) -> Result<FitResult> {
    let design = formula.design(data)?;
    let n = design.y.len();
    let p = design.x.ncols();
    if p == 0 {
        return Err(Error::Validation("formula has no terms".into()));
    }
    if let Some(bad) = design.y.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::DegenerateResponse(format!(
            "binomial response '{}' must be coded 0/1, found {bad}",
            formula.response
        )));
    }
    let ones = design.y.iter().filter(|v| **v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::DegenerateResponse(format!(
            "binomial response '{}' has a single class",
            formula.response
        )));
    }
    if n <= p {
        return Err(Error::InsufficientData(format!("{n} complete rows for {p} coefficients")));
    }

    let x = &design.x;
    let y = &design.y;
    let mut mu = y.map(|v| (v + 0.5) / 2.0);
    let mut eta = mu.map(|m| (m / (1.0 - m)).ln());
    let mut dev = binomial_deviance(y, &mu);
    let mut b = DVector::zeros(p);
    let mut prev_b_norm = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut cov = nalgebra::DMatrix::zeros(p, p);
    let mut warnings = Vec::new();
    let mut growing = false;
    while iterations < MAX_ITER {
        iterations += 1;
        let w = mu.map(|m| (m * (1.0 - m)).max(f64::MIN_POSITIVE));
        let sw = w.map(f64::sqrt);
        let z = DVector::from_iterator(n, (0..n).map(|i| eta[i] + (y[i] - mu[i]) / w[i]));
        let mut xw = x.clone();
        for i in 0..n {
            xw.row_mut(i).scale_mut(sw[i]);
        }
        let zw = z.component_mul(&sw);
        let ls = least_squares(&xw, &zw, &design.labels)?;
        b = ls.b;
        cov = ls.xtx_inv;
        eta = x * &b;
        mu = eta.map(logistic_cdf);
        let new_dev = binomial_deviance(y, &mu);
        let b_norm = b.amax();
        growing = b_norm > prev_b_norm;
        prev_b_norm = b_norm;
        if (new_dev - dev).abs() / (new_dev.abs() + 0.1) < TOL {
            dev = new_dev;
            converged = true;
            break;
        }
        dev = new_dev;
    }
    // final information at the returned estimate
    let w = mu.map(|m| (m * (1.0 - m)).max(f64::MIN_POSITIVE));
    let mut xw = x.clone();
    for i in 0..n {
        xw.row_mut(i).scale_mut(w[i].sqrt());
    }
    if let Ok(ls) = least_squares(&xw, &DVector::zeros(n), &design.labels) {
        cov = ls.xtx_inv;
    }
    let at_edge = mu.iter().any(|m| *m < EDGE || *m > 1.0 - EDGE);
    if at_edge && (growing || !converged) {
        converged = false;
        warnings.push("complete or quasi-complete separation: fitted probabilities of 0 or 1".to_string());
    } else if !converged {
        warnings.push(format!("IRLS did not converge in {MAX_ITER} iterations"));
    }

    let b: Vec<f64> = b.iter().copied().collect();
    let se: Vec<f64> = (0..p).map(|j| cov[(j, j)].sqrt()).collect();
    let stat: Vec<f64> = b.iter().zip(&se).map(|(b, s)| b / s).collect();
    let pv = stat.iter().map(|z| two_sided_normal_p(*z)).collect();
    let null_mu = if formula.intercept { ones as f64 / n as f64 } else { 0.5 };
    let null_deviance = binomial_deviance(y, &DVector::from_element(n, null_mu));
    Ok(FitResult {
        family: Family::Binomial,
        formula: formula.clone(),
        terms: design.labels.clone(),
        beta: standardized(&design, &b, formula.intercept),
        b,
        se,
        stat,
        p: pv,
        cutpoints: Vec::new(),
        cutpoint_names: Vec::new(),
        cutpoint_se: Vec::new(),
        r2: None,
        adj_r2: None,
        sigma: None,
        deviance: dev,
        null_deviance,
        aic: dev + 2.0 * p as f64,
        df_residual: n - p,
        n_used: n,
        n_dropped: design.n_dropped,
        converged,
        iterations,
        warnings,
    })
}
