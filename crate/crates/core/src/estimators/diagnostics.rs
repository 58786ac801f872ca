use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::ols::least_squares;
use super::Formula;
use crate::datakit::Dataset;
use crate::error::{Error, Result};

/// Tolerance/VIF per predictor plus the eigen-structure of the predictor
/// correlation matrix. Eigenvalues are sorted in descending order and
/// include a unit eigenvalue for the centered intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollinearityReport {
    pub terms: Vec<String>,
    pub tolerance: Vec<f64>,
    pub vif: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub condition_indices: Vec<f64>,
}

pub fn collinearity_diagnostics(data: &Dataset, formula: &Formula) -> Result<CollinearityReport> {
    let design = formula.design(data)?;
    let skip = usize::from(formula.intercept);
    let k = design.x.ncols() - skip;
    if k < 2 {
        return Err(Error::Validation("collinearity diagnostics need at least two predictors".into()));
    }
    let n = design.x.nrows();
    if n <= k + 1 {
        return Err(Error::InsufficientData(format!("{n} complete rows for {k} predictors")));
    }
    let labels: Vec<String> = design.labels[skip..].to_vec();
    // centered, unit-variance predictors
    let mut z = DMatrix::<f64>::zeros(n, k);
    for j in 0..k {
        let col = design.x.column(j + skip);
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        if !(sd > 0.0) {
            return Err(Error::SingularDesign { term: labels[j].clone() });
        }
        for i in 0..n {
            z[(i, j)] = (col[i] - mean) / sd;
        }
    }
    let ls = least_squares(&z, &nalgebra::DVector::zeros(n), &labels)?;
    // (Z^T Z)^{-1} (n-1) is the inverse correlation matrix; its diagonal is the VIF
    let vif: Vec<f64> = (0..k).map(|j| ls.xtx_inv[(j, j)] * (n as f64 - 1.0)).collect();
    let tolerance = vif.iter().map(|v| 1.0 / v).collect();
    let corr = z.transpose() * &z / (n as f64 - 1.0);
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(corr).eigenvalues.iter().copied().collect();
    eigenvalues.push(1.0);
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let max = eigenvalues[0];
    let condition_indices = eigenvalues.iter().map(|l| (max / l).sqrt()).collect();
    Ok(CollinearityReport { terms: labels, tolerance, vif, eigenvalues, condition_indices })
}
