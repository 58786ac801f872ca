//! Special-purpose generators: exact-correlation normals, integer
//! populations, repeated patterns, outliers and blocked assignment.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::datakit::{Column, Dataset};
use crate::error::{Error, Result};
use crate::rng::RngState;

const EIG_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepeatMode {
    /// Each value repeated `k` times before moving on: `[1,1,2,2]`.
    Each,
    /// The whole pattern repeated `k` times: `[1,2,1,2]`.
    Times,
}

pub fn repeat_pattern(values: &[f64], mode: RepeatMode, k: usize, n: usize) -> Result<Vec<f64>> {
    if values.len() * k != n {
        return Err(Error::Parameter(format!(
            "pattern of length {} repeated {k} times gives {}, not n = {n}",
            values.len(),
            values.len() * k
        )));
    }
    Ok(match mode {
        RepeatMode::Each => values.iter().flat_map(|&v| std::iter::repeat_n(v, k)).collect(),
        RepeatMode::Times => (0..k).flat_map(|_| values.iter().copied()).collect(),
    })
}

/// Normal draws truncated toward zero, then clamped to `[lo, hi]`.
pub fn clamped_integer_normal(n: usize, mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut RngState) -> Result<Vec<f64>> {
    if lo > hi {
        return Err(Error::Parameter(format!("lo {lo} exceeds hi {hi}")));
    }
    Ok(rng.normal_draws(n, mean, sd)?.into_iter().map(|v| v.trunc().clamp(lo, hi)).collect())
}

/// Target for multivariate normal generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrTarget {
    pub names: Vec<String>,
    pub corr: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sds: Option<Vec<f64>>,
    #[serde(default = "default_true")]
    pub empirical_exact: bool,
}

fn default_true() -> bool {
    true
}

impl CorrTarget {
    pub fn new(names: &[&str], corr: Vec<Vec<f64>>) -> Self {
        CorrTarget {
            names: names.iter().map(|s| s.to_string()).collect(),
            corr,
            means: None,
            sds: None,
            empirical_exact: true,
        }
    }

    fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::Validation("correlation target has no variables".into()));
        }
        if self.corr.len() != d || self.corr.iter().any(|r| r.len() != d) {
            return Err(Error::Validation(format!("correlation matrix must be {d} x {d}")));
        }
        for i in 0..d {
            if (self.corr[i][i] - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..i {
                if (self.corr[i][j] - self.corr[j][i]).abs() > 1e-12 {
                    return Err(Error::Validation(format!("correlation matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        if self.means.as_ref().is_some_and(|m| m.len() != d) {
            return Err(Error::Validation("means length differs from matrix dimension".into()));
        }
        if let Some(s) = &self.sds {
            if s.len() != d {
                return Err(Error::Validation("sds length differs from matrix dimension".into()));
            }
            if s.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Validation("sds must be positive".into()));
            }
        }
        Ok(())
    }

    fn matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.corr[i][j])
    }
}

/// Symmetric square root `V diag(sqrt(l)) V^T`; fails if the matrix has a
/// clearly negative eigenvalue.
fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.max().abs().max(1.0);
    if eig.eigenvalues.min() < -EIG_TOL * max {
        return Err(Error::Decomposition(format!(
            "matrix is not positive semi-definite (smallest eigenvalue {})",
            eig.eigenvalues.min()
        )));
    }
    let s = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&s) * eig.eigenvectors.transpose())
}

/// Draws `n` rows of multivariate normal data. With `empirical_exact`, the
/// sample correlation matrix, means and sds equal the targets to rounding.
pub fn mvn_exact(target: &CorrTarget, n: usize, rng: &mut RngState) -> Result<Dataset> {
    target.validate()?;
    let d = target.dim();
    let root = sym_sqrt(&target.matrix())?;
    if target.empirical_exact && n <= d {
        return Err(Error::Rank(format!("exact empirical generation needs n > {d}, got {n}")));
    }
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    // row-major fill keeps the draw order independent of storage layout
    let mut z = DMatrix::<f64>::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            z[(i, j)] = rng.standard_normal();
        }
    }
    if target.empirical_exact {
        for j in 0..d {
            let m = z.column(j).mean();
            z.column_mut(j).add_scalar_mut(-m);
        }
        let cov = z.transpose() * &z / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let max = eig.eigenvalues.max();
        if eig.eigenvalues.min() <= EIG_TOL * max {
            return Err(Error::Rank("sample covariance is rank deficient".into()));
        }
        let inv_sqrt = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
            * eig.eigenvectors.transpose();
        z = z * inv_sqrt;
    }
    let x = z * root;
    let columns = (0..d)
        .map(|j| {
            let sd = target.sds.as_ref().map_or(1.0, |s| s[j]);
            let mean = target.means.as_ref().map_or(0.0, |m| m[j]);
            Column::new(target.names[j].clone(), x.column(j).iter().map(|v| mean + sd * v).collect())
        })
        .collect();
    Dataset::from_columns(columns)
}

/// Returns a copy of `data` with one appended row; unassigned columns are missing.
pub fn inject_outlier(data: &Dataset, assignments: &BTreeMap<String, f64>) -> Result<Dataset> {
    let mut out = data.clone();
    out.append_row(assignments)?;
    Ok(out)
}

/// Assigns half of each stratum to treatment (1) uniformly at random. Odd
/// strata give the extra unit to treatment on a fair coin flip.
pub fn block_randomize(strata: &Column, rng: &mut RngState) -> Result<Column> {
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, s) in strata.cells().enumerate() {
        let v = s.ok_or_else(|| Error::Stratification(format!("stratum missing at row {i}")))?;
        // bit pattern keys keep non-integer strata distinct and ordered deterministically
        groups.entry(v.to_bits() as i64).or_default().push(i);
    }
    let mut out = vec![0.0; strata.len()];
    for rows in groups.values() {
        let m = rows.len();
        if m < 2 {
            return Err(Error::Stratification(format!(
                "stratum containing row {} has fewer than 2 members",
                rows[0]
            )));
        }
        let mut treated = m / 2;
        if m % 2 == 1 && rng.uniform_int(0, 1)? == 1 {
            treated += 1;
        }
        for k in rng.sample_indices(m, treated, false)? {
            out[rows[k]] = 1.0;
        }
    }
    Ok(Column::new("treatment", out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::pearson;
    use proptest::prelude::*;

    #[test]
    fn repeat_examples() {
        assert_eq!(repeat_pattern(&[1.0, 2.0], RepeatMode::Each, 2, 4).unwrap(), vec![1.0, 1.0, 2.0, 2.0]);
        assert_eq!(
            repeat_pattern(&[0.0, 1.0], RepeatMode::Times, 3, 6).unwrap(),
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]
        );
        let v = repeat_pattern(&[1.0, 2.0, 3.0, 4.0, 5.0], RepeatMode::Each, 200, 1000).unwrap();
        for level in 1..=5 {
            assert_eq!(v.iter().filter(|&&x| x == level as f64).count(), 200);
        }
        assert!(repeat_pattern(&[1.0, 2.0], RepeatMode::Each, 2, 5).is_err());
    }

    #[test]
    fn truncation_toward_zero() {
        assert_eq!(2.9f64.trunc(), 2.0);
        assert_eq!((-0.7f64).trunc(), 0.0);
        let v = clamped_integer_normal(10, 7.0, 0.0, 0.0, 100.0, &mut RngState::new(1, 0)).unwrap();
        assert!(v.iter().all(|&x| x == 7.0));
        assert!(clamped_integer_normal(1, 0.0, 1.0, 3.0, 2.0, &mut RngState::new(1, 0)).is_err());
    }

    #[test]
    fn clamped_population_shape() {
        let v = clamped_integer_normal(500_000, 12.0, 2.5, 4.0, 19.0, &mut RngState::new(42, 0)).unwrap();
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((min, max), (4.0, 19.0));
        let mut counts = BTreeMap::new();
        for x in &v {
            *counts.entry(*x as i64).or_insert(0usize) += 1;
        }
        let mode = counts.iter().max_by_key(|(_, c)| **c).unwrap().0;
        assert!((11..=12).contains(mode), "mode {mode}");
    }

    fn identity(d: usize) -> Vec<Vec<f64>> {
        (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    }

    #[test]
    fn identity_target_gives_uncorrelated_sample() {
        let t = CorrTarget::new(&["a", "b", "c"], identity(3));
        let d = mvn_exact(&t, 50, &mut RngState::new(7, 0)).unwrap();
        for i in 0..3 {
            for j in 0..i {
                assert!(pearson(&d.columns()[i], &d.columns()[j]).unwrap().abs() < 1e-10);
            }
        }
    }

    #[test]
    fn non_psd_and_small_n_rejected() {
        let bad = CorrTarget::new(&["a", "b", "c"], vec![
            vec![1.0, 0.9, -0.9],
            vec![0.9, 1.0, 0.9],
            vec![-0.9, 0.9, 1.0],
        ]);
        assert!(matches!(mvn_exact(&bad, 100, &mut RngState::new(1, 0)), Err(Error::Decomposition(_))));
        let t = CorrTarget::new(&["a", "b"], identity(2));
        assert!(matches!(mvn_exact(&t, 2, &mut RngState::new(1, 0)), Err(Error::Rank(_))));
    }

    #[test]
    fn block_examples() {
        let strata = Column::new("s", vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0]);
        let t = block_randomize(&strata, &mut RngState::new(3, 0)).unwrap();
        let first: f64 = t.present()[..6].iter().sum();
        let second: f64 = t.present()[6..].iter().sum();
        assert_eq!((first, second), (3.0, 3.0));
        let one = Column::new("s", vec![0.0; 4]);
        assert_eq!(block_randomize(&one, &mut RngState::new(3, 0)).unwrap().present().iter().sum::<f64>(), 2.0);
        let lonely = Column::new("s", vec![0.0, 0.0, 1.0]);
        assert!(matches!(block_randomize(&lonely, &mut RngState::new(3, 0)), Err(Error::Stratification(_))));
    }

    #[test]
    fn outlier_row_appended() {
        let d = Dataset::from_columns(vec![Column::new("X", vec![1.0, 2.0]), Column::new("Y", vec![1.0, 2.0])]).unwrap();
        let mut a = BTreeMap::new();
        a.insert("X".to_string(), 16.0);
        let o = inject_outlier(&d, &a).unwrap();
        assert_eq!(o.n_rows(), 3);
        assert_eq!(o.column("X").unwrap().get(2), Some(16.0));
        assert_eq!(o.column("Y").unwrap().get(2), None);
        a.insert("Q".to_string(), 1.0);
        assert!(matches!(inject_outlier(&d, &a), Err(Error::Validation(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn exact_moments(seed in any::<u64>(), r in -0.8f64..0.8, mean in -50f64..50.0, sd in 0.1f64..20.0) {
            let mut t = CorrTarget::new(&["a", "b"], vec![vec![1.0, r], vec![r, 1.0]]);
            t.means = Some(vec![mean, -mean]);
            t.sds = Some(vec![sd, 1.0]);
            let d = mvn_exact(&t, 30, &mut RngState::new(seed, 0)).unwrap();
            let a = crate::datakit::summarize(&d.columns()[0]).unwrap();
            prop_assert!((pearson(&d.columns()[0], &d.columns()[1]).unwrap() - r).abs() < 1e-10);
            prop_assert!((a.mean - mean).abs() < 1e-10 * mean.abs().max(1.0));
            prop_assert!((a.sd - sd).abs() < 1e-10 * sd.max(1.0));
        }

        #[test]
        fn odd_strata_split_by_one(sizes in prop::collection::vec(2usize..9, 1..6), seed in any::<u64>()) {
            let labels: Vec<f64> = sizes.iter().enumerate().flat_map(|(g, &m)| std::iter::repeat_n(g as f64, m)).collect();
            let t = block_randomize(&Column::new("s", labels.clone()), &mut RngState::new(seed, 0)).unwrap();
            for (g, &m) in sizes.iter().enumerate() {
                let treated: f64 = labels.iter().zip(t.present()).filter(|(l, _)| **l == g as f64).map(|(_, v)| v).sum();
                prop_assert!(treated as usize == m / 2 || treated as usize == m.div_ceil(2));
            }
        }
    }
}
