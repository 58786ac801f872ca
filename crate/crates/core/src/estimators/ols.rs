use nalgebra::{DMatrix, DVector};

use super::{standardized, two_sided_t_p, Family, FitResult, Formula};
use crate::datakit::Dataset;
use crate::error::{Error, Result};

const RANK_TOL: f64 = 1e-10;

pub(crate) struct LeastSquares {
    pub b: DVector<f64>,
    /// `(X^T X)^{-1}`
    pub xtx_inv: DMatrix<f64>,
}

/// Least squares through a QR factorization of the column-equilibrated
/// design. A diagonal entry of R below `RANK_TOL * max|R_ii|` marks the
/// matching column as (nearly) dependent on the columns before it.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, labels: &[String]) -> Result<LeastSquares> {
    let p = x.ncols();
    let scale: Vec<f64> = (0..p).map(|j| x.column(j).norm()).collect();
    for (j, s) in scale.iter().enumerate() {
        if !(*s > 0.0) || !s.is_finite() {
            return Err(Error::SingularDesign { term: labels[j].clone() });
        }
    }
    let mut xs = x.clone();
    for (j, s) in scale.iter().enumerate() {
        xs.column_mut(j).unscale_mut(*s);
    }
    let qr = xs.qr();
    let r = qr.r();
    let max_diag = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    for j in 0..p {
        if r[(j, j)].abs() < RANK_TOL * max_diag {
            return Err(Error::SingularDesign { term: labels[j].clone() });
        }
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let qty = qty.rows(0, p).into_owned();
    let bs = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularDesign { term: labels[p - 1].clone() })?;
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::SingularDesign { term: labels[p - 1].clone() })?;
    let mut cov = &rinv * rinv.transpose();
    for i in 0..p {
        for j in 0..p {
            cov[(i, j)] /= scale[i] * scale[j];
        }
    }
    let b = DVector::from_iterator(p, (0..p).map(|j| bs[j] / scale[j]));
    Ok(LeastSquares { b, xtx_inv: cov })
}

/// Ordinary least squares with listwise deletion.
pub fn fit_ols(data: &Dataset, formula: &Formula) -> Result<FitResult> {
    let design = formula.design(data)?;
    let n = design.y.len();
    let p = design.x.ncols();
    if p == 0 {
        return Err(Error::Validation("formula has no terms".into()));
    }
    if n <= p {
        return Err(Error::InsufficientData(format!("{n} complete rows for {p} coefficients")));
    }
    let ls = least_squares(&design.x, &design.y, &design.labels)?;
    let resid = &design.y - &design.x * &ls.b;
    let rss = resid.norm_squared();
    let df = n - p;
    let sigma2 = rss / df as f64;
    let se: Vec<f64> = (0..p).map(|j| (sigma2 * ls.xtx_inv[(j, j)]).sqrt()).collect();
    let b: Vec<f64> = ls.b.iter().copied().collect();
    let stat: Vec<f64> = b.iter().zip(&se).map(|(b, s)| b / s).collect();
    let pv = stat.iter().map(|t| two_sided_t_p(*t, df)).collect();
    let tss = if formula.intercept {
        let m = design.y.mean();
        design.y.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    } else {
        design.y.norm_squared()
    };
    let r2 = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { f64::NAN };
    let k0 = if formula.intercept { 1.0 } else { 0.0 };
    let adj = 1.0 - (1.0 - r2) * (n as f64 - k0) / df as f64;
    let nf = n as f64;
    let aic = nf * ((2.0 * std::f64::consts::PI * rss / nf).ln() + 1.0) + 2.0 * (p as f64 + 1.0);
    Ok(FitResult {
        family: Family::Gaussian,
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
        r2: Some(r2),
        adj_r2: Some(adj.min(r2)),
        sigma: Some(sigma2.sqrt()),
        deviance: rss,
        null_deviance: tss,
        aic,
        df_residual: df,
        n_used: n,
        n_dropped: design.n_dropped,
        converged: true,
        iterations: 1,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::{pearson, Column};
    use crate::estimators::{residuals, Term};
    use crate::rng::RngState;
    use proptest::prelude::*;

    fn ds(cols: &[(&str, Vec<f64>)]) -> Dataset {
        Dataset::from_columns(cols.iter().map(|(n, v)| Column::new(*n, v.clone())).collect()).unwrap()
    }

    #[test]
    fn exact_line() {
        let d = ds(&[("x", vec![0.0, 1.0, 2.0]), ("y", vec![1.0, 3.0, 5.0])]);
        let f = fit_ols(&d, &Formula::linear("y", &["x"])).unwrap();
        assert!((f.b[0] - 1.0).abs() < 1e-12 && (f.b[1] - 2.0).abs() < 1e-12);
        assert!((f.r2.unwrap() - 1.0).abs() < 1e-12);
        assert!(f.sigma.unwrap() < 1e-12);
    }

    #[test]
    fn singular_design_names_term() {
        let d = ds(&[("x", vec![0.0, 1.0, 2.0, 3.0]), ("z", vec![0.0, 2.0, 4.0, 6.0]), ("y", vec![1.0, 3.0, 2.0, 5.0])]);
        match fit_ols(&d, &Formula::linear("y", &["x", "z"])) {
            Err(Error::SingularDesign { term }) => assert_eq!(term, "z"),
            other => panic!("{other:?}"),
        }
        let c = ds(&[("x", vec![2.0; 4]), ("y", vec![1.0, 3.0, 2.0, 5.0])]);
        assert!(matches!(fit_ols(&c, &Formula::linear("y", &["x"])), Err(Error::SingularDesign { .. })));
    }

    #[test]
    fn insufficient_rows() {
        let d = ds(&[("x", vec![0.0, 1.0]), ("y", vec![1.0, 3.0])]);
        assert!(matches!(fit_ols(&d, &Formula::linear("y", &["x"])), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn listwise_counts_dropped_rows() {
        let d = Dataset::from_columns(vec![
            Column::from_options("x", vec![Some(0.0), Some(1.0), None, Some(3.0), Some(4.0)]),
            Column::from_options("y", vec![Some(1.0), None, Some(2.0), Some(2.5), Some(4.0)]),
            Column::from_options("w", vec![None, Some(1.0), Some(2.0), Some(2.5), Some(4.0)]),
        ])
        .unwrap();
        let f = fit_ols(&d, &Formula::linear("y", &["x"])).unwrap();
        assert_eq!((f.n_used, f.n_dropped), (3, 2));
    }

    fn random_data(seed: u64, n: usize) -> Dataset {
        let mut rng = RngState::new(seed, 0);
        let x = rng.normal_draws(n, 1.0, 2.0).unwrap();
        let z = rng.normal_draws(n, -3.0, 0.5).unwrap();
        let e = rng.normal_draws(n, 0.0, 1.0).unwrap();
        let y = (0..n).map(|i| 0.5 + 1.5 * x[i] - 2.0 * z[i] + 0.3 * x[i] * z[i] + e[i]).collect();
        ds(&[("x", x), ("z", z), ("y", y)])
    }

    // Normal-equation oracle: solve (X^T X) b = X^T y with Gaussian elimination.
    fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let p = x[0].len();
        let mut a = vec![vec![0.0; p + 1]; p];
        for (row, yi) in x.iter().zip(y) {
            for i in 0..p {
                for j in 0..p {
                    a[i][j] += row[i] * row[j];
                }
                a[i][p] += row[i] * yi;
            }
        }
        for c in 0..p {
            let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            for r in 0..p {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=p {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        (0..p).map(|i| a[i][p] / a[i][i]).collect()
    }

    #[test]
    fn matches_normal_equations() {
        for seed in 0..100 {
            let d = random_data(seed, 40);
            let f = Formula::parse("y ~ x + z + x:z").unwrap();
            let fit = fit_ols(&d, &f).unwrap();
            let (x, z, y) = (
                d.column("x").unwrap().present(),
                d.column("z").unwrap().present(),
                d.column("y").unwrap().present(),
            );
            let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![1.0, x[i], z[i], x[i] * z[i]]).collect();
            let oracle = normal_equations(&rows, &y);
            for (a, b) in fit.b.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-8, "seed {seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn bivariate_beta_is_pearson() {
        let d = random_data(11, 200);
        let fit = fit_ols(&d, &Formula::linear("y", &["x"])).unwrap();
        let r = pearson(d.column("x").unwrap(), d.column("y").unwrap()).unwrap();
        assert!((fit.beta[1] - r).abs() < 1e-10);
        assert!((fit.r2.unwrap() - r * r).abs() < 1e-10);
        assert_eq!(fit.beta[0], 0.0);
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let d = random_data(5, 100);
        let f = Formula::new("y", vec![Term::Main("x".into()), Term::Square("z".into())], true).unwrap();
        let fit = fit_ols(&d, &f).unwrap();
        let e = residuals(&fit, &d).unwrap().present();
        let x = d.column("x").unwrap().present();
        let z = d.column("z").unwrap().present();
        assert!(e.iter().sum::<f64>().abs() < 1e-8);
        assert!(e.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>().abs() < 1e-8);
        assert!(e.iter().zip(&z).map(|(a, b)| a * b * b).sum::<f64>().abs() < 1e-7);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn affine_response_equivariance(seed in 0u64..1000, a in 0.01f64..100.0, c in -100f64..100.0) {
            let d = random_data(seed, 60);
            let y2: Vec<f64> = d.column("y").unwrap().present().iter().map(|v| a * v + c).collect();
            let mut d2 = d.clone();
            d2.set_column(Column::new("y", y2)).unwrap();
            let f = Formula::linear("y", &["x", "z"]);
            let (f1, f2) = (fit_ols(&d, &f).unwrap(), fit_ols(&d2, &f).unwrap());
            for j in 1..3 {
                prop_assert!((f2.b[j] - a * f1.b[j]).abs() < 1e-10 * (a * f1.b[j]).abs().max(1.0));
                prop_assert!((f2.se[j] - a * f1.se[j]).abs() < 1e-10 * (a * f1.se[j]).max(1.0));
                prop_assert!((f2.stat[j] - f1.stat[j]).abs() < 1e-10 * f1.stat[j].abs().max(1.0));
                prop_assert!((f2.beta[j] - f1.beta[j]).abs() < 1e-10);
            }
            prop_assert!((f2.r2.unwrap() - f1.r2.unwrap()).abs() < 1e-10);
        }
    }
}
