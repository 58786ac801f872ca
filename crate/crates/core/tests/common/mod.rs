//! Independent reference computations for integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use biaslab_core::simcore::{ScmSpec, SourceKind};
use nalgebra::{DMatrix, DVector};

/// Population moments of a linear-Gaussian SCM, found by expressing every
/// variable as a linear combination of independent standard normals.
pub struct Moments {
    pub names: Vec<String>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Moments {
    fn idx(&self, name: &str) -> usize {
        self.names.iter().position(|n| n == name).unwrap_or_else(|| panic!("no variable {name}"))
    }

    pub fn cov_of(&self, a: &str, b: &str) -> f64 {
        self.cov[(self.idx(a), self.idx(b))]
    }

    /// Population OLS coefficients of `y` on `xs` (slopes only).
    pub fn regression(&self, y: &str, xs: &[&str]) -> Vec<f64> {
        let k = xs.len();
        let sxx = DMatrix::from_fn(k, k, |i, j| self.cov_of(xs[i], xs[j]));
        let sxy = DVector::from_fn(k, |i, _| self.cov_of(xs[i], y));
        let b = sxx.lu().solve(&sxy).expect("non-singular population covariance");
        b.iter().copied().collect()
    }
}

pub fn linear_gaussian_moments(spec: &ScmSpec) -> Moments {
    // loading vectors grow as innovations are introduced
    let mut loadings: BTreeMap<String, (f64, Vec<f64>)> = BTreeMap::new();
    let mut order = Vec::new();
    let mut n_innov = 0usize;
    let fresh = |sd: f64, loads: &mut Vec<f64>, n_innov: &mut usize| {
        loads.resize(*n_innov + 1, 0.0);
        loads[*n_innov] = sd;
        *n_innov += 1;
    };
    for s in &spec.sources {
        let SourceKind::Normal { mean, sd } = s.kind else { panic!("oracle handles normal sources only") };
        let mut l = Vec::new();
        fresh(sd, &mut l, &mut n_innov);
        loadings.insert(s.name.clone(), (mean, l));
        order.push(s.name.clone());
    }
    for eq in &spec.equations {
        assert!(eq.interactions.is_empty() && eq.squares.is_empty() && eq.group_error.is_none());
        let mut mean = eq.intercept;
        let mut l = vec![0.0; n_innov];
        for (src, c) in &eq.linear {
            let (m, sl) = &loadings[src];
            mean += c * m;
            for (i, v) in sl.iter().enumerate() {
                l[i] += c * v;
            }
        }
        if let Some(e) = &eq.error {
            assert!(e.sd_expr.is_none());
            mean += e.coef * e.mean;
            fresh(e.coef * e.sd, &mut l, &mut n_innov);
        }
        loadings.insert(eq.target.clone(), (mean, l));
        order.push(eq.target.clone());
    }
    let p = order.len();
    let mut lmat = DMatrix::zeros(p, n_innov);
    let mut mean = DVector::zeros(p);
    for (r, name) in order.iter().enumerate() {
        let (m, l) = &loadings[name];
        mean[r] = *m;
        for (c, v) in l.iter().enumerate() {
            lmat[(r, c)] = *v;
        }
    }
    Moments { names: order, mean, cov: &lmat * lmat.transpose() }
}

/// Solves the normal equations with Gaussian elimination and partial pivoting.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
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
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..p {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=p {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..p).map(|i| a[i][p] / a[i][i]).collect()
}

/// Logistic regression by plain Newton iterations on the log-likelihood.
pub fn newton_logistic(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = x[0].len();
    let mut b = vec![0.0; p];
    let mut info = DMatrix::<f64>::zeros(p, p);
    for _ in 0..100 {
        let mut grad = DVector::<f64>::zeros(p);
        info = DMatrix::zeros(p, p);
        for (row, yi) in x.iter().zip(y) {
            let eta: f64 = row.iter().zip(&b).map(|(a, c)| a * c).sum();
            let mu = 1.0 / (1.0 + (-eta).exp());
            for i in 0..p {
                grad[i] += (yi - mu) * row[i];
                for j in 0..p {
                    info[(i, j)] += mu * (1.0 - mu) * row[i] * row[j];
                }
            }
        }
        let step = info.clone().lu().solve(&grad).expect("information matrix invertible");
        for i in 0..p {
            b[i] += step[i];
        }
        if step.norm() < 1e-13 {
            break;
        }
    }
    let cov = info.try_inverse().expect("invertible");
    let se = (0..p).map(|i| cov[(i, i)].sqrt()).collect();
    (b, se)
}

/// Spearman correlation from a quadratic-time rank count with tie averaging.
pub fn naive_spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| {
                let less = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    };
    pearson(&rank(x), &rank(y))
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Median of a non-empty slice.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}
