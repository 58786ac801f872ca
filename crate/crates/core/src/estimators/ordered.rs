//! Proportional-odds ordered logit: `P(Y <= k | x) = F(zeta_k - x beta)`.
//!
//! Newton's method runs on `(beta, zeta_1, log(zeta_2 - zeta_1), ...)` so the
//! cutpoints stay ordered; standard errors come from the Hessian in
//! `(beta, zeta)`.

use nalgebra::{DMatrix, DVector};

use super::{logistic_cdf, standardized, two_sided_normal_p, Family, FitResult, Formula};
use crate::datakit::Dataset;
use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const TOL: f64 = 1e-8;

struct Problem<'a> {
    x: &'a DMatrix<f64>,
    /// 0-based category of each row.
    cat: Vec<usize>,
    k: usize,
}

struct Eval {
    loglik: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

fn density(a: f64) -> (f64, f64, f64) {
    if !a.is_finite() {
        let f = if a > 0.0 { 1.0 } else { 0.0 };
        return (f, 0.0, 0.0);
    }
    let f = logistic_cdf(a);
    let d = f * (1.0 - f);
    (f, d, d * (1.0 - 2.0 * f))
}

impl Problem<'_> {
    fn n_beta(&self) -> usize {
        self.x.ncols()
    }

    fn zeta(&self, phi: &DVector<f64>) -> Vec<f64> {
        let q = self.n_beta();
        let mut z = Vec::with_capacity(self.k - 1);
        let mut cur = phi[q];
        z.push(cur);
        for j in 1..self.k - 1 {
            cur += phi[q + j].exp();
            z.push(cur);
        }
        z
    }

    fn loglik_theta(&self, beta: &[f64], zeta: &[f64]) -> f64 {
        let mut ll = 0.0;
        for (i, &c) in self.cat.iter().enumerate() {
            let eta: f64 = self.x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
            let pr = self.prob(c, eta, zeta);
            if pr <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += pr.ln();
        }
        ll
    }

    fn bounds(&self, c: usize, eta: f64, zeta: &[f64]) -> (f64, f64) {
        let upper = if c < self.k - 1 { zeta[c] - eta } else { f64::INFINITY };
        let lower = if c > 0 { zeta[c - 1] - eta } else { f64::NEG_INFINITY };
        (upper, lower)
    }

    fn prob(&self, c: usize, eta: f64, zeta: &[f64]) -> f64 {
        let (a, b) = self.bounds(c, eta, zeta);
        // use the upper tail when both bounds are positive to avoid cancellation
        if b > 0.0 {
            logistic_cdf(-b) - logistic_cdf(-a)
        } else {
            logistic_cdf(a) - logistic_cdf(b)
        }
    }

    /// Log-likelihood, gradient and Hessian in theta = (beta, zeta).
    fn eval_theta(&self, beta: &[f64], zeta: &[f64]) -> Eval {
        let q = self.n_beta();
        let m = q + self.k - 1;
        let mut grad = DVector::zeros(m);
        let mut hess = DMatrix::zeros(m, m);
        let mut loglik = 0.0;
        for (i, &c) in self.cat.iter().enumerate() {
            let xi = self.x.row(i);
            let eta: f64 = xi.iter().zip(beta).map(|(a, b)| a * b).sum();
            let (a, b) = self.bounds(c, eta, zeta);
            let pr = self.prob(c, eta, zeta).max(f64::MIN_POSITIVE);
            loglik += pr.ln();
            let (_, u, du) = density(a);
            let (_, v, dv) = density(b);
            let hi = (c < self.k - 1).then(|| q + c);
            let lo = (c > 0).then(|| q + c - 1);
            let p2 = pr * pr;
            let uv = u - v;
            for j in 0..q {
                grad[j] -= xi[j] * uv / pr;
                for l in 0..q {
                    hess[(j, l)] += xi[j] * xi[l] * ((du - dv) / pr - uv * uv / p2);
                }
            }
            if let Some(h) = hi {
                grad[h] += u / pr;
                hess[(h, h)] += du / pr - u * u / p2;
                for j in 0..q {
                    let v = -xi[j] * (du / pr - uv * u / p2);
                    hess[(j, h)] += v;
                    hess[(h, j)] += v;
                }
            }
            if let Some(l) = lo {
                grad[l] -= v / pr;
                hess[(l, l)] += -dv / pr - v * v / p2;
                for j in 0..q {
                    let w = -xi[j] * (-dv / pr + uv * v / p2);
                    hess[(j, l)] += w;
                    hess[(l, j)] += w;
                }
            }
            if let (Some(h), Some(l)) = (hi, lo) {
                let w = u * v / p2;
                hess[(h, l)] += w;
                hess[(l, h)] += w;
            }
        }
        Eval { loglik, grad, hess }
    }

    /// Same quantities with respect to phi, via the chain rule.
    fn eval_phi(&self, phi: &DVector<f64>) -> Eval {
        let q = self.n_beta();
        let m = phi.len();
        let beta: Vec<f64> = phi.rows(0, q).iter().copied().collect();
        let zeta = self.zeta(phi);
        let e = self.eval_theta(&beta, &zeta);
        // J[theta_index, phi_index]
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for j in 0..q {
            jac[(j, j)] = 1.0;
        }
        for z in 0..self.k - 1 {
            jac[(q + z, q)] = 1.0;
            for d in 1..=z {
                jac[(q + z, q + d)] = phi[q + d].exp();
            }
        }
        let grad = jac.transpose() * &e.grad;
        let mut hess = jac.transpose() * &e.hess * &jac;
        for d in 1..self.k - 1 {
            let tail: f64 = (d..self.k - 1).map(|z| e.grad[q + z]).sum();
            hess[(q + d, q + d)] += phi[q + d].exp() * tail;
        }
        Eval { loglik: e.loglik, grad, hess }
    }
}

/// Ordered logit by damped Newton iterations. The response must be integer
/// coded with consecutive observed levels; any intercept in the formula is
/// absorbed by the cutpoints.
pub fn fit_ordered_logit(data: &Dataset, formula: &Formula) -> Result<FitResult> {
    let mut f = formula.clone();
    f.intercept = false;
    let design = f.design(data)?;
    let n = design.y.len();
    if n == 0 {
        return Err(Error::InsufficientData("no complete rows".into()));
    }
    let mut levels: Vec<i64> = Vec::new();
    for v in design.y.iter() {
        if v.fract() != 0.0 {
            return Err(Error::Level(format!("ordered response '{}' has non-integer value {v}", f.response)));
        }
        levels.push(*v as i64);
    }
    levels.sort_unstable();
    levels.dedup();
    if levels.len() < 2 {
        return Err(Error::DegenerateResponse(format!("ordered response '{}' has a single level", f.response)));
    }
    for w in levels.windows(2) {
        if w[1] != w[0] + 1 {
            return Err(Error::Level(format!(
                "ordered response '{}' has no observations at level {}",
                f.response,
                w[0] + 1
            )));
        }
    }
    let k = levels.len();
    let q = design.x.ncols();
    if n <= q + k - 1 {
        return Err(Error::InsufficientData(format!("{n} complete rows for {} parameters", q + k - 1)));
    }
    let cat: Vec<usize> = design.y.iter().map(|v| (*v as i64 - levels[0]) as usize).collect();
    let mut counts = vec![0usize; k];
    for &c in &cat {
        counts[c] += 1;
    }
    let prob = Problem { x: &design.x, cat, k };

    // start: beta = 0, zeta = logit of cumulative proportions
    let mut phi = DVector::zeros(q + k - 1);
    let mut cum = 0usize;
    let mut prev = 0.0;
    for j in 0..k - 1 {
        cum += counts[j];
        let pc = cum as f64 / n as f64;
        let z = (pc / (1.0 - pc)).ln();
        if j == 0 {
            phi[q] = z;
        } else {
            phi[q + j] = (z - prev).ln();
        }
        prev = z;
    }

    let mut cur = prob.eval_phi(&phi);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let neg_h = -&cur.hess;
        let mut lambda = 0.0;
        let step = loop {
            let mut a = neg_h.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda;
            }
            if let Some(ch) = a.cholesky() {
                break ch.solve(&cur.grad);
            }
            lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
            if lambda > 1e12 {
                break cur.grad.clone();
            }
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &phi + &step * t;
            let ll = {
                let beta: Vec<f64> = cand.rows(0, q).iter().copied().collect();
                prob.loglik_theta(&beta, &prob.zeta(&cand))
            };
            if ll.is_finite() && ll >= cur.loglik - 1e-12 * cur.loglik.abs() {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        let Some(next) = accepted else { break };
        let next_eval = prob.eval_phi(&next);
        let delta = (next_eval.loglik - cur.loglik).abs();
        phi = next;
        cur = next_eval;
        if delta < TOL {
            converged = true;
            break;
        }
    }

    let beta: Vec<f64> = phi.rows(0, q).iter().copied().collect();
    let zeta = prob.zeta(&phi);
    let e = prob.eval_theta(&beta, &zeta);
    let m = q + k - 1;
    let cov = (-&e.hess).try_inverse().unwrap_or_else(|| DMatrix::from_element(m, m, f64::NAN));
    let se_all: Vec<f64> = (0..m).map(|j| cov[(j, j)].sqrt()).collect();
    let se: Vec<f64> = se_all[..q].to_vec();
    let stat: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b / s).collect();
    let pv = stat.iter().map(|t| two_sided_normal_p(*t)).collect();
    let deviance = -2.0 * e.loglik;
    let null_deviance = -2.0 * counts.iter().map(|&c| c as f64 * (c as f64 / n as f64).ln()).sum::<f64>();
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!("Newton iterations did not converge in {MAX_ITER} steps"));
    }
    Ok(FitResult {
        family: Family::Ordered,
        formula: f.clone(),
        terms: design.labels.clone(),
        beta: standardized(&design, &beta, false),
        b: beta,
        se,
        stat,
        p: pv,
        cutpoint_names: levels.windows(2).map(|w| format!("{}|{}", w[0], w[1])).collect(),
        cutpoints: zeta,
        cutpoint_se: se_all[q..].to_vec(),
        r2: None,
        adj_r2: None,
        sigma: None,
        deviance,
        null_deviance,
        aic: deviance + 2.0 * m as f64,
        df_residual: n - m,
        n_used: n,
        n_dropped: design.n_dropped,
        converged,
        iterations,
        warnings,
    })
}
