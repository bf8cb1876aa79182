use super::matrix::{cholesky, cholesky_solve, dot, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LogisticOptions {
    /// L2 penalty on the slopes (the intercept is unpenalized).
    pub ridge: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            ridge: 1e-6,
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// Intercept first, then one coefficient per predictor.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Unpenalized log-likelihood at the returned coefficients.
    pub log_likelihood: f64,
    /// Penalized log-likelihood after each accepted Newton step, starting at zero coefficients.
    pub penalized_trace: Vec<f64>,
}

impl LogisticModel {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.coefficients[0] + dot(&self.coefficients[1..], row)
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(row))
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn log_likelihood(design: &Matrix, y: &[bool], beta: &[f64]) -> f64 {
    (0..design.nrows())
        .map(|i| {
            let eta = dot(design.row(i), beta);
            if y[i] {
                -softplus(-eta)
            } else {
                -softplus(eta)
            }
        })
        .sum()
}

fn penalty(beta: &[f64], ridge: f64) -> f64 {
    0.5 * ridge * beta[1..].iter().map(|b| b * b).sum::<f64>()
}

/// Ridge-penalized logistic regression by iteratively reweighted least
/// squares (Newton's method with step halving). `x` holds predictors only.
pub fn logistic_regression_fit(x: &Matrix, y: &[bool], opts: LogisticOptions) -> Result<LogisticModel> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::invalid(format!(
            "labels have {} rows, design has {n}",
            y.len()
        )));
    }
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == n {
        return Err(Error::invalid("logistic regression needs both classes"));
    }
    let design = x.with_intercept();
    let p = design.ncols();
    let mut beta = vec![0.0; p];
    let mut pll = log_likelihood(&design, y, &beta) - penalty(&beta, opts.ridge);
    let mut trace = vec![pll];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let mut grad = vec![0.0; p];
        let mut hess = Matrix::zeros(p, p);
        for i in 0..n {
            let row = design.row(i);
            let mu = sigmoid(dot(row, &beta));
            let resid = if y[i] { 1.0 - mu } else { -mu };
            let w = mu * (1.0 - mu);
            for a in 0..p {
                grad[a] += resid * row[a];
                for b in 0..=a {
                    let v = hess.get(a, b) + w * row[a] * row[b];
                    hess.set(a, b, v);
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess.set(b, a, hess.get(a, b));
            }
        }
        for a in 1..p {
            grad[a] -= opts.ridge * beta[a];
            hess.set(a, a, hess.get(a, a) + opts.ridge);
        }
        // the intercept direction can lose curvature when every fitted
        // probability saturates; a vanishing jitter keeps the solve defined
        if hess.get(0, 0) < 1e-12 {
            hess.set(0, 0, hess.get(0, 0) + 1e-12);
        }
        let l = cholesky(&hess)?;
        let step = cholesky_solve(&l, &grad);

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let cand_pll = log_likelihood(&design, y, &cand) - penalty(&cand, opts.ridge);
            if cand_pll >= pll {
                accepted = Some((cand, cand_pll));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, cand_pll)) = accepted else {
            // no ascent direction left at floating-point resolution
            converged = step.iter().map(|s| s.abs()).fold(0.0, f64::max) < opts.tol.sqrt();
            break;
        };
        let change = beta
            .iter()
            .zip(&cand)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = cand;
        pll = cand_pll;
        trace.push(pll);
        if change < opts.tol {
            converged = true;
            break;
        }
    }

    let log_likelihood = log_likelihood(&design, y, &beta);
    Ok(LogisticModel {
        coefficients: beta,
        converged,
        iterations,
        log_likelihood,
        penalized_trace: trace,
    })
}
