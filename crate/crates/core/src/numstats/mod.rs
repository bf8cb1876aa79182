//! Self-contained numerical-statistics kernel: least squares, rank
//! correlation, penalized logistic regression, LMG relative importance,
//! percentile bootstrap, t-tests, and chi-square tails.

mod bootstrap;
mod folds;
mod hypothesis;
mod lmg;
mod logistic;
mod matrix;
mod ols;
mod rank;
pub mod special;

pub use bootstrap::{percentile_bootstrap, percentile_bootstrap_vec, resample_indices, substream, BootstrapInterval, BootstrapOptions};
pub use folds::kfold_balanced;
pub use hypothesis::{paired_t, welch_one_tailed_t, TTest};
pub use lmg::{lmg_from_covariance, lmg_importance, ImportanceDecomposition, MAX_LMG_PREDICTORS};
pub use logistic::{logistic_regression_fit, sigmoid, LogisticModel, LogisticOptions};
pub use matrix::{cholesky, cholesky_inverse, cholesky_solve, dot, least_squares, Matrix};
pub use ols::{ols_fit, LinearModel};
pub use rank::{mid_ranks, pearson, spearman_rho};
pub use special::{chi_square_sf, normal_sf, student_t_sf};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// Linear-interpolation quantile of already sorted data, `q` in [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Percentile (0-100) of unsorted data by linear interpolation.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, pct / 100.0)
}

