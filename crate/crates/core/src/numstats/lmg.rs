use super::matrix::{cholesky, cholesky_solve, dot, Matrix};
use super::ols::ols_fit;
use crate::error::{Error, Result};

pub const MAX_LMG_PREDICTORS: usize = 8;

/// Variance decomposition of a linear model's R² across predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceDecomposition {
    /// One share per predictor column, in column order.
    pub shares: Vec<f64>,
    pub r2_full: f64,
}

/// LMG relative importance: each predictor's incremental R² averaged over
/// every order of entry into the model.
///
/// Averaging over the `p!` orders is evaluated through subsets: a predictor
/// entering after the set `S` has weight `|S|! (p - |S| - 1)! / p!`.
pub fn lmg_importance(x: &Matrix, y: &[f64]) -> Result<ImportanceDecomposition> {
    let p = x.ncols();
    if p == 0 {
        return Err(Error::invalid("relative importance needs at least one predictor"));
    }
    if p > MAX_LMG_PREDICTORS {
        return Err(Error::invalid(format!(
            "relative importance enumerates all orderings; {p} predictors exceeds {MAX_LMG_PREDICTORS}"
        )));
    }
    // full-rank check first so the error names the collinear column
    let full = ols_fit(x, y)?;

    let n_subsets = 1usize << p;
    let mut r2 = vec![0.0; n_subsets];
    for (mask, slot) in r2.iter_mut().enumerate().skip(1) {
        if mask == n_subsets - 1 {
            *slot = full.r2;
            continue;
        }
        let cols: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
        *slot = ols_fit(&x.select_columns(&cols), y)?.r2;
    }

    Ok(ImportanceDecomposition {
        shares: shares_from_subsets(&r2, p),
        r2_full: full.r2,
    })
}

/// Averages incremental R² over entry orders, given R² for every subset
/// indexed by bitmask.
fn shares_from_subsets(r2: &[f64], p: usize) -> Vec<f64> {
    let n_subsets = 1usize << p;
    let fact: Vec<f64> = (0..=p)
        .scan(1.0, |acc, k| {
            if k > 0 {
                *acc *= k as f64;
            }
            Some(*acc)
        })
        .collect();
    let mut shares = vec![0.0; p];
    for (j, share) in shares.iter_mut().enumerate() {
        let bit = 1 << j;
        for mask in 0..n_subsets {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = fact[s] * fact[p - s - 1] / fact[p];
            *share += w * (r2[mask | bit] - r2[mask]);
        }
    }
    shares
}

/// LMG from a covariance matrix whose last row and column belong to the
/// response. Subset R² is `c' S^-1 c / var(y)`, so the cost does not grow
/// with the number of observations.
pub fn lmg_from_covariance(cov: &Matrix) -> Result<ImportanceDecomposition> {
    let q = cov.nrows();
    if cov.ncols() != q || q < 2 {
        return Err(Error::invalid("covariance must be square with at least one predictor"));
    }
    let p = q - 1;
    if p > MAX_LMG_PREDICTORS {
        return Err(Error::invalid(format!(
            "relative importance enumerates all orderings; {p} predictors exceeds {MAX_LMG_PREDICTORS}"
        )));
    }
    let var_y = cov.get(p, p);
    let n_subsets = 1usize << p;
    let mut r2 = vec![0.0; n_subsets];
    if var_y > 0.0 {
        for (mask, slot) in r2.iter_mut().enumerate().skip(1) {
            let cols: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
            let mut s = Matrix::zeros(cols.len(), cols.len());
            for (a, &i) in cols.iter().enumerate() {
                for (b, &j) in cols.iter().enumerate() {
                    s.set(a, b, cov.get(i, j));
                }
            }
            let c: Vec<f64> = cols.iter().map(|&i| cov.get(i, p)).collect();
            let l = cholesky(&s).map_err(|_| Error::RankDeficient {
                column: *cols.last().expect("nonempty subset"),
            })?;
            let beta = cholesky_solve(&l, &c);
            *slot = dot(&beta, &c) / var_y;
        }
    }
    Ok(ImportanceDecomposition {
        shares: shares_from_subsets(&r2, p),
        r2_full: r2[n_subsets - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn r2_of(x: &Matrix, y: &[f64], cols: &[usize]) -> f64 {
        if cols.is_empty() {
            return 0.0;
        }
        ols_fit(&x.select_columns(cols), y).unwrap().r2
    }

    /// Walks every permutation explicitly.
    fn permutation_oracle(x: &Matrix, y: &[f64]) -> Vec<f64> {
        fn permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
            if k == items.len() {
                out.push(items.clone());
                return;
            }
            for i in k..items.len() {
                items.swap(k, i);
                permute(items, k + 1, out);
                items.swap(k, i);
            }
        }
        let p = x.ncols();
        let mut perms = Vec::new();
        permute(&mut (0..p).collect(), 0, &mut perms);
        let mut shares = vec![0.0; p];
        for perm in &perms {
            let mut entered = Vec::new();
            let mut prev = 0.0;
            for &j in perm {
                entered.push(j);
                let now = r2_of(x, y, &entered);
                shares[j] += now - prev;
                prev = now;
            }
        }
        shares.iter().map(|s| s / perms.len() as f64).collect()
    }

    fn random_data(seed: u64, n: usize, p: usize) -> (Matrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let base: f64 = rng.random_range(-1.0..1.0);
            let row: Vec<f64> = (0..p).map(|j| base * (j as f64 * 0.3) + rng.random_range(-1.0..1.0)).collect();
            y.push(row.iter().enumerate().map(|(j, v)| v * (j + 1) as f64 * 0.4).sum::<f64>() + rng.random_range(-1.0..1.0));
            rows.push(row);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn single_predictor_gets_full_r2() {
        let (x, y) = random_data(1, 30, 1);
        let d = lmg_importance(&x, &y).unwrap();
        assert!((d.shares[0] - d.r2_full).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_predictors_get_marginal_r2() {
        // exactly orthogonal, zero-mean columns
        let c1 = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let c2 = [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let y: Vec<f64> = (0..8).map(|i| 2.0 * c1[i] + 0.5 * c2[i] + [0.3, -0.1, 0.2, 0.0, -0.4, 0.1, 0.2, -0.3][i]).collect();
        let x = Matrix::from_columns(&[c1.to_vec(), c2.to_vec()]).unwrap();
        let d = lmg_importance(&x, &y).unwrap();
        assert!((d.shares[0] - r2_of(&x, &y, &[0])).abs() < 1e-12);
        assert!((d.shares[1] - r2_of(&x, &y, &[1])).abs() < 1e-12);
    }

    #[test]
    fn correlated_pair_matches_hand_enumeration() {
        let (x, y) = random_data(7, 40, 2);
        let d = lmg_importance(&x, &y).unwrap();
        let full = r2_of(&x, &y, &[0, 1]);
        let a = 0.5 * (r2_of(&x, &y, &[0]) + (full - r2_of(&x, &y, &[1])));
        let b = 0.5 * (r2_of(&x, &y, &[1]) + (full - r2_of(&x, &y, &[0])));
        assert!((d.shares[0] - a).abs() < 1e-12);
        assert!((d.shares[1] - b).abs() < 1e-12);
    }

    #[test]
    fn five_predictors_match_permutations_and_sum() {
        let (x, y) = random_data(3, 60, 5);
        let d = lmg_importance(&x, &y).unwrap();
        let oracle = permutation_oracle(&x, &y);
        for (a, b) in d.shares.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((d.shares.iter().sum::<f64>() - d.r2_full).abs() < 1e-9);
        assert!(d.shares.iter().all(|&s| s > -1e-12));
    }

    #[test]
    fn shares_follow_column_permutation() {
        let (x, y) = random_data(9, 50, 4);
        let d = lmg_importance(&x, &y).unwrap();
        let perm = [2, 0, 3, 1];
        let xp = x.select_columns(&perm);
        let dp = lmg_importance(&xp, &y).unwrap();
        for (k, &j) in perm.iter().enumerate() {
            assert!((dp.shares[k] - d.shares[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn covariance_route_matches_regressions() {
        let (x, y) = random_data(21, 80, 5);
        let d = lmg_importance(&x, &y).unwrap();
        let cols: Vec<Vec<f64>> = (0..5).map(|j| x.column(j)).chain(std::iter::once(y.clone())).collect();
        let n = y.len() as f64;
        let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n).collect();
        let mut cov = Matrix::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                let v: f64 = (0..y.len()).map(|r| (cols[i][r] - means[i]) * (cols[j][r] - means[j])).sum();
                cov.set(i, j, v / n);
            }
        }
        let c = lmg_from_covariance(&cov).unwrap();
        assert!((c.r2_full - d.r2_full).abs() < 1e-10);
        for (a, b) in c.shares.iter().zip(&d.shares) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn collinear_design_errors() {
        let c1: Vec<f64> = (0..10).map(|v| v as f64).collect();
        let c2: Vec<f64> = c1.iter().map(|v| 2.0 * v + 1.0).collect();
        let x = Matrix::from_columns(&[c1.clone(), c2]).unwrap();
        assert!(matches!(lmg_importance(&x, &c1), Err(Error::RankDeficient { column: 1 })));
    }
}
