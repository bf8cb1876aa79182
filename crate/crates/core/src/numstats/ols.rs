use super::matrix::{dot, least_squares, Matrix};
use crate::error::{Error, Result};

/// Ordinary least squares fit with an intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// `coefficients[0]` is the intercept, followed by one slope per predictor.
    pub coefficients: Vec<f64>,
    /// Maximum-likelihood residual variance, `SSE / n`.
    pub sigma2: f64,
    /// Coefficient of determination; defined as 0 when the response is constant.
    pub r2: f64,
    pub residuals: Vec<f64>,
}

impl LinearModel {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn slopes(&self) -> &[f64] {
        &self.coefficients[1..]
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.coefficients[0] + dot(&self.coefficients[1..], row)
    }
}

/// Fits `y ~ 1 + x` by least squares. `x` holds predictors only; an
/// intercept column is added here.
pub fn ols_fit(x: &Matrix, y: &[f64]) -> Result<LinearModel> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::invalid(format!(
            "response has {} rows, design has {n}",
            y.len()
        )));
    }
    if n < x.ncols() + 1 {
        return Err(Error::invalid(format!(
            "{n} observations cannot identify {} coefficients",
            x.ncols() + 1
        )));
    }
    if x.row_slice_has_nonfinite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("design or response contains undefined values"));
    }
    let design = x.with_intercept();
    let coefficients = least_squares(&design, y).map_err(|e| match e {
        // report the caller's predictor index, not the padded one
        Error::RankDeficient { column } if column > 0 => Error::RankDeficient { column: column - 1 },
        Error::RankDeficient { .. } => Error::invalid("intercept column is degenerate"),
        other => other,
    })?;
    let residuals: Vec<f64> = (0..n)
        .map(|i| y[i] - dot(design.row(i), &coefficients))
        .collect();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    // relative spread below 1e-14 is rounding noise in a constant response
    let r2 = if sst > n as f64 * (1e-14 * mean.abs()).powi(2) {
        1.0 - sse / sst
    } else {
        0.0
    };
    Ok(LinearModel {
        coefficients,
        sigma2: sse / n as f64,
        r2,
        residuals,
    })
}

impl Matrix {
    fn row_slice_has_nonfinite(&self) -> bool {
        (0..self.nrows()).any(|i| self.row(i).iter().any(|v| !v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_points_interpolate_exactly() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let m = ols_fit(&x, &[1.0, 3.0]).unwrap();
        assert!((m.intercept() - 1.0).abs() < 1e-12);
        assert!((m.slopes()[0] - 2.0).abs() < 1e-12);
        assert!((m.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_response_has_zero_slope_and_r2() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [5.0]]).unwrap();
        let m = ols_fit(&x, &[4.0; 4]).unwrap();
        assert!(m.slopes()[0].abs() < 1e-12);
        assert_eq!(m.r2, 0.0);
    }

    /// Explicit `(X'X)^-1 X'y` by Gauss-Jordan elimination, independent of QR.
    fn normal_equations(x: &Matrix, y: &[f64]) -> Vec<f64> {
        let d = x.with_intercept();
        let p = d.ncols();
        let mut aug = vec![vec![0.0; p + 1]; p];
        for i in 0..p {
            for j in 0..p {
                aug[i][j] = (0..d.nrows()).map(|r| d.get(r, i) * d.get(r, j)).sum();
            }
            aug[i][p] = (0..d.nrows()).map(|r| d.get(r, i) * y[r]).sum();
        }
        for c in 0..p {
            let piv = (c..p)
                .max_by(|&a, &b| aug[a][c].abs().total_cmp(&aug[b][c].abs()))
                .unwrap();
            aug.swap(c, piv);
            let pv = aug[c][c];
            for v in aug[c].iter_mut() {
                *v /= pv;
            }
            for r in 0..p {
                if r != c {
                    let f = aug[r][c];
                    let row_c = aug[c].clone();
                    for (v, rc) in aug[r].iter_mut().zip(row_c) {
                        *v -= f * rc;
                    }
                }
            }
        }
        aug.iter().map(|r| r[p]).collect()
    }

    #[test]
    fn random_system_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<[f64; 2]> = (0..10)
            .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let y: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = ols_fit(&x, &y).unwrap();
        let oracle = normal_equations(&x, &y);
        for (a, b) in m.coefficients.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<[f64; 3]> = (0..50)
            .map(|_| [rng.random(), rng.random::<f64>() * 100.0, rng.random()])
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] + 0.01 * r[1] + rng.random::<f64>()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = ols_fit(&x, &y).unwrap();
        let sum: f64 = m.residuals.iter().sum();
        assert!(sum.abs() < 1e-8);
        for j in 0..3 {
            let col = x.column(j);
            let scale: f64 = col.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            assert!(dot(&col, &m.residuals).abs() < 1e-8 * scale);
        }
    }

    #[test]
    fn collinear_predictor_is_named() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.0]]).unwrap();
        match ols_fit(&x, &[1.0, 0.0, 1.0, 0.0]) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, 1),
            other => panic!("{other:?}"),
        }
    }
}
