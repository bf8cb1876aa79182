//! Small dense row-major matrices and the two factorizations the kernel needs:
//! Householder QR for least squares and Cholesky for symmetric positive
//! definite systems (Newton steps, inverse information).

use crate::error::{Error, Result};

/// Relative threshold below which a column is treated as a linear
/// combination of the columns before it.
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn from_row_major(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::invalid(format!(
                "matrix data has {} entries, expected {nrows}x{ncols}",
                data.len()
            )));
        }
        Ok(Self { nrows, ncols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(Error::invalid(format!(
                    "row {i} has {} columns, expected {ncols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            nrows: rows.len(),
            ncols,
            data,
        })
    }

    /// Builds an `n x columns.len()` matrix from column vectors.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let nrows = columns.first().map_or(0, |c| c.as_ref().len());
        let ncols = columns.len();
        let mut m = Self::zeros(nrows, ncols);
        for (j, c) in columns.iter().enumerate() {
            let c = c.as_ref();
            if c.len() != nrows {
                return Err(Error::invalid(format!(
                    "column {j} has {} rows, expected {nrows}",
                    c.len()
                )));
            }
            for (i, &v) in c.iter().enumerate() {
                m.data[i * ncols + j] = v;
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    /// Rows picked (with repetition allowed) by index.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.ncols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            nrows: idx.len(),
            ncols: self.ncols,
            data,
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(self.nrows, cols.len());
        for i in 0..self.nrows {
            for (jj, &j) in cols.iter().enumerate() {
                m.data[i * cols.len() + jj] = self.get(i, j);
            }
        }
        m
    }

    /// Prepends a column of ones.
    pub fn with_intercept(&self) -> Matrix {
        let p = self.ncols + 1;
        let mut data = Vec::with_capacity(self.nrows * p);
        for i in 0..self.nrows {
            data.push(1.0);
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            nrows: self.nrows,
            ncols: p,
            data,
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.ncols);
        (0..self.nrows).map(|i| dot(self.row(i), v)).collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least-squares solution of `x b = y` by Householder QR.
///
/// Fails with [`Error::RankDeficient`] naming the first column whose residual
/// norm, after projecting out earlier columns, falls below `1e-9` of its
/// original norm.
pub fn least_squares(x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    let (n, p) = (x.nrows, x.ncols);
    if y.len() != n {
        return Err(Error::invalid(format!(
            "response has {} rows, design has {n}",
            y.len()
        )));
    }
    if n < p {
        return Err(Error::invalid(format!(
            "design has {n} rows but {p} columns"
        )));
    }
    // column-major working copy
    let mut a: Vec<Vec<f64>> = (0..p).map(|j| x.column(j)).collect();
    let mut qty = y.to_vec();
    let mut diag = vec![0.0; p];

    for j in 0..p {
        let orig_norm = a[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        let tail_norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if orig_norm == 0.0 || tail_norm <= RANK_TOL * orig_norm {
            return Err(Error::RankDeficient { column: j });
        }
        let alpha = if a[j][j] > 0.0 { -tail_norm } else { tail_norm };
        // v = x - alpha e1, stored in place of column j's tail
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        diag[j] = alpha;
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(j + 1) {
                let s = 2.0 * dot(&v, &col[j..]) / vnorm2;
                for (c, vi) in col[j..].iter_mut().zip(&v) {
                    *c -= s * vi;
                }
            }
            let s = 2.0 * dot(&v, &qty[j..]) / vnorm2;
            for (c, vi) in qty[j..].iter_mut().zip(&v) {
                *c -= s * vi;
            }
        }
    }

    let mut b = vec![0.0; p];
    for j in (0..p).rev() {
        let mut s = qty[j];
        for (k, bk) in b.iter().enumerate().skip(j + 1) {
            s -= a[k][j] * bk;
        }
        b[j] = s / diag[j];
    }
    Ok(b)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix,
/// given as a square row-major `Matrix`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows;
    if a.ncols != n {
        return Err(Error::invalid("cholesky of a non-square matrix"));
    }
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::numerical(format!(
                        "matrix is not positive definite (pivot {i} = {s:e})"
                    )));
                }
                l.set(i, i, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves `a x = b` given the Cholesky factor `l` of `a`.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.nrows;
    let mut z = b.to_vec();
    for i in 0..n {
        let mut s = z[i];
        for k in 0..i {
            s -= l.get(i, k) * z[k];
        }
        z[i] = s / l.get(i, i);
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l.get(k, i) * z[k];
        }
        z[i] = s / l.get(i, i);
    }
    z
}

/// Inverse of a symmetric positive definite matrix from its Cholesky factor.
pub fn cholesky_inverse(l: &Matrix) -> Matrix {
    let n = l.nrows;
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = cholesky_solve(l, &e);
        for (i, v) in col.into_iter().enumerate() {
            inv.set(i, j, v);
        }
    }
    inv
}
