use std::path::Path;

use super::{Panel, F, PREDICTORS};
use crate::error::{Error, Result};
use crate::numstats::{lmg_from_covariance, percentile_bootstrap_vec, BootstrapInterval, BootstrapOptions, Matrix};
use crate::series::fmt_opt;

#[derive(Debug, Clone, PartialEq)]
pub struct LagRow {
    pub word: String,
    /// 1-based month of the outcome.
    pub t: usize,
    /// `f_t - f_{t-k}`
    pub delta: f64,
    /// All five series at `t - k`, panel order.
    pub x: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagDataset {
    pub k: usize,
    pub rows: Vec<LagRow>,
    /// Word-months skipped because some value was undefined.
    pub dropped: usize,
}

/// Pools `(word, t)` rows for `t` in `k+1..=T`.
pub fn assemble_lag_dataset(panel: &Panel, words: &[String], k: usize) -> Result<LagDataset> {
    let months = panel.months();
    if k == 0 || k >= months {
        return Err(Error::invalid(format!("lag k={k} must be in 1..{months}")));
    }
    let mut rows = Vec::new();
    let mut dropped = 0;
    for word in words {
        let w = panel
            .index_of(word)
            .ok_or_else(|| Error::invalid(format!("word {word:?} is not in the count tables")))?;
        for t in k + 1..=months {
            let now = panel.value(F, w, t);
            let lagged: Option<Vec<f64>> = (0..5).map(|m| panel.value(m, w, t - k)).collect();
            match (now, lagged) {
                (Some(ft), Some(x)) => rows.push(LagRow {
                    word: word.clone(),
                    t,
                    delta: ft - x[F],
                    x: x.try_into().expect("five series"),
                }),
                _ => dropped += 1,
            }
        }
    }
    Ok(LagDataset { k, rows, dropped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceResult {
    pub k: usize,
    pub n_rows: usize,
    /// Panel order.
    pub shares: Vec<BootstrapInterval>,
    pub r2: BootstrapInterval,
}

/// Population covariance of the five lagged predictors and the outcome
/// (outcome last) over the given rows.
fn covariance(d: &LagDataset, idx: &[usize]) -> Matrix {
    let n = idx.len() as f64;
    let value = |i: usize, j: usize| if j < 5 { d.rows[i].x[j] } else { d.rows[i].delta };
    let mut mean = [0.0; 6];
    for &i in idx {
        for (j, m) in mean.iter_mut().enumerate() {
            *m += value(i, j);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = Matrix::zeros(6, 6);
    for &i in idx {
        let c: [f64; 6] = std::array::from_fn(|j| value(i, j) - mean[j]);
        for a in 0..6 {
            for b in 0..=a {
                cov.set(a, b, cov.get(a, b) + c[a] * c[b]);
            }
        }
    }
    for a in 0..6 {
        for b in 0..=a {
            let v = cov.get(a, b) / n;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    cov
}

/// LMG shares of variance in frequency change, with percentile-bootstrap bands.
pub fn relative_importance_analysis(d: &LagDataset, opts: BootstrapOptions) -> Result<ImportanceResult> {
    if d.rows.len() < 30 {
        return Err(Error::invalid(format!(
            "relative importance needs at least 30 rows, got {}",
            d.rows.len()
        )));
    }
    let full: Vec<usize> = (0..d.rows.len()).collect();
    // surface a degenerate design as an error rather than a bootstrap failure
    lmg_from_covariance(&covariance(d, &full))?;
    let stat = |idx: &[usize]| {
        let dec = lmg_from_covariance(&covariance(d, idx)).ok()?;
        let mut v = dec.shares;
        v.push(dec.r2_full);
        Some(v)
    };
    let mut bands = percentile_bootstrap_vec(d.rows.len(), stat, opts)?;
    let r2 = bands.pop().expect("r2 appended");
    Ok(ImportanceResult {
        k: d.k,
        n_rows: d.rows.len(),
        shares: bands,
        r2,
    })
}

impl ImportanceResult {
    /// `predictor,share,lo,hi`, one row per predictor, then the total R².
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["predictor", "share", "lo", "hi"])?;
        let rows = PREDICTORS.iter().zip(&self.shares).chain(std::iter::once((&"r2_total", &self.r2)));
        for (name, b) in rows {
            w.write_record([name.to_string(), fmt_opt(Some(b.point)), fmt_opt(Some(b.lower)), fmt_opt(Some(b.upper))])?;
        }
        w.flush()?;
        Ok(())
    }
}
