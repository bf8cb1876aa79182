use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use super::{labeled_words, FeatureSummary, F, PREDICTORS};
use crate::error::{Error, Result};
use crate::numstats::{logistic_regression_fit, ols_fit, quantile_sorted, substream, variance, LogisticOptions, Matrix};
use crate::series::fmt_opt;
use crate::wordsets::WordLabel;

const MAX_REDRAWS: u64 = 16;

/// One treatment series against the other four as covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentDataset {
    /// Panel index of the treatment series.
    pub treatment: usize,
    pub words: Vec<String>,
    /// `true` for growth.
    pub y: Vec<bool>,
    pub z: Vec<f64>,
    /// Remaining series in panel order.
    pub x: Vec<Vec<f64>>,
}

pub fn build_treatment_dataset(fs: &FeatureSummary, labels: &[WordLabel], treatment: usize) -> Result<TreatmentDataset> {
    if treatment == F || treatment >= PREDICTORS.len() {
        return Err(Error::invalid(format!("treatment index {treatment} is not a dissemination series")));
    }
    let labeled = labeled_words(labels);
    let mut td = TreatmentDataset {
        treatment,
        words: Vec::new(),
        y: Vec::new(),
        z: Vec::new(),
        x: Vec::new(),
    };
    for (i, w) in fs.words.iter().enumerate() {
        let Ok(pos) = labeled.binary_search_by(|(x, _)| x.cmp(w)) else {
            continue;
        };
        let v = fs.values[i];
        td.words.push(w.clone());
        td.y.push(labeled[pos].1);
        td.z.push(v[treatment]);
        td.x.push((0..v.len()).filter(|&j| j != treatment).map(|j| v[j]).collect());
    }
    Ok(td)
}

#[derive(Debug, Clone, Copy)]
pub struct AdrfOptions {
    pub quantiles: usize,
    pub boot: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for AdrfOptions {
    fn default() -> Self {
        Self {
            quantiles: 10,
            boot: 100,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdrfPoint {
    /// 1-based treatment quantile bin.
    pub quantile: usize,
    pub mu: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoseResponseCurve {
    pub treatment: String,
    pub points: Vec<AdrfPoint>,
    /// Per bootstrap draw, the mean predicted outcome in each bin.
    pub draws: Vec<Vec<f64>>,
}

/// Gaussian density of `z` around the covariate prediction.
pub fn generalized_propensity(z: f64, predicted: f64, sigma2: f64) -> f64 {
    (-(z - predicted).powi(2) / (2.0 * sigma2)).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt()
}

/// Bin of each position after sorting by treatment: `rank * q / n`, so bin
/// sizes differ by at most one. Ties keep input order.
pub fn quantile_bins(z: &[f64], q: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
    let mut bins = vec![0; z.len()];
    for (rank, &i) in order.iter().enumerate() {
        bins[i] = rank * q / z.len();
    }
    bins
}

/// One pass of the dose-response procedure on the rows `idx`.
fn adrf_draw(td: &TreatmentDataset, idx: &[usize], q: usize) -> Option<Vec<f64>> {
    let x = Matrix::from_rows(&idx.iter().map(|&i| td.x[i].as_slice()).collect::<Vec<_>>()).ok()?;
    let z: Vec<f64> = idx.iter().map(|&i| td.z[i]).collect();
    let treat_model = ols_fit(&x, &z).ok()?;
    if !(treat_model.sigma2 > 0.0) {
        return None;
    }
    let gps: Vec<f64> = idx
        .iter()
        .enumerate()
        .map(|(r, &i)| generalized_propensity(z[r], treat_model.predict(&td.x[i]), treat_model.sigma2))
        .collect();
    let design = Matrix::from_columns(&[z.clone(), gps.clone()]).ok()?;
    let y: Vec<bool> = idx.iter().map(|&i| td.y[i]).collect();
    let outcome = logistic_regression_fit(&design, &y, LogisticOptions::default()).ok()?;
    let bins = quantile_bins(&z, q);
    let mut sum = vec![0.0; q];
    let mut count = vec![0usize; q];
    for r in 0..idx.len() {
        sum[bins[r]] += outcome.predict_proba(&[z[r], gps[r]]);
        count[bins[r]] += 1;
    }
    Some(sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect())
}

/// Average dose response over treatment quantiles with a percentile band.
/// Every draw resamples equal numbers of growth and decline words.
pub fn adrf_estimate(td: &TreatmentDataset, opts: AdrfOptions) -> Result<DoseResponseCurve> {
    let growth: Vec<usize> = (0..td.y.len()).filter(|&i| td.y[i]).collect();
    let decline: Vec<usize> = (0..td.y.len()).filter(|&i| !td.y[i]).collect();
    if growth.is_empty() || decline.is_empty() {
        return Err(Error::invalid("dose response needs both growth and decline words"));
    }
    let per_class = growth.len().min(decline.len());
    if 2 * per_class < opts.quantiles || opts.quantiles == 0 {
        return Err(Error::invalid(format!(
            "{} balanced instances cannot fill {} treatment bins",
            2 * per_class,
            opts.quantiles
        )));
    }
    if opts.boot == 0 {
        return Err(Error::invalid("dose response needs at least one bootstrap draw"));
    }
    let name = PREDICTORS[td.treatment];
    if !(variance(&td.z) > 0.0) {
        return Err(Error::numerical(format!("treatment {name} has no variance")));
    }
    let draws: Vec<Result<Vec<f64>>> = (0..opts.boot as u64)
        .into_par_iter()
        .map(|b| {
            for attempt in 0..MAX_REDRAWS {
                let mut rng = substream(opts.seed, b * MAX_REDRAWS + attempt);
                let mut idx: Vec<usize> = (0..per_class).map(|_| growth[rng.random_range(0..growth.len())]).collect();
                idx.extend((0..per_class).map(|_| decline[rng.random_range(0..decline.len())]));
                if let Some(v) = adrf_draw(td, &idx, opts.quantiles) {
                    return Ok(v);
                }
            }
            Err(Error::numerical(format!(
                "dose response for {name} failed on {MAX_REDRAWS} consecutive resamples (draw {b})"
            )))
        })
        .collect();
    let draws: Vec<Vec<f64>> = draws.into_iter().collect::<Result<_>>()?;
    let alpha = (1.0 - opts.level) / 2.0;
    let points = (0..opts.quantiles)
        .map(|bin| {
            let mut v: Vec<f64> = draws.iter().map(|d| d[bin]).collect();
            let mu = v.iter().sum::<f64>() / v.len() as f64;
            v.sort_by(f64::total_cmp);
            AdrfPoint {
                quantile: bin + 1,
                mu,
                lo: quantile_sorted(&v, alpha),
                hi: quantile_sorted(&v, 1.0 - alpha),
            }
        })
        .collect();
    Ok(DoseResponseCurve {
        treatment: name.to_string(),
        points,
        draws,
    })
}

impl DoseResponseCurve {
    /// `quantile,mu,lo,hi`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["quantile", "mu", "lo", "hi"])?;
        for p in &self.points {
            w.write_record([p.quantile.to_string(), fmt_opt(Some(p.mu)), fmt_opt(Some(p.lo)), fmt_opt(Some(p.hi))])?;
        }
        w.flush()?;
        Ok(())
    }
}
