use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::quantile_sorted;
use crate::error::{Error, Result};

const MAX_REDRAWS: u64 = 16;

#[derive(Debug, Clone, Copy)]
pub struct BootstrapOptions {
    pub iters: usize,
    /// Central coverage, e.g. 0.95 for the (2.5, 97.5) percentile interval.
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            iters: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Independent RNG substream for one bootstrap iteration (and redraw attempt).
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Resamples `n` rows with replacement and returns the row indices.
pub fn resample_indices<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Percentile bootstrap of a vector-valued statistic over `n` rows.
///
/// `statistic` receives row indices; the point estimate uses `0..n`.
/// A resample on which the statistic is undefined is redrawn from the next
/// substream, up to a bounded number of attempts.
pub fn percentile_bootstrap_vec<F>(n: usize, statistic: F, opts: BootstrapOptions) -> Result<Vec<BootstrapInterval>>
where
    F: Fn(&[usize]) -> Option<Vec<f64>> + Sync,
{
    if n == 0 {
        return Err(Error::invalid("bootstrap over empty data"));
    }
    if opts.iters == 0 || !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::invalid("bootstrap needs iters >= 1 and a level in (0, 1)"));
    }
    let identity: Vec<usize> = (0..n).collect();
    let point = statistic(&identity).ok_or_else(|| Error::numerical("statistic undefined on the full data"))?;
    let dim = point.len();

    let draws: Vec<Result<Vec<f64>>> = (0..opts.iters as u64)
        .into_par_iter()
        .map(|i| {
            for attempt in 0..MAX_REDRAWS {
                let mut rng = substream(opts.seed, i * MAX_REDRAWS + attempt);
                let idx = resample_indices(&mut rng, n);
                if let Some(v) = statistic(&idx) {
                    if v.len() == dim {
                        return Ok(v);
                    }
                }
            }
            Err(Error::numerical(format!(
                "statistic undefined on {MAX_REDRAWS} consecutive resamples (iteration {i})"
            )))
        })
        .collect();

    let mut per_dim: Vec<Vec<f64>> = vec![Vec::with_capacity(opts.iters); dim];
    for d in draws {
        for (slot, v) in per_dim.iter_mut().zip(d?) {
            slot.push(v);
        }
    }
    let alpha = (1.0 - opts.level) / 2.0;
    Ok(per_dim
        .into_iter()
        .zip(point)
        .map(|(mut vals, point)| {
            vals.sort_by(f64::total_cmp);
            BootstrapInterval {
                point,
                lower: quantile_sorted(&vals, alpha),
                upper: quantile_sorted(&vals, 1.0 - alpha),
            }
        })
        .collect())
}

/// Scalar form of [`percentile_bootstrap_vec`].
pub fn percentile_bootstrap<F>(n: usize, statistic: F, opts: BootstrapOptions) -> Result<BootstrapInterval>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    Ok(percentile_bootstrap_vec(n, |idx| statistic(idx).map(|v| vec![v]), opts)?[0])
}
