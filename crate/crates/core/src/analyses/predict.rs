use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{feature_summary, labeled_words, FeatureSet, Panel};
use crate::error::{Error, Result};
use crate::numstats::{kfold_balanced, logistic_regression_fit, mean, substream, variance, LogisticOptions, Matrix};
use crate::series::fmt_opt;
use crate::wordsets::WordLabel;

#[derive(Debug, Clone, Copy)]
pub struct PredictionOptions {
    pub folds: usize,
    /// Early windows `1..=k_max` are evaluated.
    pub k_max: usize,
    pub seed: u64,
}

impl Default for PredictionOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            k_max: 12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub k: usize,
    pub feature_set: String,
    pub fold_accuracy: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl AccuracyRow {
    pub fn new(k: usize, feature_set: &str, fold_accuracy: Vec<f64>) -> Self {
        Self {
            k,
            feature_set: feature_set.to_string(),
            mean: mean(&fold_accuracy),
            std: variance(&fold_accuracy).sqrt(),
            fold_accuracy,
        }
    }
}

/// Column means and standard deviations of the training rows; columns
/// that are constant in training are dropped.
struct Standardizer {
    keep: Vec<(usize, f64, f64)>,
}

impl Standardizer {
    fn fit(rows: &[&[f64]]) -> Self {
        let p = rows.first().map_or(0, |r| r.len());
        let mut keep = Vec::new();
        for j in 0..p {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let m = mean(&col);
            let sd = variance(&col).sqrt();
            if sd > 1e-12 * (1.0 + m.abs()) {
                keep.push((j, m, sd));
            }
        }
        Self { keep }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        self.keep.iter().map(|&(j, m, sd)| (row[j] - m) / sd).collect()
    }
}

/// Per-fold accuracy of a standardized logistic classifier; a probability
/// of at least one half predicts `true`.
pub fn cross_validated_accuracy(rows: &[Vec<f64>], y: &[bool], folds: &[usize], nfolds: usize) -> Result<Vec<f64>> {
    if rows.len() != y.len() || rows.len() != folds.len() {
        return Err(Error::invalid("rows, labels and folds differ in length"));
    }
    (0..nfolds)
        .map(|fold| {
            let train: Vec<usize> = (0..rows.len()).filter(|&i| folds[i] != fold).collect();
            let test: Vec<usize> = (0..rows.len()).filter(|&i| folds[i] == fold).collect();
            if test.is_empty() {
                return Err(Error::invalid(format!("fold {fold} is empty")));
            }
            let std = Standardizer::fit(&train.iter().map(|&i| rows[i].as_slice()).collect::<Vec<_>>());
            let p = std.keep.len();
            let data: Vec<f64> = train.iter().flat_map(|&i| std.apply(&rows[i])).collect();
            let x = Matrix::from_row_major(train.len(), p, data)?;
            let ytr: Vec<bool> = train.iter().map(|&i| y[i]).collect();
            let model = logistic_regression_fit(&x, &ytr, LogisticOptions::default())?;
            let correct = test
                .iter()
                .filter(|&&i| (model.predict_proba(&std.apply(&rows[i])) >= 0.5) == y[i])
                .count();
            Ok(correct as f64 / test.len() as f64)
        })
        .collect()
}

/// Indices of a class-balanced subsample: the larger class is cut down to
/// the size of the smaller one at random. Returned ascending.
pub(crate) fn balance_classes<R: Rng>(labels: &[bool], rng: &mut R) -> Vec<usize> {
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    let n = pos.len().min(neg.len());
    pos.shuffle(rng);
    neg.shuffle(rng);
    let mut keep: Vec<usize> = pos[..n].iter().chain(&neg[..n]).copied().collect();
    keep.sort_unstable();
    keep
}

/// Growth-vs-decline accuracy for every early window `k` and feature set.
/// Within one `k`, every feature set sees the same balanced sample and folds.
pub fn binary_growth_prediction(panel: &Panel, labels: &[WordLabel], opts: PredictionOptions) -> Result<Vec<AccuracyRow>> {
    let labeled = labeled_words(labels);
    let words: Vec<String> = labeled.iter().map(|(w, _)| w.clone()).collect();
    let mut out = Vec::new();
    for k in 1..=opts.k_max.min(panel.months()) {
        let fs = feature_summary(panel, &words, k)?;
        let y_all: Vec<bool> = fs
            .words
            .iter()
            .map(|w| labeled.binary_search_by(|(x, _)| x.cmp(w)).map(|i| labeled[i].1).expect("labeled"))
            .collect();
        let n_pos = y_all.iter().filter(|&&v| v).count();
        let n_neg = y_all.len() - n_pos;
        if n_pos < 10 || n_neg < 10 {
            return Err(Error::invalid(format!(
                "prediction needs at least 10 words per class, have {n_pos} growth and {n_neg} decline at k={k}"
            )));
        }
        let mut rng = substream(opts.seed, k as u64);
        let keep = balance_classes(&y_all, &mut rng);
        let y: Vec<bool> = keep.iter().map(|&i| y_all[i]).collect();
        let folds = kfold_balanced(&y, opts.folds, rng.random())?;
        for set in FeatureSet::ALL {
            let rows: Vec<Vec<f64>> = keep
                .iter()
                .map(|&i| set.columns().iter().map(|&c| fs.values[i][c]).collect())
                .collect();
            let acc = cross_validated_accuracy(&rows, &y, &folds, opts.folds)?;
            out.push(AccuracyRow::new(k, set.name(), acc));
        }
    }
    Ok(out)
}

/// `k,feature_set,mean_acc,std`
pub fn write_accuracy_csv(rows: &[AccuracyRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "feature_set", "mean_acc", "std"])?;
    for r in rows {
        w.write_record([r.k.to_string(), r.feature_set.clone(), fmt_opt(Some(r.mean)), fmt_opt(Some(r.std))])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyses::tests::panel_from;
    use crate::analyses::DL;
    use crate::wordsets::{Label, Source};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labels(growth: &[bool]) -> Vec<WordLabel> {
        growth
            .iter()
            .enumerate()
            .map(|(w, &g)| WordLabel {
                word: format!("w{w:04}"),
                label: if g { Label::Growth } else { Label::Decline },
                source: Source::Oracle,
                split_month: (!g).then_some(10),
                rho: None,
                r2: None,
            })
            .collect()
    }

    #[test]
    fn balancing_keeps_equal_classes() {
        let y: Vec<bool> = (0..50).map(|i| i % 5 == 0).collect();
        let keep = balance_classes(&y, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(keep.len(), 20);
        assert_eq!(keep.iter().filter(|&&i| y[i]).count(), 10);
    }

    #[test]
    fn coin_flip_labels_are_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200;
        let noise: Vec<f64> = (0..5 * n * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = panel_from(n, 4, |m, w, t| Some(noise[(m * n + w) * 4 + t - 1]));
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let rows = binary_growth_prediction(&p, &labels(&g), PredictionOptions { folds: 10, k_max: 2, seed: 5 }).unwrap();
        assert_eq!(rows.len(), 8);
        for r in rows {
            assert!((r.mean - 0.5).abs() < 0.12, "{r:?}");
        }
    }

    #[test]
    fn linguistic_signal_beats_frequency() {
        let n = 200;
        let g: Vec<bool> = (0..n).map(|w| w % 2 == 0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise: Vec<Vec<[f64; 5]>> = (0..n).map(|_| (0..3).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect()).collect();
        let p = panel_from(n, 3, |m, w, t| {
            let shift = if m == DL && g[w] { 0.8 } else { 0.0 };
            Some(noise[w][t - 1][m] + shift)
        });
        let rows = binary_growth_prediction(&p, &labels(&g), PredictionOptions { folds: 10, k_max: 1, seed: 2 }).unwrap();
        let acc = |s: &str| rows.iter().find(|r| r.feature_set == s).unwrap().mean;
        assert!(acc("f+L") > acc("f") + 0.1, "{rows:?}");
    }

    #[test]
    fn constant_feature_is_inert() {
        let n = 60;
        let y: Vec<bool> = (0..n).map(|w| w % 3 == 0).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|w| vec![(w * 7 % 11) as f64]).collect();
        let folds = kfold_balanced(&y, 5, 1).unwrap();
        let a = cross_validated_accuracy(&rows, &y, &folds, 5).unwrap();
        let padded: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], 3.0]).collect();
        let b = cross_validated_accuracy(&padded, &y, &folds, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_words_is_an_error() {
        let p = panel_from(12, 2, |_, w, _| Some(w as f64));
        let g: Vec<bool> = (0..12).map(|w| w < 6).collect();
        assert!(binary_growth_prediction(&p, &labels(&g), PredictionOptions::default()).is_err());
    }

    #[test]
    fn permuted_labels_stay_near_chance() {
        let n = 200;
        let g: Vec<bool> = (0..n).map(|w| w % 2 == 0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let noise: Vec<f64> = (0..5 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = panel_from(n, 1, |m, w, _| Some(noise[m * n + w] + if m == DL && g[w] { 0.8 } else { 0.0 }));
        let mut inside = 0;
        for perm in 0..50 {
            let mut shuffled = g.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(1000 + perm));
            let rows = binary_growth_prediction(&p, &labels(&shuffled), PredictionOptions { folds: 10, k_max: 1, seed: perm }).unwrap();
            let acc = rows.iter().find(|r| r.feature_set == "f+L+S").unwrap().mean;
            if (0.4..=0.6).contains(&acc) {
                inside += 1;
            }
        }
        assert!(inside >= 48, "{inside}");
    }
}
