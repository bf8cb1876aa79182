use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use rand::Rng;

use super::predict::{balance_classes, cross_validated_accuracy, AccuracyRow};
use super::{feature_summary, labeled_words, FeatureSummary, Panel, DL, F};
use crate::error::{Error, Result};
use crate::numstats::{kfold_balanced, mean, substream, welch_one_tailed_t};
use crate::series::fmt_opt;
use crate::wordsets::WordLabel;

/// Reads `word<TAB>tag` lines; blank lines and `#` comments are skipped.
pub fn read_pos_tags(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = std::fs::File::open(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        let t = line.trim_end();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (w, tag) = t
            .split_once('\t')
            .ok_or_else(|| Error::format(path, format!("line {} is not word<TAB>tag", i + 1)))?;
        out.insert(w.to_string(), tag.trim().to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosComparison {
    pub tag: String,
    pub n_pairs: usize,
    /// Mean D_L of matched growth words minus that of their decline partners.
    pub delta: f64,
    /// One-tailed Welch test of growth > decline; `None` with fewer than two pairs
    /// or no variance.
    pub t: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosMatched {
    pub comparisons: Vec<PosComparison>,
    /// Decline words left without a growth partner of the same tag.
    pub unmatched: usize,
}

fn coverage_check(words: &[&String], tags: &BTreeMap<String, String>) -> Result<()> {
    let covered = words.iter().filter(|w| tags.contains_key(w.as_str())).count();
    if words.is_empty() || (covered as f64) < 0.8 * words.len() as f64 {
        return Err(Error::invalid(format!(
            "part-of-speech tags cover {covered} of {} labeled words; at least 80% are required",
            words.len()
        )));
    }
    Ok(())
}

/// Matches each decline word to the unmatched growth word of the same tag
/// with the closest mean frequency, then compares D_L within each tag.
pub fn pos_matched_comparison(fs: &FeatureSummary, labels: &[WordLabel], tags: &BTreeMap<String, String>) -> Result<PosMatched> {
    let labeled: BTreeMap<String, bool> = labeled_words(labels).into_iter().collect();
    let present: Vec<&String> = fs.words.iter().filter(|w| labeled.contains_key(w.as_str())).collect();
    coverage_check(&present, tags)?;

    let mut by_tag: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, w) in fs.words.iter().enumerate() {
        let (Some(&g), Some(tag)) = (labeled.get(w), tags.get(w)) else {
            continue;
        };
        let e = by_tag.entry(tag.as_str()).or_default();
        if g {
            e.0.push(i);
        } else {
            e.1.push(i);
        }
    }
    let mut comparisons = Vec::new();
    let mut unmatched = 0;
    for (tag, (growth, decline)) in by_tag {
        let mut used = vec![false; growth.len()];
        let mut pairs = Vec::new();
        for &d in &decline {
            let fd = fs.values[d][F];
            let best = (0..growth.len())
                .filter(|&j| !used[j])
                .min_by(|&a, &b| {
                    let da = (fs.values[growth[a]][F] - fd).abs();
                    let db = (fs.values[growth[b]][F] - fd).abs();
                    da.total_cmp(&db).then(a.cmp(&b))
                });
            match best {
                Some(j) => {
                    used[j] = true;
                    pairs.push((growth[j], d));
                }
                None => unmatched += 1,
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let g: Vec<f64> = pairs.iter().map(|&(a, _)| fs.values[a][DL]).collect();
        let d: Vec<f64> = pairs.iter().map(|&(_, b)| fs.values[b][DL]).collect();
        let test = welch_one_tailed_t(&g, &d);
        comparisons.push(PosComparison {
            tag: tag.to_string(),
            n_pairs: pairs.len(),
            delta: mean(&g) - mean(&d),
            t: test.map(|t| t.t),
            p: test.map(|t| t.p),
        });
    }
    Ok(PosMatched { comparisons, unmatched })
}

impl PosMatched {
    /// `tag,n_pairs,delta,t,p`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["tag", "n_pairs", "delta", "t", "p"])?;
        for c in &self.comparisons {
            w.write_record([c.tag.clone(), c.n_pairs.to_string(), fmt_opt(Some(c.delta)), fmt_opt(c.t), fmt_opt(c.p)])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosPrediction {
    pub k: usize,
    /// frequency plus one-hot tags
    pub f_pos: AccuracyRow,
    pub f_l: AccuracyRow,
    pub f: AccuracyRow,
}

/// Cross-validated accuracy of frequency plus one-hot tags, next to the
/// frequency-only and frequency plus D_L models on the same words and folds.
pub fn pos_feature_prediction(
    panel: &Panel,
    labels: &[WordLabel],
    tags: &BTreeMap<String, String>,
    k: usize,
    folds: usize,
    seed: u64,
) -> Result<PosPrediction> {
    let labeled = labeled_words(labels);
    let all: Vec<&String> = labeled.iter().map(|(w, _)| w).collect();
    coverage_check(&all, tags)?;
    let words: Vec<String> = labeled.iter().filter(|(w, _)| tags.contains_key(w)).map(|(w, _)| w.clone()).collect();
    let fs = feature_summary(panel, &words, k)?;
    let lookup: BTreeMap<&str, bool> = labeled.iter().map(|(w, g)| (w.as_str(), *g)).collect();
    let y_all: Vec<bool> = fs.words.iter().map(|w| lookup[w.as_str()]).collect();
    let mut rng = substream(seed, k as u64);
    let keep = balance_classes(&y_all, &mut rng);
    let y: Vec<bool> = keep.iter().map(|&i| y_all[i]).collect();
    let fold_of = kfold_balanced(&y, folds, rng.random())?;

    let tag_levels: Vec<&String> = keep.iter().map(|&i| &tags[&fs.words[i]]).collect::<BTreeSet<_>>().into_iter().collect();
    // the first level is the reference category
    let one_hot = |tag: &String| -> Vec<f64> { tag_levels[1..].iter().map(|l| if *l == tag { 1.0 } else { 0.0 }).collect() };
    let rows = |f: &dyn Fn(usize) -> Vec<f64>| -> Vec<Vec<f64>> { keep.iter().map(|&i| f(i)).collect() };
    let pos_rows = rows(&|i| {
        let mut r = vec![fs.values[i][F]];
        r.extend(one_hot(&tags[&fs.words[i]]));
        r
    });
    let fl_rows = rows(&|i| vec![fs.values[i][F], fs.values[i][DL]]);
    let f_rows = rows(&|i| vec![fs.values[i][F]]);
    Ok(PosPrediction {
        k,
        f_pos: AccuracyRow::new(k, "f+POS", cross_validated_accuracy(&pos_rows, &y, &fold_of, folds)?),
        f_l: AccuracyRow::new(k, "f+L", cross_validated_accuracy(&fl_rows, &y, &fold_of, folds)?),
        f: AccuracyRow::new(k, "f", cross_validated_accuracy(&f_rows, &y, &fold_of, folds)?),
    })
}

impl PosPrediction {
    /// `k,feature_set,mean_acc,std`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        super::predict::write_accuracy_csv(&[self.f.clone(), self.f_l.clone(), self.f_pos.clone()], path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyses::tests::panel_from;
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

    fn summary(values: Vec<[f64; 5]>) -> FeatureSummary {
        FeatureSummary {
            k: 12,
            words: (0..values.len()).map(|w| format!("w{w:04}")).collect(),
            values,
            dropped: Vec::new(),
        }
    }

    fn tagged(n: usize, tag: impl Fn(usize) -> &'static str) -> BTreeMap<String, String> {
        (0..n).map(|w| (format!("w{w:04}"), tag(w).to_string())).collect()
    }

    #[test]
    fn matching_pairs_nearest_frequency_without_replacement() {
        // growth words 0..3 at f = 0, 1, 2; decline words 3, 4 at f = 1.1, 1.2
        let vals = vec![
            [0.0, 5.0, 0.0, 0.0, 0.0],
            [1.0, 6.0, 0.0, 0.0, 0.0],
            [2.0, 7.0, 0.0, 0.0, 0.0],
            [1.1, 1.0, 0.0, 0.0, 0.0],
            [1.2, 2.0, 0.0, 0.0, 0.0],
        ];
        let g = [true, true, true, false, false];
        let m = pos_matched_comparison(&summary(vals), &labels(&g), &tagged(5, |_| "NOUN")).unwrap();
        let c = &m.comparisons[0];
        assert_eq!(c.n_pairs, 2);
        // decline 3 takes growth 1 (f=1); decline 4 then takes growth 2 (|2-1.2| < |0-1.2|)
        assert!((c.delta - ((6.0 + 7.0) / 2.0 - 1.5)).abs() < 1e-12);
        assert_eq!(m.unmatched, 0);
    }

    #[test]
    fn decline_without_partner_is_counted() {
        let vals = vec![[0.0; 5], [0.0; 5], [0.0; 5]];
        let g = [true, false, false];
        let m = pos_matched_comparison(&summary(vals), &labels(&g), &tagged(3, |_| "VERB")).unwrap();
        assert_eq!(m.unmatched, 1);
        assert_eq!(m.comparisons[0].n_pairs, 1);
        assert_eq!(m.comparisons[0].t, None);
    }

    #[test]
    fn low_tag_coverage_is_rejected() {
        let vals = vec![[0.0; 5]; 10];
        let g: Vec<bool> = (0..10).map(|w| w % 2 == 0).collect();
        let tags: BTreeMap<String, String> = tagged(10, |_| "X").into_iter().take(7).collect();
        assert!(pos_matched_comparison(&summary(vals), &labels(&g), &tags).is_err());
    }

    #[test]
    fn shifted_verbs_are_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 400;
        let g: Vec<bool> = (0..n).map(|w| w % 2 == 0).collect();
        let tag = |w: usize| ["VERB", "NOUN", "ADJ", "INTJ"][(w / 2) % 4];
        let vals: Vec<[f64; 5]> = (0..n)
            .map(|w| {
                let shift = if g[w] && tag(w) == "VERB" { 0.5 } else { 0.0 };
                [rng.random_range(-1.0..1.0), shift + rng.random_range(-0.3..0.3), 0.0, 0.0, 0.0]
            })
            .collect();
        let m = pos_matched_comparison(&summary(vals), &labels(&g), &tagged(n, tag)).unwrap();
        for c in &m.comparisons {
            let p = c.p.unwrap();
            if c.tag == "VERB" {
                assert!(p < 1e-6, "{c:?}");
            } else {
                assert!(p > 1e-3, "{c:?}");
            }
        }
    }

    #[test]
    fn same_distribution_is_calibrated() {
        let mut significant = 0;
        let reps = 200;
        for seed in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 60;
            let g: Vec<bool> = (0..n).map(|w| w % 2 == 0).collect();
            let vals: Vec<[f64; 5]> = (0..n).map(|_| [rng.random(), rng.random(), 0.0, 0.0, 0.0]).collect();
            let m = pos_matched_comparison(&summary(vals), &labels(&g), &tagged(n, |_| "NOUN")).unwrap();
            if m.comparisons[0].p.unwrap() < 0.05 {
                significant += 1;
            }
        }
        let rate = significant as f64 / reps as f64;
        assert!((0.01..=0.10).contains(&rate), "{rate}");
    }

    #[test]
    fn constant_tags_match_frequency_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100;
        let noise: Vec<f64> = (0..5 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<bool> = (0..n).map(|w| w % 2 == 0).collect();
        let p = panel_from(n, 1, |m, w, _| Some(noise[m * n + w] + if g[w] && m == F { 0.3 } else { 0.0 }));
        let r = pos_feature_prediction(&p, &labels(&g), &tagged(n, |_| "NOUN"), 1, 10, 3).unwrap();
        assert_eq!(r.f_pos.fold_accuracy, r.f.fold_accuracy);
    }

    #[test]
    fn label_encoding_tags_are_near_perfect() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100;
        let noise: Vec<f64> = (0..5 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<bool> = (0..n).map(|w| w % 2 == 0).collect();
        let p = panel_from(n, 1, |m, w, _| Some(noise[m * n + w]));
        let r = pos_feature_prediction(&p, &labels(&g), &tagged(n, |w| if w % 2 == 0 { "INTJ" } else { "NOUN" }), 1, 10, 3).unwrap();
        assert!(r.f_pos.mean > 0.95);
    }

    #[test]
    fn linguistic_labels_favor_dissemination_over_tags() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 200;
        let noise: Vec<f64> = (0..5 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<bool> = (0..n).map(|w| w % 2 == 0).collect();
        let p = panel_from(n, 1, |m, w, _| Some(noise[m * n + w] + if m == DL && g[w] { 1.0 } else { 0.0 }));
        let tags = ["NOUN", "VERB", "ADJ"];
        let r = pos_feature_prediction(&p, &labels(&g), &tagged(n, |w| tags[(w * 7 / 3) % 3]), 1, 10, 8).unwrap();
        assert!(r.f_l.mean > r.f_pos.mean + 0.15, "{r:?}");
    }
}
