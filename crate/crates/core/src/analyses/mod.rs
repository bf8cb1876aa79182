//! Correlational, causal and predictive analyses over labeled words.
//!
//! All analyses read a [`Panel`]: five per-word monthly series (log10
//! relative frequency and the four dissemination measures).

mod causal;
mod correlation;
mod pos;
mod predict;

use std::collections::HashMap;

use crate::counts::FrequencyTable;
use crate::dissemination::Dissemination;
use crate::error::{Error, Result};
use crate::wordsets::{Label, WordLabel};

pub use causal::{adrf_estimate, build_treatment_dataset, AdrfOptions, AdrfPoint, DoseResponseCurve, TreatmentDataset};
pub use correlation::{assemble_lag_dataset, relative_importance_analysis, ImportanceResult, LagDataset, LagRow};
pub use pos::{pos_feature_prediction, pos_matched_comparison, read_pos_tags, PosComparison, PosMatched, PosPrediction};
pub use predict::{binary_growth_prediction, cross_validated_accuracy, write_accuracy_csv, AccuracyRow, PredictionOptions};

/// Series names in panel order.
pub const PREDICTORS: [&str; 5] = ["f", "D_L", "D_U", "D_S", "D_T"];
/// Short keys used in file names, in panel order.
pub const PREDICTOR_KEYS: [&str; 5] = ["f", "dl", "du", "ds", "dt"];

pub const F: usize = 0;
pub const DL: usize = 1;
pub const DU: usize = 2;
pub const DS: usize = 3;
pub const DT: usize = 4;

/// Per-word monthly series: `metrics[m][word][month]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub words: Vec<String>,
    pub metrics: [Vec<Vec<Option<f64>>>; 5],
    index: HashMap<String, usize>,
}

impl Panel {
    pub fn new(words: Vec<String>, metrics: [Vec<Vec<Option<f64>>>; 5]) -> Result<Self> {
        let months = metrics[0].first().map_or(0, Vec::len);
        for m in &metrics {
            if m.len() != words.len() || m.iter().any(|r| r.len() != months) {
                return Err(Error::invalid("panel series disagree on words or months"));
            }
        }
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(Self { words, metrics, index })
    }

    /// Frequency is log10 relative frequency; undefined where a word is absent.
    pub fn from_tables(ft: &FrequencyTable, d: &Dissemination) -> Result<Self> {
        if d.linguistic.words != ft.words {
            return Err(Error::invalid("dissemination and frequency tables list different words"));
        }
        let f = (0..ft.words.len()).map(|w| ft.relative_frequency_series(w).log10).collect();
        Self::new(
            ft.words.clone(),
            [
                f,
                d.linguistic.values.clone(),
                d.user.values.clone(),
                d.subreddit.values.clone(),
                d.thread.values.clone(),
            ],
        )
    }

    pub fn months(&self) -> usize {
        self.metrics[0].first().map_or(0, Vec::len)
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// `month` is 1-based.
    pub fn value(&self, metric: usize, w: usize, month: usize) -> Option<f64> {
        self.metrics[metric][w][month - 1]
    }
}

/// Per-word means of every series over months `1..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSummary {
    pub k: usize,
    pub words: Vec<String>,
    /// Panel order: f, D_L, D_U, D_S, D_T.
    pub values: Vec<[f64; 5]>,
    /// Words with some series undefined in every one of the first `k` months.
    pub dropped: Vec<String>,
}

impl FeatureSummary {
    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.words.iter().position(|w| w == word)
    }
}

/// Undefined months are left out of each mean; a word is dropped when
/// any series has no defined month in the window.
pub fn feature_summary(panel: &Panel, words: &[String], k: usize) -> Result<FeatureSummary> {
    if k == 0 || k > panel.months() {
        return Err(Error::invalid(format!("early window k={k} must be in 1..={}", panel.months())));
    }
    let mut out = FeatureSummary {
        k,
        words: Vec::new(),
        values: Vec::new(),
        dropped: Vec::new(),
    };
    for word in words {
        let w = panel
            .index_of(word)
            .ok_or_else(|| Error::invalid(format!("word {word:?} is not in the count tables")))?;
        let mut vals = [0.0; 5];
        let mut ok = true;
        for (m, slot) in vals.iter_mut().enumerate() {
            let defined: Vec<f64> = (1..=k).filter_map(|t| panel.value(m, w, t)).collect();
            if defined.is_empty() {
                ok = false;
                break;
            }
            *slot = defined.iter().sum::<f64>() / defined.len() as f64;
        }
        if ok {
            out.words.push(word.clone());
            out.values.push(vals);
        } else {
            out.dropped.push(word.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureSet {
    F,
    FL,
    FS,
    FLS,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 4] = [FeatureSet::F, FeatureSet::FL, FeatureSet::FS, FeatureSet::FLS];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::F => "f",
            FeatureSet::FL => "f+L",
            FeatureSet::FS => "f+S",
            FeatureSet::FLS => "f+L+S",
        }
    }

    /// Panel columns in this set.
    pub fn columns(self) -> &'static [usize] {
        match self {
            FeatureSet::F => &[F],
            FeatureSet::FL => &[F, DL],
            FeatureSet::FS => &[F, DU, DS, DT],
            FeatureSet::FLS => &[F, DL, DU, DS, DT],
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown feature set {s:?}")))
    }
}

/// Growth (true) and decline (false) words among `labels`, sorted by word.
pub fn labeled_words(labels: &[WordLabel]) -> Vec<(String, bool)> {
    let mut v: Vec<(String, bool)> = labels
        .iter()
        .filter_map(|l| match l.label {
            Label::Growth => Some((l.word.clone(), true)),
            Label::Decline => Some((l.word.clone(), false)),
            Label::Excluded => None,
        })
        .collect();
    v.sort();
    v.dedup_by(|a, b| a.0 == b.0);
    v
}
