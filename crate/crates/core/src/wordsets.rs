//! Growth and decline word candidates from monthly frequency series, and
//! the annotation step that turns candidates into labels.
//!
//! Growth candidates come from a Spearman screen of time against log10
//! frequency. Decline candidates come from a continuous two-phase linear
//! fit to log10 frequency and from a scaled logistic density fit to raw
//! relative frequency. Months are numbered from 1.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::counts::FrequencyTable;
use crate::error::{Error, Result};
use crate::numstats::{ols_fit, percentile, spearman_rho, Matrix};
use crate::series::{fmt_opt, parse_opt};

// ---------------------------------------------------------------------------
// Spearman screen

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScreenExclusion {
    TooManyUndefined,
    TooFewPoints,
    Constant,
}

impl ScreenExclusion {
    pub fn code(self) -> &'static str {
        match self {
            ScreenExclusion::TooManyUndefined => "too_many_undefined",
            ScreenExclusion::TooFewPoints => "too_few_points",
            ScreenExclusion::Constant => "constant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpearmanScreen {
    /// Per word: rank correlation of month against the series, or why none was computed.
    pub rho: Vec<std::result::Result<f64, ScreenExclusion>>,
    /// Percentile of the screened correlations; `None` when nothing was screened.
    pub threshold: Option<f64>,
    /// Indices of words at or above the threshold, ascending.
    pub candidates: Vec<usize>,
}

impl SpearmanScreen {
    pub fn rho_of(&self, w: usize) -> Option<f64> {
        self.rho[w].ok()
    }
}

/// Rank correlation of month index against one series, over its defined months.
pub fn screen_series(series: &[Option<f64>], max_undefined_frac: f64) -> std::result::Result<f64, ScreenExclusion> {
    let (t, v): (Vec<f64>, Vec<f64>) = series
        .iter()
        .enumerate()
        .filter_map(|(i, x)| x.map(|x| ((i + 1) as f64, x)))
        .unzip();
    let undefined = series.len() - v.len();
    if undefined as f64 > max_undefined_frac * series.len() as f64 {
        return Err(ScreenExclusion::TooManyUndefined);
    }
    if v.len() < 3 {
        return Err(ScreenExclusion::TooFewPoints);
    }
    match spearman_rho(&t, &v) {
        Ok(Some(r)) => Ok(r),
        Ok(None) => Err(ScreenExclusion::Constant),
        Err(_) => Err(ScreenExclusion::TooFewPoints),
    }
}

/// Keeps words whose correlation is at or above the `pct`-th percentile
/// of all screened correlations.
pub fn spearman_screen(series: &[Vec<Option<f64>>], pct: f64, max_undefined_frac: f64) -> SpearmanScreen {
    let rho: Vec<_> = series.par_iter().map(|s| screen_series(s, max_undefined_frac)).collect();
    let defined: Vec<f64> = rho.iter().filter_map(|r| r.ok()).collect();
    let threshold = (!defined.is_empty()).then(|| percentile(&defined, pct));
    let candidates = match threshold {
        Some(th) => (0..rho.len()).filter(|&w| matches!(rho[w], Ok(r) if r >= th)).collect(),
        None => Vec::new(),
    };
    SpearmanScreen {
        rho,
        threshold,
        candidates,
    }
}

// ---------------------------------------------------------------------------
// Two-phase piecewise linear fit

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseFit {
    /// Last month of the first phase.
    pub split: u32,
    pub intercept: f64,
    pub m1: f64,
    pub m2: f64,
    pub sse: f64,
    pub r2: f64,
}

impl PiecewiseFit {
    pub fn predict(&self, t: f64) -> f64 {
        let s = self.split as f64;
        self.intercept + self.m1 * t.min(s) + self.m2 * (t - s).max(0.0)
    }
}

fn total_sum_squares(y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - mean) * (v - mean)).sum()
}

fn r_squared(sse: f64, sst: f64, n: usize, mean: f64) -> f64 {
    // a constant series has nothing to explain
    if sst > n as f64 * (1e-14 * mean.abs()).powi(2) && sst > 0.0 {
        1.0 - sse / sst
    } else {
        0.0
    }
}

/// Least-squares fit of the continuous two-phase line for one split month.
pub fn piecewise_fit_at(series: &[f64], split: u32) -> Result<PiecewiseFit> {
    let n = series.len();
    if split < 2 || split as usize > n.saturating_sub(2) {
        return Err(Error::invalid(format!("split {split} leaves a phase with fewer than two months")));
    }
    let s = split as f64;
    let rows: Vec<[f64; 2]> = (1..=n)
        .map(|t| {
            let t = t as f64;
            [t.min(s), (t - s).max(0.0)]
        })
        .collect();
    let m = ols_fit(&Matrix::from_rows(&rows)?, series)?;
    let sse: f64 = m.residuals.iter().map(|r| r * r).sum();
    let mean = series.iter().sum::<f64>() / n as f64;
    Ok(PiecewiseFit {
        split,
        intercept: m.coefficients[0],
        m1: m.coefficients[1],
        m2: m.coefficients[2],
        sse,
        r2: r_squared(sse, total_sum_squares(series), n, mean),
    })
}

/// Exhaustive search over split months `2..=T-2`. Splits whose error is
/// within rounding of the best keep the earliest month.
pub fn piecewise_fit(series: &[f64]) -> Result<PiecewiseFit> {
    if series.len() < 5 {
        return Err(Error::invalid(format!("piecewise fit needs at least 5 months, got {}", series.len())));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("piecewise fit needs a fully defined series"));
    }
    let tol = 1e-12 * total_sum_squares(series).max(f64::MIN_POSITIVE);
    let mut best: Option<PiecewiseFit> = None;
    for split in 2..=(series.len() - 2) as u32 {
        let fit = piecewise_fit_at(series, split)?;
        if best.is_none_or(|b| fit.sse < b.sse - tol) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one split"))
}

// ---------------------------------------------------------------------------
// Scaled logistic density fit

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticTrajectoryFit {
    pub mu: f64,
    pub scale: f64,
    pub amplitude: f64,
    pub sse: f64,
    pub r2: f64,
    /// `false` when refinement hit its step limit; the fit is the best point found.
    pub converged: bool,
}

/// Logistic probability density with center `mu` and scale `s`.
pub fn logistic_density(t: f64, mu: f64, s: f64) -> f64 {
    let e = (-((t - mu) / s).abs()).exp();
    e / (s * (1.0 + e) * (1.0 + e))
}

impl LogisticTrajectoryFit {
    pub fn predict(&self, t: f64) -> f64 {
        self.amplitude * logistic_density(t, self.mu, self.scale)
    }

    /// Nearest month to the center, clamped to the window.
    pub fn split_month(&self, months: usize) -> u32 {
        self.mu.round().clamp(1.0, months as f64) as u32
    }
}

/// Optimal nonnegative amplitude and resulting error for fixed `(mu, s)`.
fn profile(series: &[f64], mu: f64, s: f64) -> (f64, f64) {
    let (mut pg, mut gg) = (0.0, 0.0);
    for (i, &p) in series.iter().enumerate() {
        let g = logistic_density((i + 1) as f64, mu, s);
        pg += p * g;
        gg += g * g;
    }
    let a = if gg > 0.0 { (pg / gg).max(0.0) } else { 0.0 };
    let sse = series
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let r = p - a * logistic_density((i + 1) as f64, mu, s);
            r * r
        })
        .sum::<f64>();
    (a, sse)
}

/// One-pass form of the profiled error, `sum p^2 - (sum p g)^2 / sum g^2`.
/// Cheaper but loses precision near a perfect fit, so only the coarse grid uses it.
fn grid_error(series: &[f64], pp: f64, mu: f64, s: f64) -> f64 {
    let (mut pg, mut gg) = (0.0, 0.0);
    for (i, &p) in series.iter().enumerate() {
        let g = logistic_density((i + 1) as f64, mu, s);
        pg += p * g;
        gg += g * g;
    }
    if gg > 0.0 && pg > 0.0 {
        pp - pg * pg / gg
    } else {
        pp
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LogisticFitOptions {
    pub max_steps: usize,
}

impl Default for LogisticFitOptions {
    fn default() -> Self {
        Self { max_steps: 5000 }
    }
}

/// Grid search over center and scale with the amplitude profiled out,
/// then compass-search refinement in `(mu, ln s)`.
pub fn logistic_trajectory_fit(series: &[f64], opts: LogisticFitOptions) -> Result<LogisticTrajectoryFit> {
    let n = series.len();
    if n < 3 {
        return Err(Error::invalid("logistic fit needs at least 3 months"));
    }
    if series.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("logistic fit needs a defined nonnegative series"));
    }
    if series.iter().sum::<f64>() <= 0.0 {
        return Err(Error::invalid("logistic fit needs a series with positive mass"));
    }
    let tf = n as f64;
    let (mu_lo, mu_hi) = (1.0 - tf / 2.0, 1.5 * tf);
    let (ls_lo, ls_hi) = ((0.2f64).ln(), (2.0 * tf).ln());

    let pp: f64 = series.iter().map(|p| p * p).sum();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mu_steps = (2.0 * (mu_hi - mu_lo)) as usize;
    for i in 0..=mu_steps {
        let mu = mu_lo + (mu_hi - mu_lo) * i as f64 / mu_steps as f64;
        for j in 0..=40 {
            let ls = ls_lo + (ls_hi - ls_lo) * j as f64 / 40.0;
            let sse = grid_error(series, pp, mu, ls.exp());
            if sse < best.0 {
                best = (sse, mu, ls);
            }
        }
    }

    let (mut sse, mut mu, mut ls) = best;
    let mut step = (0.5, (ls_hi - ls_lo) / 40.0);
    let mut converged = false;
    for _ in 0..opts.max_steps {
        let mut improved = false;
        for (dm, dl) in [(step.0, 0.0), (-step.0, 0.0), (0.0, step.1), (0.0, -step.1)] {
            let cm = (mu + dm).clamp(mu_lo, mu_hi);
            let cl = (ls + dl).clamp(ls_lo, ls_hi);
            let (_, cs) = profile(series, cm, cl.exp());
            if cs < sse {
                (sse, mu, ls) = (cs, cm, cl);
                improved = true;
                break;
            }
        }
        if !improved {
            step = (step.0 / 2.0, step.1 / 2.0);
            if step.0 < 1e-9 {
                converged = true;
                break;
            }
        }
    }

    let s = ls.exp();
    let (amplitude, sse) = profile(series, mu, s);
    let mean = series.iter().sum::<f64>() / tf;
    Ok(LogisticTrajectoryFit {
        mu,
        scale: s,
        amplitude,
        sse,
        r2: r_squared(sse, total_sum_squares(series), n, mean),
        converged,
    })
}

// ---------------------------------------------------------------------------
// Decline candidates

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    Spearman,
    Piecewise,
    Logistic,
    Both,
    /// Ground truth from a synthetic generator.
    Oracle,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Spearman => "spearman",
            Source::Piecewise => "piecewise",
            Source::Logistic => "logistic",
            Source::Both => "both",
            Source::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "spearman" => Source::Spearman,
            "piecewise" => Source::Piecewise,
            "logistic" => Source::Logistic,
            "both" => Source::Both,
            "oracle" => Source::Oracle,
            _ => return Err(Error::invalid(format!("unknown source {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclineCandidate {
    pub word: usize,
    pub source: Source,
    pub split: u32,
}

/// Piecewise candidates rise then fall with R² at or above the `p_pct`-th
/// percentile of all piecewise R²; logistic candidates have R² at or above
/// the `l_pct`-th percentile of all logistic R². Words in both take the
/// piecewise split.
pub fn select_decline_candidates(
    pfits: &[Option<PiecewiseFit>],
    lfits: &[Option<LogisticTrajectoryFit>],
    p_pct: f64,
    l_pct: f64,
    months: usize,
) -> Vec<DeclineCandidate> {
    let gate = |r2s: Vec<f64>, pct: f64| (!r2s.is_empty()).then(|| percentile(&r2s, pct));
    let p_th = gate(pfits.iter().flatten().map(|f| f.r2).collect(), p_pct);
    let l_th = gate(lfits.iter().flatten().map(|f| f.r2).collect(), l_pct);
    let mut out = Vec::new();
    for w in 0..pfits.len().max(lfits.len()) {
        let pf = pfits.get(w).copied().flatten();
        let lf = lfits.get(w).copied().flatten();
        let in_p = matches!((pf, p_th), (Some(f), Some(th)) if f.m1 > 0.0 && f.m2 < 0.0 && f.r2 >= th);
        let in_l = matches!((lf, l_th), (Some(f), Some(th)) if f.r2 >= th);
        let cand = match (in_p, in_l) {
            (true, true) => (Source::Both, pf.unwrap().split),
            (true, false) => (Source::Piecewise, pf.unwrap().split),
            (false, true) => (Source::Logistic, lf.unwrap().split_month(months)),
            (false, false) => continue,
        };
        out.push(DeclineCandidate {
            word: w,
            source: cand.0,
            split: cand.1,
        });
    }
    out
}

/// Fitted log10 drop from the split to the last month.
pub fn decline_drop(c: &DeclineCandidate, pf: Option<&PiecewiseFit>, lf: Option<&LogisticTrajectoryFit>, months: usize) -> f64 {
    let t = months as f64;
    match (c.source, pf, lf) {
        (Source::Piecewise | Source::Both, Some(f), _) => -f.m2 * (t - f.split as f64),
        (Source::Logistic, _, Some(f)) if f.mu < t => {
            (logistic_density(f.mu, f.mu, f.scale) / logistic_density(t, f.mu, f.scale)).log10()
        }
        _ => 0.0,
    }
}

// ---------------------------------------------------------------------------
// Labels

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Label {
    Growth,
    Decline,
    Excluded,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::Growth => "growth",
            Label::Decline => "decline",
            Label::Excluded => "excluded",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "growth" => Label::Growth,
            "decline" => Label::Decline,
            "excluded" => Label::Excluded,
            _ => return Err(Error::invalid(format!("unknown label {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordLabel {
    pub word: String,
    pub label: Label,
    pub source: Source,
    /// Decline words only.
    pub split_month: Option<u32>,
    pub rho: Option<f64>,
    pub r2: Option<f64>,
}

pub const LABEL_HEADER: &str = "word\tlabel\tsource\tsplit_month\trho\tr2";

pub fn write_labels_tsv<W: Write>(labels: &[WordLabel], mut w: W) -> Result<()> {
    writeln!(w, "{LABEL_HEADER}")?;
    for l in labels {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            l.word,
            l.label,
            l.source,
            l.split_month.map(|s| s.to_string()).unwrap_or_default(),
            fmt_opt(l.rho),
            fmt_opt(l.r2)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels_tsv(path: &Path) -> Result<Vec<WordLabel>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != LABEL_HEADER {
                return Err(Error::format(path, "unexpected header"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let bad = |why: &str| Error::format(path, format!("line {}: {why}", i + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(bad("expected 6 tab-separated fields"));
        }
        let split_month = if f[3].is_empty() {
            None
        } else {
            Some(f[3].parse().map_err(|_| bad("bad split month"))?)
        };
        out.push(WordLabel {
            word: f[0].to_string(),
            label: f[1].parse().map_err(|_| bad("bad label"))?,
            source: f[2].parse().map_err(|_| bad("bad source"))?,
            split_month,
            rho: parse_opt(f[4]).map_err(|_| bad("bad rho"))?,
            r2: parse_opt(f[5]).map_err(|_| bad("bad r2"))?,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Detection over a frequency table

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    pub growth_pct: f64,
    pub piecewise_pct: f64,
    pub logistic_pct: f64,
    /// Largest share of zero-count months a growth series may have.
    pub max_undefined_frac: f64,
    /// A word passing both the growth screen and a decline fit is labeled
    /// decline only if its fitted log10 frequency falls at least this much
    /// after the split.
    pub min_decline_drop: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            growth_pct: 85.0,
            piecewise_pct: 85.0,
            logistic_pct: 99.0,
            max_undefined_frac: 0.25,
            min_decline_drop: 2f64.log10(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub screen: SpearmanScreen,
    /// `None` for words with any zero-count month.
    pub piecewise: Vec<Option<PiecewiseFit>>,
    pub logistic: Vec<Option<LogisticTrajectoryFit>>,
    pub decline: Vec<DeclineCandidate>,
    /// Growth and decline candidates, sorted by word.
    pub candidates: Vec<WordLabel>,
}

pub fn detect_candidates(ft: &FrequencyTable, cfg: &DetectionConfig) -> Result<Detection> {
    let months = ft.months();
    if months < 5 {
        return Err(Error::invalid(format!("detection needs at least 5 months, got {months}")));
    }
    let series: Vec<_> = (0..ft.words.len()).map(|w| ft.relative_frequency_series(w)).collect();
    let screen = spearman_screen(
        &series.iter().map(|s| s.log10.clone()).collect::<Vec<_>>(),
        cfg.growth_pct,
        cfg.max_undefined_frac,
    );
    let fits: Vec<(Option<PiecewiseFit>, Option<LogisticTrajectoryFit>)> = series
        .par_iter()
        .map(|s| {
            if s.defined_months() < months {
                return Ok((None, None));
            }
            let log: Vec<f64> = s.log10.iter().map(|v| v.expect("defined")).collect();
            let raw: Vec<f64> = s.p.iter().map(|v| v.expect("defined")).collect();
            Ok((
                Some(piecewise_fit(&log)?),
                Some(logistic_trajectory_fit(&raw, LogisticFitOptions::default())?),
            ))
        })
        .collect::<Result<_>>()?;
    let (piecewise, logistic): (Vec<_>, Vec<_>) = fits.into_iter().unzip();
    let decline = select_decline_candidates(&piecewise, &logistic, cfg.piecewise_pct, cfg.logistic_pct, months);

    let growth: BTreeSet<usize> = screen.candidates.iter().copied().collect();
    let mut candidates = Vec::new();
    let mut declining = BTreeSet::new();
    for c in &decline {
        let pf = piecewise[c.word].as_ref();
        let lf = logistic[c.word].as_ref();
        if growth.contains(&c.word) && decline_drop(c, pf, lf, months) < cfg.min_decline_drop {
            continue;
        }
        declining.insert(c.word);
        let r2 = match c.source {
            Source::Logistic => lf.map(|f| f.r2),
            _ => pf.map(|f| f.r2),
        };
        candidates.push(WordLabel {
            word: ft.words[c.word].clone(),
            label: Label::Decline,
            source: c.source,
            split_month: Some(c.split),
            rho: screen.rho_of(c.word),
            r2,
        });
    }
    for &w in growth.difference(&declining) {
        candidates.push(WordLabel {
            word: ft.words[w].clone(),
            label: Label::Growth,
            source: Source::Spearman,
            split_month: None,
            rho: screen.rho_of(w),
            r2: None,
        });
    }
    candidates.sort_by(|a, b| a.word.cmp(&b.word));
    Ok(Detection {
        screen,
        piecewise,
        logistic,
        decline,
        candidates,
    })
}

// ---------------------------------------------------------------------------
// Annotation

#[derive(Debug, Clone, PartialEq)]
pub struct Annotated {
    /// Allowlisted candidates with their label, and denylisted ones as excluded.
    pub labels: Vec<WordLabel>,
    /// Candidates on neither list.
    pub todo: Vec<WordLabel>,
}

/// Reads a word list: one word per line, blank lines and `#` comments ignored.
pub fn read_word_list(path: &Path) -> Result<BTreeSet<String>> {
    let file = std::fs::File::open(path)?;
    let mut out = BTreeSet::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            out.insert(t.to_string());
        }
    }
    Ok(out)
}

pub fn apply_annotations(candidates: &[WordLabel], allow: &BTreeSet<String>, deny: &BTreeSet<String>) -> Result<Annotated> {
    if let Some(w) = allow.intersection(deny).next() {
        return Err(Error::invalid(format!("word {w:?} is on both the allowlist and the denylist")));
    }
    let mut labels = Vec::new();
    let mut todo = Vec::new();
    for c in candidates {
        if allow.contains(&c.word) {
            labels.push(c.clone());
        } else if deny.contains(&c.word) {
            labels.push(WordLabel {
                label: Label::Excluded,
                ..c.clone()
            });
        } else {
            todo.push(c.clone());
        }
    }
    Ok(Annotated { labels, todo })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn defined(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().copied().map(Some).collect()
    }

    #[test]
    fn monotone_series_have_unit_rho() {
        let up: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let down: Vec<f64> = up.iter().map(|v| -v).collect();
        assert!((screen_series(&defined(&up), 0.25).unwrap() - 1.0).abs() < 1e-12);
        assert!((screen_series(&defined(&down), 0.25).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_formula_example() {
        // 1 - 6 * 2 / (4 * 15) = 0.8
        let r = screen_series(&defined(&[1.0, 3.0, 2.0, 4.0]), 0.25).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
    }

    #[test]
    fn screen_exclusions() {
        assert_eq!(screen_series(&defined(&[2.0; 6]), 0.25), Err(ScreenExclusion::Constant));
        let gappy = [Some(1.0), None, None, Some(2.0), Some(3.0), Some(4.0)];
        assert_eq!(screen_series(&gappy, 0.25), Err(ScreenExclusion::TooManyUndefined));
        let one_gap = [Some(1.0), None, Some(2.0), Some(3.0), Some(4.0)];
        assert!((screen_series(&one_gap, 0.25).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(screen_series(&[Some(1.0), Some(2.0)], 0.25), Err(ScreenExclusion::TooFewPoints));
    }

    #[test]
    fn percentile_gate_passes_top_share() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [7usize, 20, 100, 333] {
            let series: Vec<Vec<Option<f64>>> = (0..n)
                .map(|_| (0..12).map(|_| Some(rng.random::<f64>())).collect())
                .collect();
            let screen = spearman_screen(&series, 85.0, 0.25);
            let screened = screen.rho.iter().filter(|r| r.is_ok()).count();
            let expect = (0.15 * screened as f64).ceil() as i64;
            let got = screen.candidates.len() as i64;
            assert!((got - expect).abs() <= 1, "n={n}: {got} vs {expect}");
        }
    }

    proptest! {
        #[test]
        fn rho_ignores_monotone_transform(v in proptest::collection::vec(-3.0f64..3.0, 3..30)) {
            let a = screen_series(&defined(&v), 0.25);
            let e: Vec<f64> = v.iter().map(|x| x.exp()).collect();
            let b = screen_series(&defined(&e), 0.25);
            match (a, b) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }

    fn tent(n: usize, peak: usize) -> Vec<f64> {
        (1..=n)
            .map(|t| if t <= peak { t as f64 } else { 2.0 * peak as f64 - t as f64 })
            .collect()
    }

    #[test]
    fn noiseless_tent_is_recovered() {
        let f = piecewise_fit(&tent(20, 10)).unwrap();
        assert_eq!(f.split, 10);
        assert!((f.m1 - 1.0).abs() < 1e-9 && (f.m2 + 1.0).abs() < 1e-9);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(f.intercept.abs() < 1e-9);
    }

    #[test]
    fn straight_line_takes_earliest_split() {
        let line: Vec<f64> = (1..=12).map(|t| 0.5 * t as f64 - 3.0).collect();
        let f = piecewise_fit(&line).unwrap();
        assert_eq!(f.split, 2);
        assert!((f.m1 - f.m2).abs() < 1e-9);
        for s in 2..=10 {
            assert!((piecewise_fit_at(&line, s).unwrap().r2 - f.r2).abs() < 1e-12);
        }
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(piecewise_fit(&[1.0, 2.0, 3.0, 2.0]).is_err());
        assert!(piecewise_fit(&[1.0, 2.0, 3.0, 2.0, 1.0]).is_ok());
    }

    /// SSE of the best continuous two-phase line at one split, from the 3x3
    /// normal equations solved by Cramer's rule.
    fn brute_sse(y: &[f64], s: usize) -> f64 {
        let cols: Vec<[f64; 3]> = (1..=y.len())
            .map(|t| [1.0, t.min(s) as f64, t.saturating_sub(s) as f64])
            .collect();
        let mut a = [[0.0; 3]; 3];
        let mut b = [0.0; 3];
        for (row, &yy) in cols.iter().zip(y) {
            for i in 0..3 {
                b[i] += row[i] * yy;
                for j in 0..3 {
                    a[i][j] += row[i] * row[j];
                }
            }
        }
        let det = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det(a);
        let coef: Vec<f64> = (0..3)
            .map(|k| {
                let mut m = a;
                for i in 0..3 {
                    m[i][k] = b[i];
                }
                det(m) / d
            })
            .collect();
        cols.iter()
            .zip(y)
            .map(|(r, &yy)| {
                let e = yy - (coef[0] * r[0] + coef[1] * r[1] + coef[2] * r[2]);
                e * e
            })
            .sum()
    }

    #[test]
    fn noisy_tent_split_within_one_month() {
        let noise = Normal::new(0.0, 0.05).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = rng.random_range(8..=28);
            let y: Vec<f64> = (1..=36)
                .map(|t| {
                    let base = if t <= truth { 0.1 * t as f64 } else { 0.1 * truth as f64 - 0.1 * (t - truth) as f64 };
                    base + noise.sample(&mut rng)
                })
                .collect();
            let f = piecewise_fit(&y).unwrap();
            let oracle = (2..=34).min_by(|&a, &b| brute_sse(&y, a).total_cmp(&brute_sse(&y, b))).unwrap();
            assert!((f.split as i64 - truth as i64).abs() <= 1, "seed {seed}: {} vs {truth}", f.split);
            assert!((f.split as i64 - oracle as i64).abs() <= 1);
        }
    }

    #[test]
    fn exhaustive_search_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let n = rng.random_range(5..=12);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = piecewise_fit(&y).unwrap();
            assert!((f.sse - brute_sse(&y, f.split as usize)).abs() < 1e-9);
            for s in 2..=n - 2 {
                assert!(f.sse <= brute_sse(&y, s) + 1e-9, "split {} beat by {s}", f.split);
            }
        }
    }

    #[test]
    fn density_series_is_recovered() {
        let y: Vec<f64> = (1..=36).map(|t| 0.02 * logistic_density(t as f64, 18.0, 3.0)).collect();
        let f = logistic_trajectory_fit(&y, LogisticFitOptions::default()).unwrap();
        assert!(f.converged);
        assert!((f.mu - 18.0).abs() < 0.5, "{f:?}");
        assert!((f.scale - 3.0).abs() < 0.3, "{f:?}");
        assert!(f.r2 > 0.99);
    }

    #[test]
    fn constant_series_has_no_fit() {
        let f = logistic_trajectory_fit(&[1e-4; 36], LogisticFitOptions::default()).unwrap();
        assert_eq!(f.r2, 0.0);
    }

    #[test]
    fn triangle_peak_is_centered() {
        let y: Vec<f64> = (1..=24).map(|t| (12.0 - (t as f64 - 12.0).abs()).max(0.0) * 1e-5 + 1e-7).collect();
        let f = logistic_trajectory_fit(&y, LogisticFitOptions::default()).unwrap();
        // grid oracle over centers with the scale and amplitude profiled out
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=240 {
            let mu = i as f64 / 10.0;
            for j in 1..=200 {
                let (_, sse) = profile(&y, mu, j as f64 / 20.0);
                if sse < best.0 {
                    best = (sse, mu);
                }
            }
        }
        assert!((best.1 - 12.0).abs() <= 1.0);
        assert!((f.mu - 12.0).abs() <= 1.0, "{f:?}");
        assert!(f.sse <= best.0 + 1e-18);
    }

    #[test]
    fn refinement_step_limit_is_flagged() {
        let y: Vec<f64> = (1..=36).map(|t| 0.02 * logistic_density(t as f64, 18.3, 2.7)).collect();
        let f = logistic_trajectory_fit(&y, LogisticFitOptions { max_steps: 1 }).unwrap();
        assert!(!f.converged);
        assert!(f.amplitude > 0.0);
    }

    fn pf(m1: f64, m2: f64, r2: f64, split: u32) -> Option<PiecewiseFit> {
        Some(PiecewiseFit {
            split,
            intercept: 0.0,
            m1,
            m2,
            sse: 0.0,
            r2,
        })
    }

    fn lf(mu: f64, r2: f64) -> Option<LogisticTrajectoryFit> {
        Some(LogisticTrajectoryFit {
            mu,
            scale: 2.0,
            amplitude: 1.0,
            sse: 0.0,
            r2,
            converged: true,
        })
    }

    #[test]
    fn decline_gates_and_precedence() {
        // 20 words; piecewise R² 0.00..0.95, logistic R² likewise
        let mut p: Vec<_> = (0..20).map(|i| pf(0.1, -0.1, i as f64 / 20.0, 5)).collect();
        let mut l: Vec<_> = (0..20).map(|i| lf(7.6, i as f64 / 20.0)).collect();
        // top piecewise word has the wrong first slope
        p[19] = pf(-0.1, -0.1, 0.95, 5);
        // word 18 is top for both
        l[18] = lf(3.2, 0.99);
        l[19] = lf(7.6, 0.5);
        let d = select_decline_candidates(&p, &l, 85.0, 99.0, 12);
        let words: Vec<usize> = d.iter().map(|c| c.word).collect();
        assert!(!words.contains(&19));
        let w18 = d.iter().find(|c| c.word == 18).unwrap();
        assert_eq!(w18.source, Source::Both);
        assert_eq!(w18.split, 5);
        assert!(d.iter().all(|c| c.word >= 17));
        assert_eq!(select_decline_candidates(&[], &[], 85.0, 99.0, 12), vec![]);
    }

    #[test]
    fn logistic_split_is_rounded_center() {
        let p = vec![None; 3];
        let l = vec![lf(7.6, 0.1), lf(7.6, 0.2), lf(7.6, 0.9)];
        let d = select_decline_candidates(&p, &l, 85.0, 99.0, 12);
        assert_eq!(d, vec![DeclineCandidate { word: 2, source: Source::Logistic, split: 8 }]);
    }

    fn cand(word: &str, label: Label) -> WordLabel {
        WordLabel {
            word: word.into(),
            label,
            source: if label == Label::Growth { Source::Spearman } else { Source::Piecewise },
            split_month: (label == Label::Decline).then_some(4),
            rho: Some(0.9),
            r2: None,
        }
    }

    #[test]
    fn annotations_split_candidates() {
        let c = vec![cand("yeet", Label::Growth), cand("obama", Label::Growth), cand("fleek", Label::Decline)];
        let allow: BTreeSet<String> = ["yeet".to_string()].into();
        let deny: BTreeSet<String> = ["obama".to_string()].into();
        let a = apply_annotations(&c, &allow, &deny).unwrap();
        assert_eq!(a.labels.len(), 2);
        assert_eq!(a.labels[0].label, Label::Growth);
        assert_eq!(a.labels[1].label, Label::Excluded);
        assert_eq!(a.todo, vec![c[2].clone()]);
        let both: BTreeSet<String> = ["yeet".to_string()].into();
        assert!(apply_annotations(&c, &allow, &both).is_err());
    }

    #[test]
    fn label_tsv_roundtrip() {
        let mut labels = vec![cand("a", Label::Growth), cand("b", Label::Decline), cand("c", Label::Excluded)];
        labels[1].r2 = Some(0.123456789);
        labels[2].rho = None;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.tsv");
        write_labels_tsv(&labels, std::fs::File::create(&p).unwrap()).unwrap();
        assert_eq!(read_labels_tsv(&p).unwrap(), labels);
    }

    #[test]
    fn detection_on_planted_series() {
        let months = 24;
        let mut words = Vec::new();
        let mut counts = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for i in 0..60 {
            words.push(format!("noise{i:02}"));
            counts.push((0..months).map(|_| rng.random_range(900..1100)).collect::<Vec<u64>>());
        }
        words.push("riser".into());
        counts.push((0..months).map(|t| 100 + 40 * t as u64).collect());
        words.push("faller".into());
        counts.push(
            (1..=months)
                .map(|t| 20 + (3000.0 * logistic_density(t as f64, 10.0, 2.0)) as u64)
                .collect(),
        );
        let ft = FrequencyTable {
            words,
            counts,
            month_totals: vec![1_000_000; months],
        };
        let d = detect_candidates(&ft, &DetectionConfig::default()).unwrap();
        let find = |w: &str| d.candidates.iter().find(|c| c.word == w).cloned();
        assert_eq!(find("riser").unwrap().label, Label::Growth);
        let f = find("faller").unwrap();
        assert_eq!(f.label, Label::Decline);
        assert!((f.split_month.unwrap() as i64 - 10).abs() <= 2);
        // split-point consistency: the fitted series at the split is above month 1
        let w = ft.index_of("faller").unwrap();
        let s = ft.relative_frequency_series(w);
        assert!(s.log10[f.split_month.unwrap() as usize - 1].unwrap() >= s.log10[0].unwrap());
    }
}
