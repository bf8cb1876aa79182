//! Social dissemination against a bag-of-tokens null model, and linguistic
//! dissemination as the residual of a per-month frequency/context power law.
//!
//! Social values use natural logs. Linguistic values are in log10 context
//! units, matching the log10 frequency axis.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::counts::{CountTables, ContextTable, FrequencyTable, SocialUsageTable, UnitKind};
use crate::error::{Error, Result};
use crate::numstats::{ols_fit, Matrix};
use crate::series::{fmt_opt, parse_opt, WordMonthMatrix};

/// Expected number of distinct units using a word of relative frequency `p`
/// when every token a unit writes is an independent draw:
/// `sum_u (1 - exp(-p * m_u))`.
pub fn expected_unit_count(p: f64, unit_tokens: &BTreeMap<String, u64>) -> Result<f64> {
    let mut hist: BTreeMap<u64, u64> = BTreeMap::new();
    for &m in unit_tokens.values() {
        *hist.entry(m).or_insert(0) += 1;
    }
    expected_unit_count_histogram(p, &hist.into_iter().collect::<Vec<_>>())
}

/// [`expected_unit_count`] over `(m, number of units with m tokens)` pairs.
pub fn expected_unit_count_histogram(p: f64, hist: &[(u64, u64)]) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("relative frequency {p} is not in (0, 1]")));
    }
    if hist.iter().all(|&(_, k)| k == 0) {
        return Err(Error::invalid("no units contributed tokens"));
    }
    Ok(hist
        .iter()
        .map(|&(m, k)| k as f64 * -(-p * m as f64).exp_m1())
        .sum())
}

/// `ln U - ln U~` per month for one word; `None` where the word is absent.
pub fn social_dissemination_series(usage: &SocialUsageTable, ft: &FrequencyTable, w: usize) -> Result<Vec<Option<f64>>> {
    let hists: Vec<Vec<(u64, u64)>> = (0..ft.months()).map(|m| usage.token_histogram(m)).collect();
    social_row(usage, ft, w, &hists)
}

fn social_row(usage: &SocialUsageTable, ft: &FrequencyTable, w: usize, hists: &[Vec<(u64, u64)>]) -> Result<Vec<Option<f64>>> {
    (0..ft.months())
        .map(|m| {
            let Some(p) = ft.relative(w, m) else {
                return Ok(None);
            };
            let observed = usage.units_of_word[w][m];
            if observed == 0 {
                return Err(Error::invalid(format!(
                    "word {:?} has tokens in month {} but no {} using it",
                    ft.words[w],
                    m + 1,
                    usage.kind
                )));
            }
            let expected = expected_unit_count_histogram(p, &hists[m])?;
            Ok(Some((observed as f64).ln() - expected.ln()))
        })
        .collect()
}

/// Social dissemination of every word for one unit kind.
pub fn social_dissemination(usage: &SocialUsageTable, ft: &FrequencyTable) -> Result<WordMonthMatrix> {
    let hists: Vec<Vec<(u64, u64)>> = (0..ft.months()).map(|m| usage.token_histogram(m)).collect();
    let values = (0..ft.words.len())
        .into_par_iter()
        .map(|w| social_row(usage, ft, w, &hists))
        .collect::<Result<Vec<_>>>()?;
    Ok(WordMonthMatrix {
        words: ft.words.clone(),
        values,
    })
}

/// Per-month regression of log10 contexts on log10 relative frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeapsFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Number of words in the fit.
    pub n: usize,
    /// Every fitted word had the same frequency; slope is fixed at 0.
    pub degenerate: bool,
}

impl HeapsFit {
    pub fn predict(&self, log10_p: f64) -> f64 {
        self.intercept + self.slope * log10_p
    }

    pub fn residual(&self, log10_p: f64, log10_c: f64) -> f64 {
        log10_c - self.predict(log10_p)
    }
}

/// Least-squares line through `(log10 p, log10 C)` points.
pub fn heaps_fit(points: &[(f64, f64)]) -> Result<HeapsFit> {
    if points.len() < 3 {
        return Err(Error::invalid(format!("a frequency/context fit needs at least 3 words, got {}", points.len())));
    }
    let x0 = points[0].0;
    if points.iter().all(|&(x, _)| x == x0) {
        let mean = points.iter().map(|&(_, y)| y).sum::<f64>() / points.len() as f64;
        return Ok(HeapsFit {
            slope: 0.0,
            intercept: mean,
            r2: 0.0,
            n: points.len(),
            degenerate: true,
        });
    }
    let x = Matrix::from_rows(&points.iter().map(|&(x, _)| [x]).collect::<Vec<_>>())?;
    let y: Vec<f64> = points.iter().map(|&(_, y)| y).collect();
    let m = ols_fit(&x, &y)?;
    Ok(HeapsFit {
        slope: m.slopes()[0],
        intercept: m.intercept(),
        r2: m.r2,
        n: points.len(),
        degenerate: false,
    })
}

/// Fits month `t` (0-based) over words with at least `min_count` tokens and
/// returns residuals for every word present in that month.
pub fn linguistic_dissemination_month(
    ct: &ContextTable,
    ft: &FrequencyTable,
    t: usize,
    min_count: u64,
) -> Result<(HeapsFit, Vec<Option<f64>>)> {
    if t >= ft.months() {
        return Err(Error::invalid(format!("month index {t} is outside the table")));
    }
    let point = |w: usize| -> Option<(f64, f64)> {
        let p = ft.relative(w, t)?;
        let c = ct.contexts[w][t];
        (c > 0).then(|| (p.log10(), (c as f64).log10()))
    };
    let fit_points: Vec<(f64, f64)> = (0..ft.words.len())
        .filter(|&w| ft.counts[w][t] >= min_count.max(1))
        .filter_map(point)
        .collect();
    let fit = heaps_fit(&fit_points).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::invalid(format!("month {}: {msg}", t + 1)),
        other => other,
    })?;
    let residuals = (0..ft.words.len())
        .map(|w| point(w).map(|(x, y)| fit.residual(x, y)))
        .collect();
    Ok((fit, residuals))
}

/// All four dissemination matrices plus the per-month power-law fits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dissemination {
    pub user: WordMonthMatrix,
    pub subreddit: WordMonthMatrix,
    pub thread: WordMonthMatrix,
    pub linguistic: WordMonthMatrix,
    /// `None` for months with fewer than three fit words.
    pub heaps: Vec<Option<HeapsFit>>,
}

pub const HEAPS_FILE: &str = "heaps_fit.csv";

fn metric_file(name: &str) -> String {
    format!("dissem_{name}.csv")
}

impl Dissemination {
    pub fn social(&self, kind: UnitKind) -> &WordMonthMatrix {
        match kind {
            UnitKind::User => &self.user,
            UnitKind::Subreddit => &self.subreddit,
            UnitKind::Thread => &self.thread,
        }
    }

    pub fn months(&self) -> usize {
        self.heaps.len()
    }

    pub fn file_names() -> Vec<String> {
        let mut v: Vec<String> = UnitKind::ALL.iter().map(|k| metric_file(k.name())).collect();
        v.push(metric_file("linguistic"));
        v.push(HEAPS_FILE.to_string());
        v
    }

    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let months = self.months();
        for kind in UnitKind::ALL {
            self.social(kind).write_csv(&dir.join(metric_file(kind.name())), months)?;
        }
        self.linguistic.write_csv(&dir.join(metric_file("linguistic")), months)?;
        let mut w = csv::Writer::from_path(dir.join(HEAPS_FILE))?;
        w.write_record(["month", "slope", "intercept", "r2", "n", "degenerate"])?;
        for (m, fit) in self.heaps.iter().enumerate() {
            let (s, i, r, n, d) = match fit {
                Some(f) => (Some(f.slope), Some(f.intercept), Some(f.r2), f.n.to_string(), f.degenerate.to_string()),
                None => (None, None, None, "0".to_string(), String::new()),
            };
            w.write_record([(m + 1).to_string(), fmt_opt(s), fmt_opt(i), fmt_opt(r), n, d])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(dir: &Path) -> Result<Self> {
        let read = |name: &str| WordMonthMatrix::read_csv(&dir.join(metric_file(name)));
        let user = read("user")?;
        let subreddit = read("subreddit")?;
        let thread = read("thread")?;
        let linguistic = read("linguistic")?;
        let hpath = dir.join(HEAPS_FILE);
        let mut r = csv::Reader::from_path(&hpath)?;
        let mut heaps = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |why: String| Error::format(&hpath, format!("row {}: {why}", i + 2));
            if rec.len() != 6 {
                return Err(bad(format!("{} fields", rec.len())));
            }
            let f = |k: usize| parse_opt(&rec[k]).map_err(|e| bad(e.to_string()));
            heaps.push(match (f(1)?, f(2)?, f(3)?) {
                (Some(slope), Some(intercept), Some(r2)) => Some(HeapsFit {
                    slope,
                    intercept,
                    r2,
                    n: rec[4].parse().map_err(|_| bad("bad n".into()))?,
                    degenerate: rec[5].parse().map_err(|_| bad("bad degenerate flag".into()))?,
                }),
                _ => None,
            });
        }
        for m in [&user, &subreddit, &thread, &linguistic] {
            if m.words != user.words || m.values.iter().any(|row| row.len() != heaps.len()) {
                return Err(Error::format(dir, "dissemination files disagree on words or months"));
            }
        }
        Ok(Self {
            user,
            subreddit,
            thread,
            linguistic,
            heaps,
        })
    }
}

/// Computes every dissemination measure from finalized count tables.
pub fn compute_dissemination(tables: &CountTables, min_count: u64) -> Result<Dissemination> {
    let ft = &tables.frequency;
    let social = |k: UnitKind| social_dissemination(tables.usage(k), ft);
    let months: Vec<Option<(HeapsFit, Vec<Option<f64>>)>> = (0..ft.months())
        .into_par_iter()
        .map(|t| match linguistic_dissemination_month(&tables.contexts, ft, t, min_count) {
            Ok(v) => Ok(Some(v)),
            // too few words: the month stays undefined
            Err(Error::InvalidInput(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let mut values = vec![vec![None; ft.months()]; ft.words.len()];
    let mut heaps = Vec::with_capacity(months.len());
    for (t, month) in months.into_iter().enumerate() {
        match month {
            Some((fit, res)) => {
                for (w, r) in res.into_iter().enumerate() {
                    values[w][t] = r;
                }
                heaps.push(Some(fit));
            }
            None => heaps.push(None),
        }
    }
    Ok(Dissemination {
        user: social(UnitKind::User)?,
        subreddit: social(UnitKind::Subreddit)?,
        thread: social(UnitKind::Thread)?,
        linguistic: WordMonthMatrix {
            words: ft.words.clone(),
            values,
        },
        heaps,
    })
}
