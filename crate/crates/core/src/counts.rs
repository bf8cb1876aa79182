//! Per-month count tables: word frequencies, distinct trigram contexts, and
//! social-unit usage.
//!
//! Accumulation happens per shard in a [`CountAccumulator`]. Accumulators
//! keep the underlying distinct sets (trigrams, word-unit pairs) rather than
//! cardinalities, so [`CountAccumulator::merge`] is a set union and the
//! finalized tables do not depend on sharding or merge order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{NormalizedComment, Vocabulary, WordId, END_ID, START_ID, UNK_ID};

pub type Trigram = [WordId; 3];

/// Distinct-trigram store for one month.
///
/// Cardinalities are only read at finalization, so an approximate mergeable
/// sketch can stand in for the exact set at corpus scale.
pub trait ContextSet: Default + Send + Sync {
    fn insert(&mut self, trigram: Trigram);
    fn merge(&mut self, other: Self);
    /// Number of distinct trigrams each word occupies (any position),
    /// indexed by word id.
    fn word_context_counts(&self, vocab_len: usize) -> Vec<u64>;
    fn distinct(&self) -> u64;
}

/// Exact distinct-trigram set.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ExactContexts(HashSet<Trigram>);

impl ContextSet for ExactContexts {
    fn insert(&mut self, trigram: Trigram) {
        self.0.insert(trigram);
    }

    fn merge(&mut self, other: Self) {
        if other.0.len() > self.0.len() {
            let small = std::mem::replace(&mut self.0, other.0);
            self.0.extend(small);
        } else {
            self.0.extend(other.0);
        }
    }

    fn word_context_counts(&self, vocab_len: usize) -> Vec<u64> {
        let mut out = vec![0u64; vocab_len];
        for tri in &self.0 {
            for (i, &w) in tri.iter().enumerate() {
                // a word filling two slots of one trigram counts once
                if is_target(w) && !tri[..i].contains(&w) {
                    out[w as usize] += 1;
                }
            }
        }
        out
    }

    fn distinct(&self) -> u64 {
        self.0.len() as u64
    }
}

#[inline]
fn is_target(w: WordId) -> bool {
    w != UNK_ID && w != START_ID && w != END_ID
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UnitKind {
    User,
    Subreddit,
    Thread,
}

impl UnitKind {
    pub const ALL: [UnitKind; 3] = [UnitKind::User, UnitKind::Subreddit, UnitKind::Thread];

    pub fn name(self) -> &'static str {
        match self {
            UnitKind::User => "user",
            UnitKind::Subreddit => "subreddit",
            UnitKind::Thread => "thread",
        }
    }

    fn unit_of(self, c: &NormalizedComment) -> &str {
        match self {
            UnitKind::User => &c.author,
            UnitKind::Subreddit => &c.subreddit,
            UnitKind::Thread => &c.thread,
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Default, Clone)]
struct SocialAccumulator {
    names: Vec<String>,
    ids: HashMap<String, u32>,
    /// per month: unit -> tokens
    unit_tokens: Vec<HashMap<u32, u64>>,
    /// per month: distinct (word, unit) pairs
    pairs: Vec<HashSet<(WordId, u32)>>,
}

impl SocialAccumulator {
    fn new(months: usize) -> Self {
        Self {
            unit_tokens: vec![HashMap::new(); months],
            pairs: vec![HashSet::new(); months],
            ..Default::default()
        }
    }

    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    fn merge(&mut self, other: SocialAccumulator) {
        let remap: Vec<u32> = other.names.iter().map(|n| self.intern(n)).collect();
        for (m, (tokens, pairs)) in other.unit_tokens.into_iter().zip(other.pairs).enumerate() {
            for (u, c) in tokens {
                *self.unit_tokens[m].entry(remap[u as usize]).or_insert(0) += c;
            }
            self.pairs[m].extend(pairs.into_iter().map(|(w, u)| (w, remap[u as usize])));
        }
    }

    fn finalize(self, kind: UnitKind, vocab_len: usize) -> SocialUsageTable {
        let months = self.unit_tokens.len();
        let mut units_of_word = vec![vec![0u64; months]; vocab_len];
        for (m, pairs) in self.pairs.iter().enumerate() {
            for &(w, _) in pairs {
                units_of_word[w as usize][m] += 1;
            }
        }
        let unit_tokens = self
            .unit_tokens
            .into_iter()
            .map(|tokens| {
                tokens
                    .into_iter()
                    .map(|(u, c)| (self.names[u as usize].clone(), c))
                    .collect()
            })
            .collect();
        SocialUsageTable {
            kind,
            units_of_word,
            unit_tokens,
        }
    }
}

/// Mergeable per-shard counting state.
#[derive(Debug)]
pub struct CountAccumulator<C: ContextSet = ExactContexts> {
    vocab_len: usize,
    months: usize,
    /// `[month * vocab_len + word]`
    freq: Vec<u64>,
    month_totals: Vec<u64>,
    contexts: Vec<C>,
    social: [SocialAccumulator; 3],
}

impl<C: ContextSet> CountAccumulator<C> {
    pub fn new(vocab_len: usize, months: usize) -> Self {
        Self {
            vocab_len,
            months,
            freq: vec![0; vocab_len * months],
            month_totals: vec![0; months],
            contexts: (0..months).map(|_| C::default()).collect(),
            social: [
                SocialAccumulator::new(months),
                SocialAccumulator::new(months),
                SocialAccumulator::new(months),
            ],
        }
    }

    pub fn observe(&mut self, comment: &NormalizedComment, vocab: &Vocabulary) -> Result<()> {
        if comment.month.0 == 0 || comment.month.slot() >= self.months {
            return Err(Error::invalid(format!(
                "comment month {} outside a {}-month window",
                comment.month.0, self.months
            )));
        }
        let m = comment.month.slot();
        let mut words_in_comment: Vec<WordId> = Vec::new();
        let mut n_tokens = 0u64;
        for sentence in &comment.sentences {
            let ids = vocab.apply(sentence);
            n_tokens += ids.len() as u64;
            let mut padded = Vec::with_capacity(ids.len() + 2);
            padded.push(START_ID);
            padded.extend_from_slice(&ids);
            padded.push(END_ID);
            for tri in padded.windows(3) {
                self.contexts[m].insert([tri[0], tri[1], tri[2]]);
            }
            for &w in &ids {
                if w != UNK_ID {
                    self.freq[m * self.vocab_len + w as usize] += 1;
                    words_in_comment.push(w);
                }
            }
        }
        self.month_totals[m] += n_tokens;
        words_in_comment.sort_unstable();
        words_in_comment.dedup();
        for (kind, acc) in UnitKind::ALL.iter().zip(self.social.iter_mut()) {
            let unit = acc.intern(kind.unit_of(comment));
            *acc.unit_tokens[m].entry(unit).or_insert(0) += n_tokens;
            for &w in &words_in_comment {
                acc.pairs[m].insert((w, unit));
            }
        }
        Ok(())
    }

    /// Combines two accumulators built over disjoint shards of one window.
    pub fn merge(mut self, other: Self) -> Result<Self> {
        if self.vocab_len != other.vocab_len || self.months != other.months {
            return Err(Error::invalid("merging accumulators with different shapes"));
        }
        for (a, b) in self.freq.iter_mut().zip(&other.freq) {
            *a += b;
        }
        for (a, b) in self.month_totals.iter_mut().zip(&other.month_totals) {
            *a += b;
        }
        for (a, b) in self.contexts.iter_mut().zip(other.contexts) {
            a.merge(b);
        }
        for (a, b) in self.social.iter_mut().zip(other.social) {
            a.merge(b);
        }
        Ok(self)
    }

    pub fn finalize(self, vocab: &Vocabulary) -> CountTables {
        let v = self.vocab_len;
        let months = self.months;
        let mut counts = vec![vec![0u64; months]; v];
        for m in 0..months {
            for w in 0..v {
                counts[w][m] = self.freq[m * v + w];
            }
        }
        let mut contexts = vec![vec![0u64; months]; v];
        let mut distinct = vec![0u64; months];
        for (m, set) in self.contexts.iter().enumerate() {
            distinct[m] = set.distinct();
            for (w, c) in set.word_context_counts(v).into_iter().enumerate() {
                contexts[w][m] = c;
            }
        }
        let [user, subreddit, thread] = self.social;
        CountTables {
            frequency: FrequencyTable {
                words: vocab.words().to_vec(),
                counts,
                month_totals: self.month_totals,
            },
            contexts: ContextTable {
                contexts,
                distinct_trigrams: distinct,
            },
            usage: [
                user.finalize(UnitKind::User, v),
                subreddit.finalize(UnitKind::Subreddit, v),
                thread.finalize(UnitKind::Thread, v),
            ],
        }
    }
}

/// Per-word, per-month token counts and monthly totals `N_t`.
///
/// `month_totals` include out-of-vocabulary tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyTable {
    pub words: Vec<String>,
    /// `[word][month]`
    pub counts: Vec<Vec<u64>>,
    pub month_totals: Vec<u64>,
}

/// Relative and log10 relative frequency of one word; `None` marks a
/// zero-count month.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySeries {
    pub p: Vec<Option<f64>>,
    pub log10: Vec<Option<f64>>,
}

impl FrequencySeries {
    pub fn defined_months(&self) -> usize {
        self.p.iter().filter(|v| v.is_some()).count()
    }
}

impl FrequencyTable {
    pub fn months(&self) -> usize {
        self.month_totals.len()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.words.iter().position(|w| w == word)
    }

    /// Relative frequency of word `w` in `month` (0-based), if nonzero.
    pub fn relative(&self, w: usize, month: usize) -> Option<f64> {
        let c = self.counts[w][month];
        let n = self.month_totals[month];
        (c > 0 && n > 0).then(|| c as f64 / n as f64)
    }

    pub fn relative_frequency_series(&self, w: usize) -> FrequencySeries {
        let p: Vec<Option<f64>> = (0..self.months()).map(|m| self.relative(w, m)).collect();
        let log10 = p.iter().map(|v| v.map(f64::log10)).collect();
        FrequencySeries { p, log10 }
    }
}

/// Distinct trigram contexts per word and month.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextTable {
    /// `[word][month]`
    pub contexts: Vec<Vec<u64>>,
    pub distinct_trigrams: Vec<u64>,
}

/// Distinct units using each word, and token totals per unit, for one unit kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocialUsageTable {
    pub kind: UnitKind,
    /// `[word][month]`: distinct units that used the word
    pub units_of_word: Vec<Vec<u64>>,
    /// per month: unit -> tokens contributed
    pub unit_tokens: Vec<BTreeMap<String, u64>>,
}

impl SocialUsageTable {
    /// `(m, number of units contributing exactly m tokens)` for one month,
    /// ascending in `m`.
    pub fn token_histogram(&self, month: usize) -> Vec<(u64, u64)> {
        let mut h: BTreeMap<u64, u64> = BTreeMap::new();
        for &m in self.unit_tokens[month].values() {
            *h.entry(m).or_insert(0) += 1;
        }
        h.into_iter().collect()
    }

    pub fn active_units(&self, month: usize) -> usize {
        self.unit_tokens[month].len()
    }
}

/// All finalized tables for one corpus window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTables {
    pub frequency: FrequencyTable,
    pub contexts: ContextTable,
    /// user, subreddit, thread
    pub usage: [SocialUsageTable; 3],
}

impl CountTables {
    pub fn usage(&self, kind: UnitKind) -> &SocialUsageTable {
        &self.usage[kind as usize]
    }
}

/// Accumulates `comments` in `shards` parallel blocks and merges them.
pub fn accumulate_counts(comments: &[NormalizedComment], vocab: &Vocabulary, months: usize, shards: usize) -> Result<CountTables> {
    let shards = shards.max(1);
    let chunk = comments.len().div_ceil(shards).max(1);
    let parts: Vec<Result<CountAccumulator>> = comments
        .par_chunks(chunk)
        .map(|block| {
            let mut acc = CountAccumulator::new(vocab.len(), months);
            for c in block {
                acc.observe(c, vocab)?;
            }
            Ok(acc)
        })
        .collect();
    let mut acc = CountAccumulator::new(vocab.len(), months);
    for p in parts {
        acc = acc.merge(p?)?;
    }
    Ok(acc.finalize(vocab))
}

// ---------------------------------------------------------------------------
// CSV persistence

pub const TOTAL_ROW: &str = "#total";
pub const DISTINCT_ROW: &str = "#distinct_trigrams";

fn month_header(months: usize, first: &str) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain((1..=months).map(|m| format!("month_{m}")))
        .collect()
}

fn write_u64_matrix<W: Write>(
    out: W,
    first: &str,
    months: usize,
    header_row: Option<(&str, &[u64])>,
    rows: impl Iterator<Item = (String, Vec<u64>)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(month_header(months, first))?;
    if let Some((label, vals)) = header_row {
        w.write_record(std::iter::once(label.to_string()).chain(vals.iter().map(u64::to_string)))?;
    }
    for (name, vals) in rows {
        w.write_record(std::iter::once(name).chain(vals.iter().map(u64::to_string)))?;
    }
    w.flush()?;
    Ok(())
}

type U64Rows = (Option<Vec<u64>>, Vec<(String, Vec<u64>)>);

fn read_u64_matrix(path: &Path, first: &str, header_label: Option<&str>) -> Result<U64Rows> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = r.headers()?.clone();
    if header.get(0) != Some(first) {
        return Err(Error::format(path, format!("first column must be {first:?}")));
    }
    let months = header.len() - 1;
    let mut special = None;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != months + 1 {
            return Err(Error::format(path, format!("row {} has {} fields", i + 2, rec.len())));
        }
        let vals = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<u64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, format!("row {}: {e}", i + 2)))?;
        let name = rec[0].to_string();
        if i == 0 && header_label == Some(name.as_str()) {
            special = Some(vals);
        } else {
            rows.push((name, vals));
        }
    }
    if header_label.is_some() && special.is_none() {
        return Err(Error::format(path, format!("missing {:?} record", header_label.unwrap())));
    }
    Ok((special, rows))
}

fn usage_file(kind: UnitKind) -> String {
    format!("usage_{}.csv", kind.name())
}

fn unit_tokens_file(kind: UnitKind) -> String {
    format!("unit_tokens_{}.csv", kind.name())
}

pub const FREQUENCY_FILE: &str = "frequency.csv";
pub const CONTEXTS_FILE: &str = "contexts.csv";

impl CountTables {
    /// File names written by [`CountTables::write_csv`], relative to the output directory.
    pub fn file_names() -> Vec<String> {
        let mut v = vec![FREQUENCY_FILE.to_string(), CONTEXTS_FILE.to_string()];
        for k in UnitKind::ALL {
            v.push(usage_file(k));
            v.push(unit_tokens_file(k));
        }
        v
    }

    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let months = self.frequency.months();
        let words = &self.frequency.words;
        let create = |name: &str| std::fs::File::create(dir.join(name)).map(std::io::BufWriter::new);
        write_u64_matrix(
            create(FREQUENCY_FILE)?,
            "word",
            months,
            Some((TOTAL_ROW, &self.frequency.month_totals)),
            words.iter().cloned().zip(self.frequency.counts.iter().cloned()),
        )?;
        write_u64_matrix(
            create(CONTEXTS_FILE)?,
            "word",
            months,
            Some((DISTINCT_ROW, &self.contexts.distinct_trigrams)),
            words.iter().cloned().zip(self.contexts.contexts.iter().cloned()),
        )?;
        for table in &self.usage {
            write_u64_matrix(
                create(&usage_file(table.kind))?,
                "word",
                months,
                None,
                words.iter().cloned().zip(table.units_of_word.iter().cloned()),
            )?;
            let all_units: std::collections::BTreeSet<&String> = table.unit_tokens.iter().flat_map(|m| m.keys()).collect();
            write_u64_matrix(
                create(&unit_tokens_file(table.kind))?,
                "unit",
                months,
                None,
                all_units.into_iter().map(|u| {
                    let vals = table.unit_tokens.iter().map(|m| m.get(u).copied().unwrap_or(0)).collect();
                    (u.clone(), vals)
                }),
            )?;
        }
        Ok(())
    }

    pub fn read_csv(dir: &Path) -> Result<Self> {
        let fpath = dir.join(FREQUENCY_FILE);
        let (totals, rows) = read_u64_matrix(&fpath, "word", Some(TOTAL_ROW))?;
        let month_totals = totals.expect("checked by reader");
        let months = month_totals.len();
        let (words, counts): (Vec<String>, Vec<Vec<u64>>) = rows.into_iter().unzip();

        let cpath = dir.join(CONTEXTS_FILE);
        let (distinct, crows) = read_u64_matrix(&cpath, "word", Some(DISTINCT_ROW))?;
        check_rows(&cpath, &words, &crows, months)?;
        let contexts = crows.into_iter().map(|(_, v)| v).collect();

        let mut usage = Vec::new();
        for kind in UnitKind::ALL {
            let upath = dir.join(usage_file(kind));
            let (_, urows) = read_u64_matrix(&upath, "word", None)?;
            check_rows(&upath, &words, &urows, months)?;
            let tpath = dir.join(unit_tokens_file(kind));
            let (_, trows) = read_u64_matrix(&tpath, "unit", None)?;
            let mut unit_tokens = vec![BTreeMap::new(); months];
            for (unit, vals) in trows {
                if vals.len() != months {
                    return Err(Error::format(&tpath, "month count differs from frequency table"));
                }
                for (m, v) in vals.into_iter().enumerate() {
                    if v > 0 {
                        unit_tokens[m].insert(unit.clone(), v);
                    }
                }
            }
            usage.push(SocialUsageTable {
                kind,
                units_of_word: urows.into_iter().map(|(_, v)| v).collect(),
                unit_tokens,
            });
        }
        let usage: [SocialUsageTable; 3] = usage.try_into().expect("three unit kinds");
        Ok(CountTables {
            frequency: FrequencyTable {
                words,
                counts,
                month_totals,
            },
            contexts: ContextTable {
                contexts,
                distinct_trigrams: distinct.expect("checked by reader"),
            },
            usage,
        })
    }
}

fn check_rows(path: &Path, words: &[String], rows: &[(String, Vec<u64>)], months: usize) -> Result<()> {
    if rows.len() != words.len() || rows.iter().zip(words).any(|((w, v), x)| w != x || v.len() != months) {
        return Err(Error::format(path, "word rows do not match the frequency table"));
    }
    Ok(())
}
