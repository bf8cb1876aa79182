//! Comment parsing, filtering, text normalization, and vocabulary.
//!
//! Input is one JSON object per line with the public comment-dump fields
//! `author`, `subreddit`, `link_id`, `created_utc` and `body`. Bad lines are
//! counted and skipped; they never abort a run.

mod normalize;
mod vocab;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use normalize::{collapse_repeats, normalize_tokens, render_sentences, NormalizationRules, SUB_TOKEN, URL_TOKEN, USER_TOKEN};
pub use vocab::{apply_vocabulary, build_vocabulary, Vocabulary, WordId, END_ID, START_ID, UNK_ID, UNK_TOKEN};

/// 1-based month index inside the corpus window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MonthKey(pub u32);

impl MonthKey {
    /// Zero-based position for indexing per-month arrays.
    #[inline]
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }
}

/// A run of `months` consecutive UTC calendar months starting at
/// `start_year`-`start_month`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthWindow {
    pub start_year: i32,
    pub start_month: u32,
    pub months: u32,
}

impl MonthWindow {
    pub fn new(start_year: i32, start_month: u32, months: u32) -> Result<Self> {
        if !(1..=12).contains(&start_month) {
            return Err(Error::invalid(format!("start month {start_month} is not in 1..=12")));
        }
        if months == 0 {
            return Err(Error::invalid("window must span at least one month"));
        }
        Ok(Self {
            start_year,
            start_month,
            months,
        })
    }

    /// Parses `YYYY-MM`.
    pub fn parse_start(start: &str, months: u32) -> Result<Self> {
        let (y, m) = start
            .split_once('-')
            .ok_or_else(|| Error::invalid(format!("window start {start:?} is not YYYY-MM")))?;
        let y: i32 = y.parse().map_err(|_| Error::invalid(format!("bad year in {start:?}")))?;
        let m: u32 = m.parse().map_err(|_| Error::invalid(format!("bad month in {start:?}")))?;
        Self::new(y, m, months)
    }

    pub fn month_of(&self, created_utc: i64) -> Option<MonthKey> {
        let dt = DateTime::from_timestamp(created_utc, 0)?;
        let offset = (dt.year() as i64 - self.start_year as i64) * 12 + dt.month() as i64 - self.start_month as i64;
        (0..self.months as i64).contains(&offset).then(|| MonthKey(offset as u32 + 1))
    }

    /// `[start, end)` Unix seconds of a month in the window.
    pub fn month_bounds(&self, month: MonthKey) -> (i64, i64) {
        let first = |k: u32| {
            let total = self.start_month - 1 + k;
            let y = self.start_year + (total / 12) as i32;
            let m = total % 12 + 1;
            NaiveDate::from_ymd_opt(y, m, 1)
                .expect("valid calendar month")
                .and_hms_opt(0, 0, 0)
                .expect("midnight")
                .and_utc()
                .timestamp()
        };
        (first(month.0 - 1), first(month.0))
    }
}

impl fmt::Display for MonthWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}+{}", self.start_year, self.start_month, self.months)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawComment {
    pub author: String,
    pub subreddit: String,
    pub thread: String,
    pub created_utc: i64,
    pub month: MonthKey,
    pub body: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MalformedReason {
    NotJson,
    MissingField(&'static str),
    BadTimestamp,
    EmptyBody,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseOutcome {
    Comment(RawComment),
    OutOfWindow,
    Malformed(MalformedReason),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Timestamp {
    Int(i64),
    Float(f64),
    Text(String),
}

#[derive(Deserialize)]
struct Record {
    author: Option<String>,
    subreddit: Option<String>,
    link_id: Option<String>,
    created_utc: Option<Timestamp>,
    body: Option<String>,
}

/// Ids are lowercased; tabs and newlines are replaced so ids stay single TSV cells.
fn normalize_id(id: &str) -> String {
    id.trim()
        .to_lowercase()
        .chars()
        .map(|c| if c.is_control() { '_' } else { c })
        .collect()
}

pub fn parse_comment_line(line: &str, window: &MonthWindow) -> ParseOutcome {
    use MalformedReason::*;
    let rec: Record = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(_) => return ParseOutcome::Malformed(NotJson),
    };
    macro_rules! need {
        ($field:ident) => {
            match rec.$field {
                Some(v) => v,
                None => return ParseOutcome::Malformed(MissingField(stringify!($field))),
            }
        };
    }
    let author = need!(author);
    let subreddit = need!(subreddit);
    let link_id = need!(link_id);
    let ts = need!(created_utc);
    let body = need!(body);
    let created_utc = match ts {
        Timestamp::Int(v) => v,
        Timestamp::Float(v) if v.is_finite() => v as i64,
        Timestamp::Text(s) => match s.trim().parse::<i64>() {
            Ok(v) => v,
            Err(_) => return ParseOutcome::Malformed(BadTimestamp),
        },
        Timestamp::Float(_) => return ParseOutcome::Malformed(BadTimestamp),
    };
    if body.trim().is_empty() {
        return ParseOutcome::Malformed(EmptyBody);
    }
    let Some(month) = window.month_of(created_utc) else {
        return ParseOutcome::OutOfWindow;
    };
    ParseOutcome::Comment(RawComment {
        author: normalize_id(&author),
        subreddit: normalize_id(&subreddit),
        thread: normalize_id(&link_id),
        created_utc,
        month,
        body,
    })
}

/// Bot/spam authors and excluded subreddits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExclusionLists {
    pub bots: HashSet<String>,
    pub subreddits: HashSet<String>,
}

/// Reads a plain-text id list: one id per line, blank lines and `#` comments ignored.
pub fn read_id_list(path: &Path) -> Result<HashSet<String>> {
    let file = std::fs::File::open(path)?;
    let mut out = HashSet::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            out.insert(normalize_id(t));
        }
    }
    Ok(out)
}

impl ExclusionLists {
    pub fn new<I, J, S, T>(bots: I, subreddits: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        Self {
            bots: bots.into_iter().map(|s| normalize_id(s.as_ref())).collect(),
            subreddits: subreddits.into_iter().map(|s| normalize_id(s.as_ref())).collect(),
        }
    }

    pub fn load(bots: Option<&Path>, subreddits: Option<&Path>) -> Result<Self> {
        Ok(Self {
            bots: bots.map(read_id_list).transpose()?.unwrap_or_default(),
            subreddits: subreddits.map(read_id_list).transpose()?.unwrap_or_default(),
        })
    }

    /// `true` to keep the comment.
    pub fn keep(&self, c: &RawComment) -> bool {
        !self.bots.contains(&c.author) && !self.subreddits.contains(&c.subreddit)
    }
}

/// `filter_comment`: keep unless the author is a known bot or the subreddit is excluded.
pub fn filter_comment(c: &RawComment, lists: &ExclusionLists) -> bool {
    lists.keep(c)
}

/// A filtered, normalized comment ready for counting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedComment {
    pub month: MonthKey,
    pub author: String,
    pub subreddit: String,
    pub thread: String,
    pub sentences: Vec<Vec<String>>,
}

const SENTENCE_SEP: char = '\u{1f}';

impl NormalizedComment {
    /// `month<TAB>author<TAB>subreddit<TAB>thread<TAB>sentences`, sentences
    /// separated by U+001F and tokens by single spaces.
    pub fn to_tsv_line(&self) -> String {
        let body = self
            .sentences
            .iter()
            .map(|s| s.join(" "))
            .collect::<Vec<_>>()
            .join(&SENTENCE_SEP.to_string());
        format!("{}\t{}\t{}\t{}\t{}", self.month.0, self.author, self.subreddit, self.thread, body)
    }

    pub fn from_tsv_line(line: &str) -> Option<Self> {
        let mut it = line.splitn(5, '\t');
        let month = MonthKey(it.next()?.parse().ok()?);
        let author = it.next()?.to_string();
        let subreddit = it.next()?.to_string();
        let thread = it.next()?.to_string();
        let body = it.next()?;
        let sentences = body
            .split(SENTENCE_SEP)
            .filter(|s| !s.is_empty())
            .map(|s| s.split(' ').map(str::to_string).collect())
            .collect();
        Some(Self {
            month,
            author,
            subreddit,
            thread,
            sentences,
        })
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}

/// Per-run counters. Merging is elementwise addition.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines: u64,
    pub kept: u64,
    pub out_of_window: u64,
    pub malformed: u64,
    pub filtered_bot: u64,
    pub filtered_subreddit: u64,
    pub empty_after_normalization: u64,
    pub tokens: u64,
}

impl IngestStats {
    pub fn merge(&mut self, o: &IngestStats) {
        self.lines += o.lines;
        self.kept += o.kept;
        self.out_of_window += o.out_of_window;
        self.malformed += o.malformed;
        self.filtered_bot += o.filtered_bot;
        self.filtered_subreddit += o.filtered_subreddit;
        self.empty_after_normalization += o.empty_after_normalization;
        self.tokens += o.tokens;
    }
}

/// Output of ingesting one shard (or a merge of shards, in input order).
#[derive(Debug, Clone, Default)]
pub struct IngestOutput {
    pub comments: Vec<NormalizedComment>,
    pub stats: IngestStats,
    pub word_counts: BTreeMap<String, u64>,
}

impl IngestOutput {
    /// Appends `other`, which must come after `self` in input order.
    pub fn append(&mut self, other: IngestOutput) {
        self.comments.extend(other.comments);
        self.stats.merge(&other.stats);
        for (w, c) in other.word_counts {
            *self.word_counts.entry(w).or_insert(0) += c;
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestSettings {
    pub window: MonthWindow,
    pub rules: NormalizationRules,
    pub exclusions: ExclusionLists,
}

/// Parses, filters and normalizes a contiguous block of input lines.
pub fn ingest_lines<S: AsRef<str>>(lines: &[S], settings: &IngestSettings) -> IngestOutput {
    let mut out = IngestOutput::default();
    for line in lines {
        let line = line.as_ref();
        if line.trim().is_empty() {
            continue;
        }
        out.stats.lines += 1;
        let c = match parse_comment_line(line, &settings.window) {
            ParseOutcome::Comment(c) => c,
            ParseOutcome::OutOfWindow => {
                out.stats.out_of_window += 1;
                continue;
            }
            ParseOutcome::Malformed(_) => {
                out.stats.malformed += 1;
                continue;
            }
        };
        if settings.exclusions.bots.contains(&c.author) {
            out.stats.filtered_bot += 1;
            continue;
        }
        if settings.exclusions.subreddits.contains(&c.subreddit) {
            out.stats.filtered_subreddit += 1;
            continue;
        }
        let sentences = normalize_tokens(&c.body, &settings.rules);
        if sentences.is_empty() {
            out.stats.empty_after_normalization += 1;
            continue;
        }
        for tok in sentences.iter().flatten() {
            *out.word_counts.entry(tok.clone()).or_insert(0) += 1;
            out.stats.tokens += 1;
        }
        out.stats.kept += 1;
        out.comments.push(NormalizedComment {
            month: c.month,
            author: c.author,
            subreddit: c.subreddit,
            thread: c.thread,
            sentences,
        });
    }
    out
}

/// Splits the input into `shards` contiguous blocks processed in parallel and
/// concatenated in input order, so the result does not depend on `shards`.
pub fn ingest_sharded<S: AsRef<str> + Sync>(lines: &[S], shards: usize, settings: &IngestSettings) -> IngestOutput {
    let shards = shards.max(1);
    let chunk = lines.len().div_ceil(shards).max(1);
    let parts: Vec<IngestOutput> = lines
        .par_chunks(chunk)
        .map(|block| ingest_lines(block, settings))
        .collect();
    let mut out = IngestOutput::default();
    for p in parts {
        out.append(p);
    }
    out
}
