//! Seeded synthetic comment corpora with planted growth and decline words.
//!
//! Background text is Zipf-distributed over a made-up vocabulary. Injected
//! words follow a target relative-frequency curve and are either inserted
//! at random positions (open contexts) or only inside a few fixed
//! two-word frames (template contexts).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric, Zipf};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{MonthKey, MonthWindow};
use crate::numstats::substream;
use crate::wordsets::{write_labels_tsv, Label, Source, WordLabel};

/// Peak relative frequency allowed for an injected word.
pub const MAX_PEAK: f64 = 1e-3;
const MEAN_COMMENT_TOKENS: f64 = 12.0;
const MEAN_SENTENCE_TOKENS: f64 = 8.0;
const BOT_COMMENTS_PER_MONTH: usize = 20;
const POS_TAGS: [&str; 5] = ["NOUN", "VERB", "ADJ", "ADV", "INTJ"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trajectory {
    /// Rising logistic CDF centered at `mu`.
    Growth { mu: f64, s: f64 },
    /// Logistic-density bump centered at `mu`.
    Decline { mu: f64, s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextRegime {
    Open,
    /// Only inside `kappa` fixed frames `a w b`, each its own sentence.
    Template { kappa: usize },
}

impl fmt::Display for ContextRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContextRegime::Open => write!(f, "open"),
            ContextRegime::Template { kappa } => write!(f, "template:{kappa}"),
        }
    }
}

impl FromStr for ContextRegime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "open" {
            return Ok(ContextRegime::Open);
        }
        let kappa = match s.strip_prefix("template") {
            Some("") => 1,
            Some(k) => k
                .strip_prefix(':')
                .and_then(|k| k.parse().ok())
                .ok_or_else(|| Error::invalid(format!("bad template regime {s:?}")))?,
            None => return Err(Error::invalid(format!("unknown context regime {s:?}"))),
        };
        Ok(ContextRegime::Template { kappa })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectedWordSpec {
    pub word: String,
    pub trajectory: Trajectory,
    /// Relative frequency far from the trajectory's active region.
    pub floor: f64,
    pub peak: f64,
    pub context: ContextRegime,
    /// Fraction of users (and subreddits) that ever use the word.
    pub social_fraction: f64,
}

impl InjectedWordSpec {
    /// Target relative frequency in 1-based month `t`.
    pub fn target(&self, t: u32) -> f64 {
        let t = t as f64;
        let shape = match self.trajectory {
            Trajectory::Growth { mu, s } => {
                // rescaled so month 1 sits exactly at the floor
                let cdf = |x: f64| 1.0 / (1.0 + (-(x - mu) / s).exp());
                ((cdf(t) - cdf(1.0)) / (1.0 - cdf(1.0))).max(0.0)
            }
            Trajectory::Decline { mu, s } => {
                // density divided by its maximum 1/(4s)
                let e = (-(t - mu) / s).exp();
                4.0 * e / (1.0 + e).powi(2)
            }
        };
        self.floor + (self.peak - self.floor) * shape
    }

    fn tokens_per_use(&self) -> u64 {
        match self.context {
            ContextRegime::Open => 1,
            ContextRegime::Template { .. } => 3,
        }
    }

    fn to_kv_value(&self) -> String {
        let (kind, mu, s) = match self.trajectory {
            Trajectory::Growth { mu, s } => ("growth", mu, s),
            Trajectory::Decline { mu, s } => ("decline", mu, s),
        };
        format!(
            "{kind} mu={mu} s={s} floor={} peak={} context={} social={}",
            self.floor, self.peak, self.context, self.social_fraction
        )
    }

    fn parse_kv(word: &str, value: &str) -> Result<Self> {
        let mut parts = value.split_whitespace();
        let kind = parts.next().ok_or_else(|| Error::invalid(format!("word.{word}: empty spec")))?;
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("word.{word}: {p:?} is not key=value")))?;
            fields.insert(k, v);
        }
        let num = |k: &str| -> Result<f64> {
            fields
                .get(k)
                .ok_or_else(|| Error::invalid(format!("word.{word}: missing {k}")))?
                .parse()
                .map_err(|_| Error::invalid(format!("word.{word}: {k} is not a number")))
        };
        let (mu, s) = (num("mu")?, num("s")?);
        let trajectory = match kind {
            "growth" => Trajectory::Growth { mu, s },
            "decline" => Trajectory::Decline { mu, s },
            other => return Err(Error::invalid(format!("word.{word}: unknown trajectory {other:?}"))),
        };
        Ok(Self {
            word: word.to_string(),
            trajectory,
            floor: num("floor")?,
            peak: num("peak")?,
            context: fields.get("context").copied().unwrap_or("open").parse()?,
            social_fraction: if fields.contains_key("social") { num("social")? } else { 1.0 },
        })
    }
}

/// Context regime drawn per word by the recipe: template words get a
/// frame count uniform in `min..=max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextRecipe {
    Open,
    Template { min: usize, max: usize },
}

impl fmt::Display for ContextRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContextRecipe::Open => write!(f, "open"),
            ContextRecipe::Template { min, max } if min == max => write!(f, "template:{min}"),
            ContextRecipe::Template { min, max } => write!(f, "template:{min}-{max}"),
        }
    }
}

impl FromStr for ContextRecipe {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let range = s.strip_prefix("template:").and_then(|r| r.split_once('-'));
        if let Some((a, b)) = range {
            let parse = |v: &str| v.parse().map_err(|_| Error::invalid(format!("bad template range {s:?}")));
            return Ok(ContextRecipe::Template { min: parse(a)?, max: parse(b)? });
        }
        Ok(match s.parse::<ContextRegime>()? {
            ContextRegime::Open => ContextRecipe::Open,
            ContextRegime::Template { kappa } => ContextRecipe::Template { min: kappa, max: kappa },
        })
    }
}

/// Parameters of the planted-word recipe used when no explicit word specs
/// are given.
#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub growth_words: usize,
    pub decline_words: usize,
    pub growth_context: ContextRecipe,
    pub decline_context: ContextRecipe,
    pub floor_min: f64,
    pub floor_max: f64,
    pub social_fraction: f64,
}

impl Default for Recipe {
    fn default() -> Self {
        Self {
            growth_words: 20,
            decline_words: 20,
            growth_context: ContextRecipe::Open,
            decline_context: ContextRecipe::Template { min: 2, max: 24 },
            floor_min: 5e-5,
            floor_max: 1.5e-4,
            social_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    /// `YYYY-MM`
    pub start: String,
    pub months: u32,
    pub users: usize,
    pub subreddits: usize,
    pub threads_per_subreddit_month: usize,
    pub tokens_per_month: u64,
    pub background_vocab: usize,
    pub zipf_exponent: f64,
    /// Bot accounts whose comments the ingest stage should drop.
    pub bots: usize,
    pub recipe: Recipe,
    /// Explicit specs; when empty the recipe generates them from the seed.
    pub words: Vec<InjectedWordSpec>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            start: "2013-06".to_string(),
            months: 36,
            users: 2000,
            subreddits: 50,
            threads_per_subreddit_month: 20,
            tokens_per_month: 200_000,
            background_vocab: 3000,
            zipf_exponent: 1.0,
            bots: 2,
            recipe: Recipe::default(),
            words: Vec::new(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::invalid(format!("config field {key}: cannot parse {v:?}")))
}

impl SynthConfig {
    /// Flat `key = value` lines; `#` starts a comment. Explicit words are
    /// `word.NAME = growth|decline mu=.. s=.. floor=.. peak=.. [context=..] [social=..]`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SynthConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("config line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "seed" => cfg.seed = parse_num(k, v)?,
                "start" => cfg.start = v.to_string(),
                "months" => cfg.months = parse_num(k, v)?,
                "users" => cfg.users = parse_num(k, v)?,
                "subreddits" => cfg.subreddits = parse_num(k, v)?,
                "threads_per_subreddit_month" => cfg.threads_per_subreddit_month = parse_num(k, v)?,
                "tokens_per_month" => cfg.tokens_per_month = parse_num(k, v)?,
                "background_vocab" => cfg.background_vocab = parse_num(k, v)?,
                "zipf_exponent" => cfg.zipf_exponent = parse_num(k, v)?,
                "bots" => cfg.bots = parse_num(k, v)?,
                "growth_words" => cfg.recipe.growth_words = parse_num(k, v)?,
                "decline_words" => cfg.recipe.decline_words = parse_num(k, v)?,
                "growth_context" => cfg.recipe.growth_context = v.parse()?,
                "decline_context" => cfg.recipe.decline_context = v.parse()?,
                "floor_min" => cfg.recipe.floor_min = parse_num(k, v)?,
                "floor_max" => cfg.recipe.floor_max = parse_num(k, v)?,
                "social_fraction" => cfg.recipe.social_fraction = parse_num(k, v)?,
                _ => match k.strip_prefix("word.") {
                    Some(name) => cfg.words.push(InjectedWordSpec::parse_kv(name, v)?),
                    None => return Err(Error::invalid(format!("unknown config field {k:?}"))),
                },
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let r = &self.recipe;
        let mut s = format!(
            "seed = {}\nstart = {}\nmonths = {}\nusers = {}\nsubreddits = {}\nthreads_per_subreddit_month = {}\n\
             tokens_per_month = {}\nbackground_vocab = {}\nzipf_exponent = {}\nbots = {}\n\
             growth_words = {}\ndecline_words = {}\ngrowth_context = {}\ndecline_context = {}\n\
             floor_min = {}\nfloor_max = {}\nsocial_fraction = {}\n",
            self.seed,
            self.start,
            self.months,
            self.users,
            self.subreddits,
            self.threads_per_subreddit_month,
            self.tokens_per_month,
            self.background_vocab,
            self.zipf_exponent,
            self.bots,
            r.growth_words,
            r.decline_words,
            r.growth_context,
            r.decline_context,
            r.floor_min,
            r.floor_max,
            r.social_fraction
        );
        for w in &self.words {
            s.push_str(&format!("word.{} = {}\n", w.word, w.to_kv_value()));
        }
        s
    }

    pub fn window(&self) -> Result<MonthWindow> {
        MonthWindow::parse_start(&self.start, self.months)
    }

    pub fn validate(&self) -> Result<()> {
        self.window()?;
        for (name, v) in [
            ("users", self.users),
            ("subreddits", self.subreddits),
            ("threads_per_subreddit_month", self.threads_per_subreddit_month),
            ("background_vocab", self.background_vocab),
            ("tokens_per_month", self.tokens_per_month as usize),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("config field {name} must be at least 1")));
            }
        }
        if !(self.zipf_exponent > 0.0) {
            return Err(Error::invalid("config field zipf_exponent must be positive"));
        }
        let r = &self.recipe;
        if !(r.floor_min > 0.0 && r.floor_min <= r.floor_max && r.floor_max <= MAX_PEAK) {
            return Err(Error::invalid("config fields floor_min/floor_max must satisfy 0 < min <= max <= 1e-3"));
        }
        if !(r.social_fraction > 0.0 && r.social_fraction <= 1.0) {
            return Err(Error::invalid("config field social_fraction must be in (0, 1]"));
        }
        for (name, c) in [("growth_context", r.growth_context), ("decline_context", r.decline_context)] {
            if let ContextRecipe::Template { min, max } = c {
                if min == 0 || min > max {
                    return Err(Error::invalid(format!("config field {name}: frame range must satisfy 1 <= min <= max")));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for w in &self.words {
            let bad = |what: &str| Err(Error::invalid(format!("word.{}: {what}", w.word)));
            if w.word.is_empty() || !w.word.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()) {
                return bad("names must be lowercase ASCII letters and digits");
            }
            if !w.word.chars().any(|c| c.is_ascii_digit()) {
                // background words never contain digits
                return bad("names must contain a digit");
            }
            if !seen.insert(&w.word) {
                return bad("duplicate word");
            }
            if !(w.floor > 0.0 && w.floor <= w.peak && w.peak <= MAX_PEAK) {
                return bad("frequencies must satisfy 0 < floor <= peak <= 1e-3");
            }
            let (Trajectory::Growth { mu, s } | Trajectory::Decline { mu, s }) = w.trajectory;
            if !(mu.is_finite() && s > 0.0) {
                return bad("mu must be finite and s positive");
            }
            if w.context == (ContextRegime::Template { kappa: 0 }) {
                return bad("template regimes need at least one frame");
            }
            if !(w.social_fraction > 0.0 && w.social_fraction <= 1.0) {
                return bad("social must be in (0, 1]");
            }
        }
        Ok(())
    }

    /// Explicit specs, or the recipe's specs drawn from the seed.
    pub fn injected_words(&self) -> Vec<InjectedWordSpec> {
        if !self.words.is_empty() {
            return self.words.clone();
        }
        let r = &self.recipe;
        let mut rng = substream(self.seed, u64::MAX);
        let (lo, hi) = (r.floor_min.ln(), r.floor_max.ln());
        let mut out = Vec::new();
        for i in 0..r.growth_words + r.decline_words {
            let growth = i < r.growth_words;
            let floor = rng.random_range(lo..=hi).exp();
            let peak = (floor * rng.random_range(8.0..15.0)).min(MAX_PEAK);
            let mut regime = |c: ContextRecipe| match c {
                ContextRecipe::Open => ContextRegime::Open,
                ContextRecipe::Template { min, max } => ContextRegime::Template {
                    kappa: rng.random_range(min..=max),
                },
            };
            let context = regime(if growth { r.growth_context } else { r.decline_context });
            let (word, trajectory) = if growth {
                let mu = rng.random_range(14.0..22.0) * self.months as f64 / 36.0;
                let s = rng.random_range(4.0..6.0) * self.months as f64 / 36.0;
                (format!("gro{i:03}"), Trajectory::Growth { mu, s })
            } else {
                let mu = rng.random_range(14.0..26.0) * self.months as f64 / 36.0;
                let s = rng.random_range(1.5..3.0) * self.months as f64 / 36.0;
                (format!("dec{:03}", i - r.growth_words), Trajectory::Decline { mu, s })
            };
            out.push(InjectedWordSpec {
                word,
                trajectory,
                floor,
                peak,
                context,
                social_fraction: r.social_fraction,
            });
        }
        out
    }
}

/// Pronounceable consonant-vowel names; distinct for distinct ranks and
/// never containing a character run longer than one.
pub fn background_word(rank: usize) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let base = C.len() * V.len();
    let mut n = rank + base;
    let mut syl = Vec::new();
    while n > 0 {
        let d = n % base;
        syl.push([C[d / V.len()], V[d % V.len()]]);
        n /= base;
    }
    syl.iter().rev().flatten().map(|&b| b as char).collect()
}

/// Ground-truth labels: growth words unsplit, decline words split at their
/// rounded center, clamped to the window.
pub fn oracle_labels(cfg: &SynthConfig) -> Vec<WordLabel> {
    cfg.injected_words()
        .into_iter()
        .map(|w| match w.trajectory {
            Trajectory::Growth { .. } => WordLabel {
                word: w.word,
                label: Label::Growth,
                source: Source::Oracle,
                split_month: None,
                rho: None,
                r2: None,
            },
            Trajectory::Decline { mu, .. } => WordLabel {
                word: w.word,
                label: Label::Decline,
                source: Source::Oracle,
                split_month: Some(mu.round().clamp(1.0, cfg.months as f64) as u32),
                rho: None,
                r2: None,
            },
        })
        .collect()
}

/// Token id: background ranks first, then injected words.
type Tok = u32;

struct Comment {
    user: usize,
    subreddit: usize,
    thread: usize,
    sentences: Vec<Vec<Tok>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    /// Ingest input, one JSON record per line, in timestamp order.
    pub lines: Vec<String>,
    pub bots: Vec<String>,
    /// `injected[i][t-1]`: realized count of word `i` in month `t`.
    pub injected_counts: Vec<Vec<u64>>,
    pub words: Vec<InjectedWordSpec>,
}

struct Shared<'a> {
    cfg: &'a SynthConfig,
    words: &'a [InjectedWordSpec],
    names: Vec<String>,
    frames: Vec<Vec<(Tok, Tok)>>,
    allowed_users: Vec<Vec<usize>>,
    window: MonthWindow,
}

fn user_name(u: usize) -> String {
    format!("User{u:05}")
}

fn bot_name(b: usize) -> String {
    format!("AutoBot{b:02}")
}

fn generate_month(sh: &Shared, t: u32) -> Result<(Vec<String>, Vec<u64>)> {
    let cfg = sh.cfg;
    let mut rng: ChaCha8Rng = substream(cfg.seed, t as u64);
    let n = cfg.tokens_per_month;
    let mut counts = Vec::with_capacity(sh.words.len());
    let mut used = 0u64;
    for w in sh.words {
        let c = Binomial::new(n, w.target(t)).map_err(|e| Error::invalid(e.to_string()))?.sample(&mut rng);
        used += c * w.tokens_per_use();
        counts.push(c);
    }
    if used > n / 2 {
        return Err(Error::invalid(format!(
            "injected words need {used} of {n} tokens in month {t}; lower their frequencies"
        )));
    }
    let zipf_bg = Zipf::new(cfg.background_vocab as f64, cfg.zipf_exponent).map_err(|e| Error::invalid(e.to_string()))?;
    let zipf_user = Zipf::new(cfg.users as f64, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let zipf_sub = Zipf::new(cfg.subreddits as f64, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let comment_len = Geometric::new(1.0 / MEAN_COMMENT_TOKENS).expect("valid p");
    let sentence_len = Geometric::new(1.0 / MEAN_SENTENCE_TOKENS).expect("valid p");
    let draw = |z: &Zipf<f64>, rng: &mut ChaCha8Rng| z.sample(rng) as usize - 1;
    let fill = |len: u64, rng: &mut ChaCha8Rng| -> Vec<Vec<Tok>> {
        let mut left = len;
        let mut out = Vec::new();
        while left > 0 {
            let s = (1 + sentence_len.sample(rng)).min(left);
            out.push((0..s).map(|_| draw(&zipf_bg, rng) as Tok).collect());
            left -= s;
        }
        out
    };

    let mut comments = Vec::new();
    let mut budget = n - used;
    while budget > 0 {
        let len = (1 + comment_len.sample(&mut rng)).min(budget);
        budget -= len;
        let subreddit = draw(&zipf_sub, &mut rng);
        comments.push(Comment {
            user: draw(&zipf_user, &mut rng),
            subreddit,
            thread: rng.random_range(0..cfg.threads_per_subreddit_month),
            sentences: fill(len, &mut rng),
        });
    }
    let mut by_user: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in comments.iter().enumerate() {
        by_user.entry(c.user).or_default().push(i);
    }
    for (wi, &count) in counts.iter().enumerate() {
        let tok = (cfg.background_vocab + wi) as Tok;
        let eligible: Vec<usize> = if sh.words[wi].social_fraction >= 1.0 {
            Vec::new()
        } else {
            sh.allowed_users[wi].iter().flat_map(|u| by_user.get(u).into_iter().flatten().copied()).collect()
        };
        for _ in 0..count {
            let ci = if sh.words[wi].social_fraction >= 1.0 {
                rng.random_range(0..comments.len())
            } else if let Some(&ci) = eligible.choose(&mut rng) {
                ci
            } else {
                // no allowed user commented this month; give one of them a new comment
                let user = *sh.allowed_users[wi].choose(&mut rng).expect("nonempty");
                comments.push(Comment {
                    user,
                    subreddit: draw(&zipf_sub, &mut rng),
                    thread: rng.random_range(0..cfg.threads_per_subreddit_month),
                    sentences: Vec::new(),
                });
                comments.len() - 1
            };
            let c = &mut comments[ci];
            match sh.words[wi].context {
                ContextRegime::Open if !c.sentences.is_empty() => {
                    let s = rng.random_range(0..c.sentences.len());
                    let pos = rng.random_range(0..=c.sentences[s].len());
                    c.sentences[s].insert(pos, tok);
                }
                ContextRegime::Open => c.sentences.push(vec![tok]),
                ContextRegime::Template { .. } => {
                    let &(a, b) = sh.frames[wi].choose(&mut rng).expect("at least one frame");
                    c.sentences.push(vec![a, tok, b]);
                }
            }
        }
    }
    for b in 0..cfg.bots {
        for _ in 0..BOT_COMMENTS_PER_MONTH {
            let len = 1 + comment_len.sample(&mut rng);
            comments.push(Comment {
                user: usize::MAX - b,
                subreddit: draw(&zipf_sub, &mut rng),
                thread: rng.random_range(0..cfg.threads_per_subreddit_month),
                sentences: fill(len, &mut rng),
            });
        }
    }

    let (start, end) = sh.window.month_bounds(MonthKey(t));
    let mut stamped: Vec<(i64, usize)> = (0..comments.len()).map(|i| (rng.random_range(start..end), i)).collect();
    stamped.sort_unstable();
    let lines = stamped
        .into_iter()
        .map(|(ts, i)| {
            let c = &comments[i];
            let author = if c.user > cfg.users { bot_name(usize::MAX - c.user) } else { user_name(c.user) };
            let body: Vec<String> = c
                .sentences
                .iter()
                .map(|s| {
                    let words: Vec<&str> = s.iter().map(|&k| sh.names[k as usize].as_str()).collect();
                    format!("{}.", words.join(" "))
                })
                .collect();
            serde_json::json!({
                "author": author,
                "subreddit": format!("Sub{:03}", c.subreddit),
                "link_id": format!("t3_m{t}s{}n{}", c.subreddit, c.thread),
                "created_utc": ts,
                "body": body.join(" "),
            })
            .to_string()
        })
        .collect();
    Ok((lines, counts))
}

/// Builds the whole corpus. Months come from independent derived streams,
/// so the output depends only on the configuration.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let words = cfg.injected_words();
    let mut rng = substream(cfg.seed, u64::MAX - 1);
    let mut names: Vec<String> = (0..cfg.background_vocab).map(background_word).collect();
    names.extend(words.iter().map(|w| w.word.clone()));
    // frames use the 200 most frequent background words
    let top = cfg.background_vocab.min(200);
    let frames = words
        .iter()
        .map(|w| match w.context {
            ContextRegime::Open => Vec::new(),
            ContextRegime::Template { kappa } => {
                (0..kappa).map(|_| (rng.random_range(0..top) as Tok, rng.random_range(0..top) as Tok)).collect()
            }
        })
        .collect();
    let allowed_users = words
        .iter()
        .map(|w| {
            let k = ((w.social_fraction * cfg.users as f64).ceil() as usize).clamp(1, cfg.users);
            let mut all: Vec<usize> = (0..cfg.users).collect();
            all.shuffle(&mut rng);
            all.truncate(k);
            all.sort_unstable();
            all
        })
        .collect();
    let sh = Shared {
        cfg,
        words: &words,
        names,
        frames,
        allowed_users,
        window: cfg.window()?,
    };
    let months: Vec<Result<(Vec<String>, Vec<u64>)>> = (1..=cfg.months).into_par_iter().map(|t| generate_month(&sh, t)).collect();
    let mut lines = Vec::new();
    let mut injected_counts = vec![Vec::with_capacity(cfg.months as usize); words.len()];
    for m in months {
        let (l, c) = m?;
        lines.extend(l);
        for (i, v) in c.into_iter().enumerate() {
            injected_counts[i].push(v);
        }
    }
    Ok(SynthCorpus {
        lines,
        bots: (0..cfg.bots).map(|b| bot_name(b).to_lowercase()).collect(),
        injected_counts,
        words,
    })
}

/// File names written by [`write_corpus`].
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const BOTS_FILE: &str = "bots.txt";
pub const LABELS_FILE: &str = "oracle_labels.tsv";
pub const ALLOWLIST_FILE: &str = "allowlist.txt";
pub const POS_FILE: &str = "pos.tsv";
pub const CONFIG_FILE: &str = "synth.conf";

/// Writes the corpus with its bot list, oracle labels, an allowlist of the
/// injected words (standing in for manual annotation), random tags for the
/// injected words, and the resolved configuration.
pub fn write_corpus(cfg: &SynthConfig, dir: &Path) -> Result<SynthCorpus> {
    let corpus = generate_corpus(cfg)?;
    std::fs::create_dir_all(dir)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(CORPUS_FILE))?);
    for l in &corpus.lines {
        writeln!(f, "{l}")?;
    }
    f.flush()?;
    std::fs::write(dir.join(BOTS_FILE), corpus.bots.iter().map(|b| format!("{b}\n")).collect::<String>())?;
    let mut labels = Vec::new();
    write_labels_tsv(&oracle_labels(cfg), &mut labels)?;
    std::fs::write(dir.join(LABELS_FILE), labels)?;
    std::fs::write(dir.join(ALLOWLIST_FILE), corpus.words.iter().map(|w| format!("{}\n", w.word)).collect::<String>())?;
    let mut rng = substream(cfg.seed, u64::MAX - 2);
    let pos: String = corpus
        .words
        .iter()
        .map(|w| format!("{}\t{}\n", w.word, POS_TAGS[rng.random_range(0..POS_TAGS.len())]))
        .collect();
    std::fs::write(dir.join(POS_FILE), pos)?;
    let mut resolved = cfg.clone();
    resolved.words = corpus.words.clone();
    std::fs::write(dir.join(CONFIG_FILE), resolved.to_kv())?;
    Ok(corpus)
}
