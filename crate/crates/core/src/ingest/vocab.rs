use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Index of a word in the vocabulary ranking (0 = most frequent).
pub type WordId = u32;

pub const UNK_TOKEN: &str = "<UNK>";
/// Out-of-vocabulary marker. Never a counted target word.
pub const UNK_ID: WordId = u32::MAX;
/// Sentence-start sentinel used when forming trigrams.
pub const START_ID: WordId = u32::MAX - 1;
/// Sentence-end sentinel used when forming trigrams.
pub const END_ID: WordId = u32::MAX - 2;

/// Ranked vocabulary: descending corpus count, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, WordId>,
}

/// Keeps the `k` most frequent words.
///
/// Ranking depends only on the counts, never on input order. `k` larger than
/// the number of distinct words keeps them all.
pub fn build_vocabulary(counts: &BTreeMap<String, u64>, k: usize) -> Result<Vocabulary> {
    if counts.is_empty() {
        return Err(Error::invalid("cannot build a vocabulary from zero words"));
    }
    if k == 0 {
        return Err(Error::invalid("vocabulary size must be at least 1"));
    }
    let mut ranked: Vec<(&String, u64)> = counts.iter().map(|(w, &c)| (w, c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(k);
    Ok(Vocabulary::from_ranked(
        ranked.into_iter().map(|(w, c)| (w.clone(), c)).collect(),
    ))
}

impl Vocabulary {
    fn from_ranked(ranked: Vec<(String, u64)>) -> Self {
        let index = ranked
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i as WordId))
            .collect();
        let (words, counts) = ranked.into_iter().unzip();
        Self { words, counts, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: WordId) -> &str {
        match id {
            UNK_ID => UNK_TOKEN,
            _ => &self.words[id as usize],
        }
    }

    pub fn count(&self, id: WordId) -> u64 {
        self.counts[id as usize]
    }

    pub fn id(&self, word: &str) -> Option<WordId> {
        self.index.get(word).copied()
    }

    /// Maps tokens to ids, replacing out-of-vocabulary tokens with [`UNK_ID`].
    /// The output always has the input's length.
    pub fn apply<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<WordId> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(UNK_ID))
            .collect()
    }

    /// Writes `rank<TAB>word<TAB>count`, ranks starting at 1.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, (word, c)) in self.words.iter().zip(&self.counts).enumerate() {
            writeln!(w, "{}\t{}\t{}", i + 1, word, c)?;
        }
        Ok(())
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut ranked = Vec::new();
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let bad = || Error::format(path, format!("line {} is not rank<TAB>word<TAB>count", n + 1));
            if parts.len() != 3 {
                return Err(bad());
            }
            let rank: usize = parts[0].parse().map_err(|_| bad())?;
            if rank != ranked.len() + 1 {
                return Err(Error::format(path, format!("line {} has rank {rank} out of sequence", n + 1)));
            }
            let count: u64 = parts[2].parse().map_err(|_| bad())?;
            ranked.push((parts[1].to_string(), count));
        }
        Ok(Self::from_ranked(ranked))
    }
}

/// `apply_vocabulary` as a free function over string tokens.
pub fn apply_vocabulary<S: AsRef<str>>(tokens: &[S], v: &Vocabulary) -> Vec<WordId> {
    v.apply(tokens)
}
