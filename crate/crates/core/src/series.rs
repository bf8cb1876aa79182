//! Word-by-month matrices of real values, with undefined cells.

use std::path::Path;

use crate::error::{Error, Result};

/// Formats a float for CSV output; `None` becomes an empty cell.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn parse_opt(cell: &str) -> std::result::Result<Option<f64>, std::num::ParseFloatError> {
    let t = cell.trim();
    if t.is_empty() {
        Ok(None)
    } else {
        t.parse().map(Some)
    }
}

/// `values[word][month]`; `None` marks an undefined cell.
#[derive(Debug, Clone, PartialEq)]
pub struct WordMonthMatrix {
    pub words: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl WordMonthMatrix {
    pub fn months(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.words.iter().position(|w| w == word)
    }

    pub fn row(&self, word: &str) -> Option<&[Option<f64>]> {
        self.index_of(word).map(|i| self.values[i].as_slice())
    }

    /// Writes `word,month_1..month_T`.
    pub fn write_csv(&self, path: &Path, months: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(std::iter::once("word".to_string()).chain((1..=months).map(|m| format!("month_{m}"))))?;
        for (word, row) in self.words.iter().zip(&self.values) {
            w.write_record(std::iter::once(word.clone()).chain(row.iter().map(|v| fmt_opt(*v))))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.get(0) != Some("word") {
            return Err(Error::format(path, "first column must be \"word\""));
        }
        let months = header.len() - 1;
        let mut words = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != months + 1 {
                return Err(Error::format(path, format!("row {} has {} fields", i + 2, rec.len())));
            }
            let row = rec
                .iter()
                .skip(1)
                .map(parse_opt)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format(path, format!("row {}: {e}", i + 2)))?;
            words.push(rec[0].to_string());
            values.push(row);
        }
        Ok(Self { words, values })
    }
}
