//! Offline preparation of reader texts from a line-delimited JSON tweet dump.
//!
//! Filters run in a fixed order and every input line is counted exactly
//! once, either as accepted or under the stage that rejected it:
//!
//! 1. missing or empty text (including text that cleans to nothing)
//! 2. country other than `ES` (a missing country is rejected)
//! 3. duplicate cleaned text, first occurrence wins
//! 4. 20 or fewer tokens after cleaning
//!
//! Lines that are not valid records are counted as malformed.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{Pipeline, RawText};

/// Texts need strictly more tokens than this.
pub const MIN_WORDS_EXCLUSIVE: usize = 20;
pub const SPAIN: &str = "ES";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("dump has no records")]
    EmptyDump,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTweetRecord {
    pub tweet_id: String,
    pub author_id: String,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub lang: Option<String>,
    #[serde(default)]
    pub country: Option<String>,
    #[serde(default)]
    pub created_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub input_records: usize,
    pub malformed: usize,
    /// Line numbers (1-based) of malformed records.
    pub malformed_lines: Vec<usize>,
    pub missing_text: usize,
    pub outside_spain: usize,
    pub duplicate: usize,
    pub too_short: usize,
    pub accepted: usize,
    pub readers: usize,
    pub earliest: Option<DateTime<Utc>>,
    pub latest: Option<DateTime<Utc>>,
}

impl CorpusStats {
    pub fn rejected(&self) -> usize {
        self.malformed + self.missing_text + self.outside_spain + self.duplicate + self.too_short
    }

    /// Every input record is either accepted or rejected exactly once.
    pub fn reconciles(&self) -> bool {
        self.accepted + self.rejected() == self.input_records
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReaderCorpus {
    /// Accepted texts per author, in dump order.
    pub readers: BTreeMap<String, Vec<String>>,
    pub stats: CorpusStats,
}

pub fn filter_dump(path: impl AsRef<Path>, pipeline: &Pipeline) -> Result<ReaderCorpus, IngestError> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    filter_lines(&body, pipeline)
}

pub fn filter_lines(body: &str, pipeline: &Pipeline) -> Result<ReaderCorpus, IngestError> {
    let mut corpus = ReaderCorpus::default();
    let stats = &mut corpus.stats;
    let mut seen = HashSet::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        stats.input_records += 1;
        let record: RawTweetRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(_) => {
                stats.malformed += 1;
                stats.malformed_lines.push(i + 1);
                continue;
            }
        };
        if let Some(at) = record.created_at {
            stats.earliest = Some(stats.earliest.map_or(at, |e| e.min(at)));
            stats.latest = Some(stats.latest.map_or(at, |l| l.max(at)));
        }

        let cleaned = record
            .text
            .as_deref()
            .and_then(|t| RawText::new(t, record.tweet_id.as_str()).ok())
            .and_then(|raw| pipeline.preprocess(&raw).ok());
        let Some(cleaned) = cleaned else {
            stats.missing_text += 1;
            continue;
        };
        let in_spain = record
            .country
            .as_deref()
            .is_some_and(|c| c.trim().eq_ignore_ascii_case(SPAIN));
        if !in_spain {
            stats.outside_spain += 1;
            continue;
        }
        if !seen.insert(cleaned.content().to_owned()) {
            stats.duplicate += 1;
            continue;
        }
        if pipeline.tokenize(&cleaned).token_count() <= MIN_WORDS_EXCLUSIVE {
            stats.too_short += 1;
            continue;
        }
        stats.accepted += 1;
        corpus
            .readers
            .entry(record.author_id)
            .or_default()
            .push(record.text.expect("checked above"));
    }
    if corpus.stats.input_records == 0 {
        return Err(IngestError::EmptyDump);
    }
    corpus.stats.readers = corpus.readers.len();
    Ok(corpus)
}

/// Summary of an ingestion run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusReport {
    pub input_records: usize,
    pub rejected_malformed: usize,
    pub rejected_missing_text: usize,
    pub rejected_outside_spain: usize,
    pub rejected_duplicate: usize,
    pub rejected_too_short: usize,
    pub accepted: usize,
    pub readers: usize,
}

pub fn corpus_report(corpus: &ReaderCorpus) -> CorpusReport {
    let s = &corpus.stats;
    CorpusReport {
        input_records: s.input_records,
        rejected_malformed: s.malformed,
        rejected_missing_text: s.missing_text,
        rejected_outside_spain: s.outside_spain,
        rejected_duplicate: s.duplicate,
        rejected_too_short: s.too_short,
        accepted: s.accepted,
        readers: corpus.readers.len(),
    }
}

impl CorpusReport {
    pub fn rejected(&self) -> usize {
        self.rejected_malformed
            + self.rejected_missing_text
            + self.rejected_outside_spain
            + self.rejected_duplicate
            + self.rejected_too_short
    }
}

impl fmt::Display for CorpusReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("input records", self.input_records),
            ("rejected: malformed", self.rejected_malformed),
            ("rejected: missing text", self.rejected_missing_text),
            ("rejected: outside Spain", self.rejected_outside_spain),
            ("rejected: duplicate", self.rejected_duplicate),
            ("rejected: 20 words or fewer", self.rejected_too_short),
            ("accepted", self.accepted),
            ("readers", self.readers),
        ];
        for (label, n) in rows {
            writeln!(f, "{label:<30}{n:>8}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("palabra{i}")).collect::<Vec<_>>().join(" ")
    }

    fn line(id: usize, author: &str, text: Option<&str>, country: Option<&str>) -> String {
        serde_json::to_string(&RawTweetRecord {
            tweet_id: id.to_string(),
            author_id: author.into(),
            text: text.map(str::to_owned),
            lang: Some("es".into()),
            country: country.map(str::to_owned),
            created_at: None,
        })
        .unwrap()
    }

    #[test]
    fn word_count_boundary() {
        let t21 = words(21);
        let t20 = words(20);
        let body = [
            line(1, "a", Some(&t21), Some("ES")),
            line(2, "a", Some(&t20), Some("ES")),
        ]
        .join("\n");
        let c = filter_lines(&body, &Pipeline::default()).unwrap();
        assert_eq!(c.stats.accepted, 1);
        assert_eq!(c.stats.too_short, 1);
        assert_eq!(c.readers["a"], [t21]);
    }

    #[test]
    fn duplicates_keep_first_occurrence() {
        let t = words(25);
        let shouty = t.to_uppercase() + "!!!";
        let body = [
            line(1, "a", Some(&t), Some("ES")),
            line(2, "b", Some(&shouty), Some("ES")),
        ]
        .join("\n");
        let c = filter_lines(&body, &Pipeline::default()).unwrap();
        assert_eq!((c.stats.accepted, c.stats.duplicate), (1, 1));
        assert!(c.readers.contains_key("a"));
        assert!(!c.readers.contains_key("b"));
    }

    #[test]
    fn missing_fields_and_malformed_lines() {
        let t = words(25);
        let body = [
            line(1, "a", None, Some("ES")),
            line(2, "a", Some("  "), Some("ES")),
            line(3, "a", Some("¡¡!!"), Some("ES")),
            line(4, "a", Some(&t), None),
            line(5, "a", Some(&t), Some("MX")),
            "{not json".to_owned(),
            "".to_owned(),
            line(6, "a", Some(&t), Some("es")),
        ]
        .join("\n");
        let c = filter_lines(&body, &Pipeline::default()).unwrap();
        let s = &c.stats;
        assert_eq!(s.input_records, 7);
        assert_eq!((s.missing_text, s.outside_spain, s.malformed, s.accepted), (3, 2, 1, 1));
        assert_eq!(s.malformed_lines, [6]);
        assert!(s.reconciles());
    }

    #[test]
    fn empty_dump() {
        assert!(matches!(filter_lines("", &Pipeline::default()), Err(IngestError::EmptyDump)));
        assert!(matches!(filter_lines("\n\n", &Pipeline::default()), Err(IngestError::EmptyDump)));
    }

    #[test]
    fn report_reconciles() {
        let report = corpus_report(&ReaderCorpus::default());
        assert_eq!(report, CorpusReport::default());

        let t = words(25);
        let mut lines = vec![];
        for i in 0..3 {
            lines.push(line(i, "a", Some(&format!("{t} extra{i}")), Some("ES")));
        }
        for i in 3..10 {
            lines.push(line(i, "a", Some("corto"), Some("ES")));
        }
        let c = filter_lines(&lines.join("\n"), &Pipeline::default()).unwrap();
        let r = corpus_report(&c);
        assert_eq!((r.input_records, r.accepted), (10, 3));
        assert_eq!(r.rejected(), 7);
        assert!(r.to_string().contains("accepted"));
    }
}
