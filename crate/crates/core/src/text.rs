//! Text pipeline: cleaning, tokenization and mean-pooled document vectors.
//!
//! Case passages and reader texts go through the same [`Pipeline`], so the
//! representations stored in case memory are always comparable with a
//! query's.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock};

use regex::Regex;
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TextError {
    #[error("text is empty")]
    EmptyInput,
    #[error("nothing left after cleaning")]
    EmptyAfterCleaning,
    #[error("no token of the text has an embedding")]
    NoCoverage,
    #[error("embedding file is empty")]
    EmptyFile,
    #[error("line {0}: vector length differs from the first line")]
    DimensionMismatch(usize),
    #[error("line {0}: malformed embedding line")]
    MalformedLine(usize),
    #[error("line {0}: token already defined")]
    DuplicateToken(usize),
    #[error("io error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn io_error(path: &Path, err: std::io::Error) -> TextError {
    TextError::Io {
        path: path.to_path_buf(),
        message: err.to_string(),
    }
}

/// A piece of text tagged with where it came from (tweet id, case id, ...).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawText {
    content: String,
    source_id: String,
}

impl RawText {
    pub fn new(content: impl Into<String>, source_id: impl Into<String>) -> Result<Self, TextError> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(TextError::EmptyInput);
        }
        Ok(Self {
            content,
            source_id: source_id.into(),
        })
    }

    pub fn content(&self) -> &str {
        &self.content
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedText {
    tokens: Vec<String>,
    token_set: BTreeSet<String>,
}

impl TokenizedText {
    /// Builds a tokenized text from whitespace-separated segments.
    pub fn from_clean(clean: &str) -> Self {
        let tokens: Vec<String> = clean.split_whitespace().map(str::to_owned).collect();
        let token_set = tokens.iter().cloned().collect();
        Self { tokens, token_set }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token_set(&self) -> &BTreeSet<String> {
        &self.token_set
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    /// Raw term frequency of every distinct token.
    pub fn term_counts(&self) -> HashMap<&str, f64> {
        let mut counts = HashMap::with_capacity(self.token_set.len());
        for token in &self.tokens {
            *counts.entry(token.as_str()).or_insert(0.0) += 1.0;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentVector {
    values: Vec<f64>,
    covered_tokens: usize,
    total_tokens: usize,
}

impl DocumentVector {
    /// A vector not derived from text, e.g. for similarity tests.
    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            values,
            covered_tokens: 0,
            total_tokens: 0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn covered_tokens(&self) -> usize {
        self.covered_tokens
    }

    pub fn total_tokens(&self) -> usize {
        self.total_tokens
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Token to dense vector map, immutable once loaded.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dimension: usize,
    index: HashMap<String, usize>,
    // row-major, `index.len() * dimension` components
    data: Vec<f64>,
    fingerprint: String,
}

impl EmbeddingTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TextError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
        let text = String::from_utf8(bytes).map_err(|e| TextError::Io {
            path: path.to_path_buf(),
            message: format!("not valid UTF-8: {e}"),
        })?;
        Self::parse(&text)
    }

    /// Parses the plain-text `token v1 ... vD` format. Blank lines are
    /// skipped; every other line counts towards the reported line numbers.
    pub fn parse(text: &str) -> Result<Self, TextError> {
        let mut dimension = None;
        let mut index = HashMap::new();
        let mut data = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().ok_or(TextError::MalformedLine(line_no))?;
            if token.starts_with('#') {
                return Err(TextError::MalformedLine(line_no));
            }
            let start = data.len();
            for part in parts {
                let value: f64 = part.parse().map_err(|_| TextError::MalformedLine(line_no))?;
                if !value.is_finite() {
                    return Err(TextError::MalformedLine(line_no));
                }
                data.push(value);
            }
            let width = data.len() - start;
            match dimension {
                None if width == 0 => return Err(TextError::MalformedLine(line_no)),
                None => dimension = Some(width),
                Some(d) if d != width => return Err(TextError::DimensionMismatch(line_no)),
                Some(_) => {}
            }
            if index.insert(token.to_owned(), index.len()).is_some() {
                return Err(TextError::DuplicateToken(line_no));
            }
        }
        let dimension = dimension.ok_or(TextError::EmptyFile)?;
        let fingerprint = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(Self {
            dimension,
            index,
            data,
            fingerprint,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn vocab_size(&self) -> usize {
        self.index.len()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&row| {
            let start = row * self.dimension;
            &self.data[start..start + self.dimension]
        })
    }

    /// SHA-256 of the source text; identifies the table in store manifests.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Mean of the embeddings of every in-vocabulary token. OOV tokens are
    /// skipped rather than counted as zeros.
    pub fn vectorize(&self, text: &TokenizedText) -> Result<DocumentVector, TextError> {
        let mut sum = vec![0.0; self.dimension];
        let mut covered = 0;
        for token in text.tokens() {
            if let Some(row) = self.get(token) {
                covered += 1;
                for (acc, v) in sum.iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        if covered == 0 {
            return Err(TextError::NoCoverage);
        }
        let n = covered as f64;
        sum.iter_mut().for_each(|v| *v /= n);
        Ok(DocumentVector {
            values: sum,
            covered_tokens: covered,
            total_tokens: text.token_count(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineConfig {
    pub remove_stopwords: bool,
    pub stopwords_path: Option<PathBuf>,
    pub embeddings_path: Option<PathBuf>,
}

static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:https?://|www\.)\S*").expect("valid url regex"));
static MENTION_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"@\w+").expect("valid mention regex"));

/// Cleans raw text: NFC + lowercase, URLs and @-mentions dropped, every
/// non-alphanumeric character turned into a space, whitespace collapsed.
/// A hashtag keeps its word because `#` is just punctuation here.
pub fn clean_text(content: &str) -> String {
    let lowered: String = content.nfc().collect::<String>().to_lowercase().nfc().collect();
    let no_urls = URL_RE.replace_all(&lowered, " ");
    let no_mentions = MENTION_RE.replace_all(&no_urls, " ");
    let spaced: String = no_mentions
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    spaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The shared text pipeline. Cheap to clone.
#[derive(Debug, Clone, Default)]
pub struct Pipeline {
    config: PipelineConfig,
    stopwords: Option<Arc<HashSet<String>>>,
    embeddings: Option<Arc<EmbeddingTable>>,
}

impl Pipeline {
    /// Loads the stopword list and embedding table named by `config`.
    pub fn from_config(config: PipelineConfig) -> Result<Self, TextError> {
        let stopwords = match (&config.remove_stopwords, &config.stopwords_path) {
            (true, Some(path)) => {
                let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
                Some(Arc::new(parse_stopwords(&text)))
            }
            _ => None,
        };
        let embeddings = match &config.embeddings_path {
            Some(path) => Some(Arc::new(EmbeddingTable::load(path)?)),
            None => None,
        };
        Ok(Self {
            config,
            stopwords,
            embeddings,
        })
    }

    pub fn with_embeddings(mut self, table: EmbeddingTable) -> Self {
        self.embeddings = Some(Arc::new(table));
        self
    }

    pub fn with_stopwords<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let text: Vec<String> = words.into_iter().map(|w| w.as_ref().to_owned()).collect();
        self.config.remove_stopwords = true;
        self.stopwords = Some(Arc::new(parse_stopwords(&text.join("\n"))));
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn embeddings(&self) -> Option<&EmbeddingTable> {
        self.embeddings.as_deref()
    }

    pub fn preprocess(&self, raw: &RawText) -> Result<RawText, TextError> {
        let mut clean = clean_text(raw.content());
        if let Some(stop) = &self.stopwords {
            clean = clean
                .split(' ')
                .filter(|w| !stop.contains(*w))
                .collect::<Vec<_>>()
                .join(" ");
        }
        if clean.is_empty() {
            return Err(TextError::EmptyAfterCleaning);
        }
        Ok(RawText {
            content: clean,
            source_id: raw.source_id.clone(),
        })
    }

    pub fn tokenize(&self, clean: &RawText) -> TokenizedText {
        TokenizedText::from_clean(clean.content())
    }

    /// `None` when no embedding table is configured.
    pub fn vectorize(&self, text: &TokenizedText) -> Option<Result<DocumentVector, TextError>> {
        self.embeddings.as_ref().map(|table| table.vectorize(text))
    }

    /// Preprocess and tokenize in one step.
    pub fn analyze(&self, raw: &RawText) -> Result<TokenizedText, TextError> {
        Ok(self.tokenize(&self.preprocess(raw)?))
    }

    /// Identifies everything that influences derived representations.
    /// Stored in the case-store manifest to detect config drift.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"clean-v1\n");
        if let Some(stop) = &self.stopwords {
            let mut words: Vec<&String> = stop.iter().collect();
            words.sort();
            hasher.update(b"stopwords\n");
            for w in words {
                hasher.update(w.as_bytes());
                hasher.update(b"\n");
            }
        }
        if let Some(table) = &self.embeddings {
            hasher.update(b"embeddings\n");
            hasher.update(table.fingerprint().as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// One stopword per line; stopwords are cleaned like any other text so
/// that they match cleaned tokens.
fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .flat_map(|line| {
            clean_text(line)
                .split(' ')
                .filter(|w| !w.is_empty())
                .map(str::to_owned)
                .collect::<Vec<_>>()
        })
        .collect()
}
