//! Cosine, Jaccard and soft-cosine similarity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{DocumentVector, EmbeddingTable, TokenizedText};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("vectors differ in dimension ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("empty token set")]
    EmptySet,
    #[error("soft-cosine norm is zero")]
    ZeroNorm,
    #[error("count vectors do not match the feature matrix size {0}")]
    FeatureCountMismatch(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Jaccard,
    Cosine,
    #[serde(rename = "softcosine")]
    SoftCosine,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Jaccard, Metric::Cosine, Metric::SoftCosine];

    /// Whether scoring needs an embedding table.
    pub fn needs_embeddings(self) -> bool {
        !matches!(self, Metric::Jaccard)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Jaccard => "jaccard",
            Metric::Cosine => "cosine",
            Metric::SoftCosine => "softcosine",
        }
    }

    fn range(self) -> (f64, f64) {
        match self {
            Metric::Jaccard => (0.0, 1.0),
            Metric::Cosine | Metric::SoftCosine => (-1.0, 1.0),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jaccard" => Ok(Metric::Jaccard),
            "cosine" => Ok(Metric::Cosine),
            "softcosine" | "soft_cosine" | "soft-cosine" => Ok(Metric::SoftCosine),
            other => Err(format!(
                "unknown metric {other:?}; expected jaccard, cosine or softcosine"
            )),
        }
    }
}

/// A finite similarity value, clamped into its metric's range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimilarityScore {
    value: f64,
    metric: Metric,
}

impl SimilarityScore {
    /// Returns `None` for NaN. Rounding noise outside the range is clamped.
    pub fn new(value: f64, metric: Metric) -> Option<Self> {
        if value.is_nan() {
            return None;
        }
        let (lo, hi) = metric.range();
        Some(Self {
            value: value.clamp(lo, hi),
            metric,
        })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Raw cosine of two slices.
pub fn cosine_values(a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::DimensionMismatch(a.len(), b.len()));
    }
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok(dot(a, b) / (na * nb))
}

pub fn cosine(a: &DocumentVector, b: &DocumentVector) -> Result<SimilarityScore, SimilarityError> {
    let value = cosine_values(a.values(), b.values())?;
    SimilarityScore::new(value, Metric::Cosine).ok_or(SimilarityError::ZeroVector)
}

pub fn jaccard(a: &TokenizedText, b: &TokenizedText) -> Result<SimilarityScore, SimilarityError> {
    let (sa, sb) = (a.token_set(), b.token_set());
    if sa.is_empty() || sb.is_empty() {
        return Err(SimilarityError::EmptySet);
    }
    let (small, large) = if sa.len() <= sb.len() { (sa, sb) } else { (sb, sa) };
    let intersection = small.iter().filter(|t| large.contains(*t)).count();
    let union = sa.len() + sb.len() - intersection;
    let value = intersection as f64 / union as f64;
    Ok(SimilarityScore::new(value, Metric::Jaccard).expect("finite ratio"))
}

/// Pairwise similarity between the distinct features of two documents.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSimilarityMatrix {
    features: Vec<String>,
    // row-major, features.len()^2 entries
    entries: Vec<f64>,
}

impl FeatureSimilarityMatrix {
    pub fn identity(features: Vec<String>) -> Self {
        let n = features.len();
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { features, entries }
    }

    /// Builds a matrix from explicit entries. Fails unless the matrix is
    /// square, symmetric, has a unit diagonal and entries in `[0, 1]`.
    pub fn from_entries(features: Vec<String>, entries: Vec<f64>) -> Result<Self, String> {
        let n = features.len();
        if entries.len() != n * n {
            return Err(format!("expected {} entries, got {}", n * n, entries.len()));
        }
        for i in 0..n {
            if entries[i * n + i] != 1.0 {
                return Err(format!("diagonal entry {i} is not 1"));
            }
            for j in 0..n {
                let v = entries[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(format!("entry ({i},{j}) = {v} outside [0, 1]"));
                }
                if v != entries[j * n + i] {
                    return Err(format!("entries ({i},{j}) and ({j},{i}) differ"));
                }
            }
        }
        Ok(Self { features, entries })
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim() + j]
    }

    /// Raw term frequencies of `text` laid out along this matrix's features.
    pub fn counts(&self, text: &TokenizedText) -> Vec<f64> {
        let tf = text.term_counts();
        self.features
            .iter()
            .map(|f| tf.get(f.as_str()).copied().unwrap_or(0.0))
            .collect()
    }

    fn quadratic(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.dim();
        let mut total = 0.0;
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let row = &self.entries[i * n..(i + 1) * n];
            total += ai * dot(row, b);
        }
        total
    }
}

/// Feature index is the sorted union of both token sets. Off-diagonal
/// entries are the embedding cosine clamped at zero; a pair involving an
/// OOV token (or a zero embedding) gets 0.
pub fn build_feature_matrix(
    a: &TokenizedText,
    b: &TokenizedText,
    table: &EmbeddingTable,
) -> FeatureSimilarityMatrix {
    let features: Vec<String> = a.token_set().union(b.token_set()).cloned().collect();
    let n = features.len();
    let unit: Vec<Option<Vec<f64>>> = features
        .iter()
        .map(|f| {
            table.get(f).and_then(|v| {
                let norm = dot(v, v).sqrt();
                (norm > 0.0).then(|| v.iter().map(|x| x / norm).collect())
            })
        })
        .collect();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        entries[i * n + i] = 1.0;
        for j in (i + 1)..n {
            if let (Some(u), Some(v)) = (&unit[i], &unit[j]) {
                let s = dot(u, v).clamp(0.0, 1.0);
                entries[i * n + j] = s;
                entries[j * n + i] = s;
            }
        }
    }
    FeatureSimilarityMatrix { features, entries }
}

/// `aᵀSb / (sqrt(aᵀSa) · sqrt(bᵀSb))`.
pub fn soft_cosine(
    a_counts: &[f64],
    b_counts: &[f64],
    s: &FeatureSimilarityMatrix,
) -> Result<SimilarityScore, SimilarityError> {
    let n = s.dim();
    if a_counts.len() != n || b_counts.len() != n {
        return Err(SimilarityError::FeatureCountMismatch(n));
    }
    let aa = s.quadratic(a_counts, a_counts);
    let bb = s.quadratic(b_counts, b_counts);
    if aa <= 0.0 || bb <= 0.0 {
        return Err(SimilarityError::ZeroNorm);
    }
    let ab = s.quadratic(a_counts, b_counts);
    let value = ab / (aa.sqrt() * bb.sqrt());
    SimilarityScore::new(value, Metric::SoftCosine).ok_or(SimilarityError::ZeroNorm)
}

/// Soft cosine of two tokenized texts using `table` for feature similarity.
pub fn soft_cosine_texts(
    a: &TokenizedText,
    b: &TokenizedText,
    table: &EmbeddingTable,
) -> Result<SimilarityScore, SimilarityError> {
    let s = build_feature_matrix(a, b, table);
    soft_cosine(&s.counts(a), &s.counts(b), &s)
}
