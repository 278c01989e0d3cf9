//! Pairwise metric comparison over a labelled pair file.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use bookcbr::similarity::{cosine, jaccard, soft_cosine_texts};
use bookcbr::{Metric, Pipeline, RawText};
use bookcbr_api::wire::Score;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Deserialize)]
pub struct Pair {
    pub text_a: String,
    pub text_b: String,
    pub label: String,
}

#[derive(Debug, Serialize)]
pub struct MetricRun {
    pub metric: Metric,
    /// Absent when the metric is undefined for the pair (no coverage, zero norm).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<Score>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub millis: f64,
}

#[derive(Debug, Serialize)]
pub struct PairResult {
    pub label: String,
    pub text_a: String,
    pub text_b: String,
    pub runs: Vec<MetricRun>,
}

pub fn load_pairs(path: &Path) -> Result<Vec<Pair>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: expected an array of {{text_a, text_b, label}}: {e}", path.display()))
}

/// Scores one pair under one metric, timing the whole path from raw text.
pub fn score_pair(pair: &Pair, metric: Metric, pipeline: &Pipeline) -> Result<f64, String> {
    let a = pipeline
        .analyze(&RawText::new(pair.text_a.as_str(), "a").map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let b = pipeline
        .analyze(&RawText::new(pair.text_b.as_str(), "b").map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let score = match metric {
        Metric::Jaccard => jaccard(&a, &b),
        Metric::Cosine => {
            let table = pipeline.embeddings().ok_or("no embedding table configured")?;
            let va = table.vectorize(&a).map_err(|e| e.to_string())?;
            let vb = table.vectorize(&b).map_err(|e| e.to_string())?;
            cosine(&va, &vb)
        }
        Metric::SoftCosine => {
            let table = pipeline.embeddings().ok_or("no embedding table configured")?;
            soft_cosine_texts(&a, &b, table)
        }
    };
    score.map(|s| s.value()).map_err(|e| e.to_string())
}

pub fn evaluate(pairs: &[Pair], pipeline: &Pipeline) -> Vec<PairResult> {
    let metrics: Vec<Metric> = Metric::ALL
        .into_iter()
        .filter(|m| !m.needs_embeddings() || pipeline.embeddings().is_some())
        .collect();
    pairs
        .iter()
        .map(|pair| PairResult {
            label: pair.label.clone(),
            text_a: pair.text_a.clone(),
            text_b: pair.text_b.clone(),
            runs: metrics
                .iter()
                .map(|&metric| {
                    let start = Instant::now();
                    let result = score_pair(pair, metric, pipeline);
                    let millis = start.elapsed().as_secs_f64() * 1e3;
                    let (score, error) = match result {
                        Ok(v) => (Some(Score(v)), None),
                        Err(e) => (None, Some(e)),
                    };
                    MetricRun { metric, score, error, millis }
                })
                .collect(),
        })
        .collect()
}

/// Plain-text table, one row per (pair, metric).
pub struct Table<'a>(pub &'a [PairResult]);

impl fmt::Display for Table<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<5} {:<11} {:<11} {:>12} {:>10}", "pair", "label", "metric", "similarity", "time_ms")?;
        for (i, r) in self.0.iter().enumerate() {
            for run in &r.runs {
                let score = run.score.map_or_else(|| "n/a".to_owned(), |s| format!("{:.8}", s.0));
                writeln!(
                    f,
                    "{:<5} {:<11} {:<11} {:>12} {:>10.3}",
                    i + 1,
                    r.label,
                    run.metric.as_str(),
                    score,
                    run.millis
                )?;
            }
        }
        Ok(())
    }
}
