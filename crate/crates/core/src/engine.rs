//! Retrieve and reuse over the case memory, plus the glue that sends
//! high-confidence solutions to expert review and accepted ones to
//! retention.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::memory::{Case, CaseId, CaseStore, PersonalityLabel, StoreError, StoreSnapshot};
use crate::review::{Candidate, ReviewBoard, ReviewError, ReviewTicket, TicketId, Vote};
use crate::similarity::{self, Metric, SimilarityScore};
use crate::text::{DocumentVector, Pipeline, RawText, TextError, TokenizedText};

pub const HIGH_CONFIDENCE_MESSAGE: &str = "Reliability of the recommendation: +50%";
pub const LOW_CONFIDENCE_MESSAGE: &str = "Recommendation reliability: -50%";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("the case base is empty")]
    EmptyCaseBase,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EngineConfig {
    pub metric: Metric,
    /// A best score strictly above this is a high-confidence match.
    pub threshold: f64,
    pub top_k: usize,
    pub fallback_count: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            metric: Metric::Jaccard,
            threshold: 0.50,
            top_k: 5,
            fallback_count: 2,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(EngineError::InvalidConfig(format!(
                "threshold {} must lie strictly between 0 and 1",
                self.threshold
            )));
        }
        if self.top_k == 0 || self.fallback_count == 0 {
            return Err(EngineError::InvalidConfig(
                "top_k and fallback_count must be positive".into(),
            ));
        }
        if self.fallback_count > self.top_k {
            return Err(EngineError::InvalidConfig(format!(
                "fallback_count {} exceeds top_k {}",
                self.fallback_count, self.top_k
            )));
        }
        Ok(())
    }
}

/// A reader's text with the representations the metrics need.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryText {
    pub raw: RawText,
    pub tokenized: TokenizedText,
    /// `None` without an embedding table or when no token is covered.
    pub vector: Option<DocumentVector>,
}

impl QueryText {
    pub fn analyze(raw: RawText, pipeline: &Pipeline) -> Result<Self, TextError> {
        let tokenized = pipeline.analyze(&raw)?;
        let vector = match pipeline.vectorize(&tokenized) {
            Some(Ok(v)) => Some(v),
            Some(Err(TextError::NoCoverage)) | None => None,
            Some(Err(e)) => return Err(e),
        };
        Ok(Self {
            raw,
            tokenized,
            vector,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredCase {
    pub case_id: CaseId,
    pub book_title: String,
    pub personality: PersonalityLabel,
    pub score: SimilarityScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    /// Descending by score, ties by ascending case id.
    pub ranked: Vec<ScoredCase>,
    /// The metric actually used for scoring.
    pub metric: Metric,
    /// Set when the configured metric could not be used and Jaccard was
    /// substituted.
    pub fell_back: bool,
    pub store_version: u64,
}

impl RetrievalResult {
    pub fn best(&self) -> Option<&ScoredCase> {
        self.ranked.first()
    }
}

/// Ranking order: higher score first, then lower case id.
pub fn rank_order(a: (f64, CaseId), b: (f64, CaseId)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

fn score_case(query: &QueryText, case: &Case, metric: Metric, pipeline: &Pipeline) -> Option<SimilarityScore> {
    match metric {
        Metric::Jaccard => similarity::jaccard(&query.tokenized, case.tokenized()).ok(),
        Metric::Cosine => {
            let (q, c) = (query.vector.as_ref()?, case.vector()?);
            similarity::cosine(q, c).ok()
        }
        Metric::SoftCosine => {
            let table = pipeline.embeddings()?;
            similarity::soft_cosine_texts(&query.tokenized, case.tokenized(), table).ok()
        }
    }
}

fn rank(query: &QueryText, snapshot: &StoreSnapshot, metric: Metric, pipeline: &Pipeline, top_k: usize) -> Vec<ScoredCase> {
    let mut scored: Vec<(&Case, SimilarityScore)> = snapshot
        .cases()
        .iter()
        .filter_map(|case| score_case(query, case, metric, pipeline).map(|s| (case.as_ref(), s)))
        .collect();
    scored.sort_by(|a, b| rank_order((a.1.value(), a.0.id()), (b.1.value(), b.0.id())));
    scored.truncate(top_k);
    scored
        .into_iter()
        .map(|(case, score)| ScoredCase {
            case_id: case.id(),
            book_title: case.book_title().to_owned(),
            personality: case.personality().clone(),
            score,
        })
        .collect()
}

/// Scores every case and keeps the `top_k` best.
///
/// Vector metrics need an embedding table and a query with at least one
/// covered token; otherwise Jaccard is used and `fell_back` is set. Under
/// cosine, cases without a vector are left out of the ranking.
pub fn retrieve(
    query: &QueryText,
    snapshot: &StoreSnapshot,
    config: &EngineConfig,
    pipeline: &Pipeline,
) -> Result<RetrievalResult, EngineError> {
    if snapshot.is_empty() {
        return Err(EngineError::EmptyCaseBase);
    }
    let usable = !config.metric.needs_embeddings()
        || (pipeline.embeddings().is_some() && query.vector.is_some());
    let mut metric = if usable { config.metric } else { Metric::Jaccard };
    let mut ranked = rank(query, snapshot, metric, pipeline, config.top_k);
    if ranked.is_empty() && metric != Metric::Jaccard {
        metric = Metric::Jaccard;
        ranked = rank(query, snapshot, metric, pipeline, config.top_k);
    }
    Ok(RetrievalResult {
        ranked,
        metric,
        fell_back: metric != config.metric,
        store_version: snapshot.version(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RecommendationKind {
    HighConfidence,
    LowConfidence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pick {
    pub case_id: CaseId,
    pub book_title: String,
    pub personality: PersonalityLabel,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub kind: RecommendationKind,
    pub picks: Vec<Pick>,
    pub reliability_message: String,
    pub eligible_for_retention: bool,
    pub metric: Metric,
    pub metric_fallback: bool,
}

/// Threshold gate: a best score strictly above the threshold yields one
/// pick; anything else yields up to `fallback_count` picks, best first.
pub fn reuse(result: &RetrievalResult, config: &EngineConfig) -> Recommendation {
    let best = result.best().map_or(f64::NEG_INFINITY, |b| b.score.value());
    let high = best > config.threshold;
    let take = if high { 1 } else { config.fallback_count };
    let picks = result
        .ranked
        .iter()
        .take(take)
        .map(|s| Pick {
            case_id: s.case_id,
            book_title: s.book_title.clone(),
            personality: s.personality.clone(),
            score: s.score.value(),
        })
        .collect();
    Recommendation {
        kind: if high {
            RecommendationKind::HighConfidence
        } else {
            RecommendationKind::LowConfidence
        },
        picks,
        reliability_message: if high {
            HIGH_CONFIDENCE_MESSAGE
        } else {
            LOW_CONFIDENCE_MESSAGE
        }
        .to_owned(),
        eligible_for_retention: high,
        metric: result.metric,
        metric_fallback: result.fell_back,
    }
}

#[derive(Debug, Clone)]
pub struct VoteOutcome {
    pub ticket: ReviewTicket,
    /// The case created when this vote accepted the ticket.
    pub retained: Option<Arc<Case>>,
}

/// The full reasoning cycle over a shared store and review board.
#[derive(Debug, Clone)]
pub struct Engine {
    store: Arc<CaseStore>,
    board: Arc<ReviewBoard>,
    config: EngineConfig,
}

impl Engine {
    pub fn new(store: Arc<CaseStore>, board: Arc<ReviewBoard>, config: EngineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        if config.metric.needs_embeddings() && store.pipeline().embeddings().is_none() {
            return Err(EngineError::InvalidConfig(format!(
                "metric {} needs an embedding table",
                config.metric
            )));
        }
        Ok(Self { store, board, config })
    }

    pub fn store(&self) -> &Arc<CaseStore> {
        &self.store
    }

    pub fn board(&self) -> &Arc<ReviewBoard> {
        &self.board
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn analyze(&self, text: &str) -> Result<QueryText, EngineError> {
        let raw = RawText::new(text, "query")?;
        Ok(QueryText::analyze(raw, &self.store.pipeline())?)
    }

    pub fn retrieve(&self, query: &QueryText) -> Result<RetrievalResult, EngineError> {
        retrieve(query, &self.store.snapshot(), &self.config, &self.store.pipeline())
    }

    /// Retrieve and reuse without opening a review ticket.
    pub fn recommend(&self, text: &str) -> Result<Recommendation, EngineError> {
        let query = self.analyze(text)?;
        Ok(reuse(&self.retrieve(&query)?, &self.config))
    }

    /// Runs the cycle up to review: a high-confidence recommendation opens
    /// a pending ticket for the experts; nothing is retained here.
    pub fn solve(&self, text: &str) -> Result<(Recommendation, Option<ReviewTicket>), EngineError> {
        let query = self.analyze(text)?;
        let recommendation = reuse(&self.retrieve(&query)?, &self.config);
        let ticket = match (recommendation.eligible_for_retention, recommendation.picks.first()) {
            (true, Some(pick)) => Some(self.board.open_ticket(Candidate {
                tweet_text: query.raw.content().to_owned(),
                book_title: pick.book_title.clone(),
                personality: pick.personality.clone(),
                score: pick.score,
            })?),
            _ => None,
        };
        Ok((recommendation, ticket))
    }

    /// Records a vote; an accepting vote retains the candidate in the same
    /// step. If retention fails (e.g. a duplicate case) the vote is not
    /// recorded.
    pub fn cast_vote(&self, ticket: TicketId, vote: Vote) -> Result<VoteOutcome, EngineError> {
        let (ticket, retained) = self
            .board
            .cast_vote_with(ticket, vote, |t| self.store.retain(t).map_err(EngineError::from))?;
        Ok(VoteOutcome { ticket, retained })
    }
}
