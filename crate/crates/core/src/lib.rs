//! Case-based reasoning engine for book recommendation.
//!
//! A reader's short text is cleaned, tokenized and (optionally) embedded,
//! then compared against a memory of book-character passages. The best
//! matches are gated by a reliability threshold, and high-confidence
//! solutions go to a three-expert panel before they are retained as new
//! cases.
//!
//! The modules follow the reasoning cycle:
//!
//! * [`text`] turns raw text into cleaned text, tokens and document vectors.
//! * [`similarity`] holds the cosine, Jaccard and soft-cosine measures.
//! * [`memory`] is the append-only case store with on-disk journaling.
//! * [`engine`] runs retrieve and reuse, and wires review into retention.
//! * [`review`] is the expert voting state machine.
//! * [`ingest`] filters raw tweet dumps into per-reader corpora.

pub mod engine;
pub mod ingest;
pub mod memory;
pub mod review;
pub mod similarity;
pub mod text;

pub use engine::{
    Engine, EngineConfig, EngineError, Pick, QueryText, RecommendationKind, Recommendation,
    RetrievalResult, ScoredCase, VoteOutcome,
};
pub use memory::{Case, CaseId, CaseStore, Origin, PersonalityLabel, StoreError, StoreSnapshot};
pub use review::{
    Decision, ExpertId, ExpertPanel, ReviewBoard, ReviewError, ReviewTicket, TicketId, TicketState,
    Vote,
};
pub use similarity::{Metric, SimilarityError, SimilarityScore};
pub use text::{DocumentVector, EmbeddingTable, Pipeline, PipelineConfig, RawText, TextError, TokenizedText};
