//! HTTP/1.1 JSON facade over the recommendation engine and the expert
//! review workflow.
//!
//! | method | path                       | purpose                               |
//! |--------|----------------------------|---------------------------------------|
//! | POST   | `/recommend`               | recommend for `{text}`                |
//! | GET    | `/reviews/pending`         | pending tickets, oldest first         |
//! | GET    | `/reviews/{id}`            | one ticket                            |
//! | GET    | `/reviews/{id}/audit`      | vote history of a ticket              |
//! | POST   | `/reviews/{id}/vote`       | `{expert_token, decision, justification?}` |
//! | GET    | `/cases?limit&offset`      | paginated case list                   |
//! | POST   | `/cases/import`            | seed JSON array                       |
//! | GET    | `/health`                  | liveness, store version, case count   |
//!
//! Errors are `{code, detail}` with a status from [`ApiError`].

pub mod error;
pub mod wire;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use bookcbr::review::ExpertId;
use bookcbr::{Decision, Engine, TicketId, Vote};
use serde::Deserialize;
use tokio::net::TcpListener;

pub use error::ApiError;
use wire::{
    AuditBody, CaseBody, CasePage, HealthBody, ImportBody, PendingBody, RecommendationBody, TicketBody,
    VoteResponse,
};

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 1000;

/// One panel member's bearer token.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ExpertCredential {
    pub id: String,
    pub token: String,
}

#[derive(Clone)]
pub struct AppState {
    engine: Engine,
    tokens: Arc<HashMap<String, ExpertId>>,
}

impl AppState {
    /// Fails unless every credential names a panel member and the tokens
    /// are distinct.
    pub fn new(engine: Engine, credentials: &[ExpertCredential]) -> Result<Self, String> {
        let mut tokens = HashMap::new();
        for c in credentials {
            let id = ExpertId::new(c.id.clone());
            if !engine.board().panel().contains(&id) {
                return Err(format!("expert {} is not on the review panel", c.id));
            }
            if c.token.is_empty() || tokens.insert(c.token.clone(), id).is_some() {
                return Err(format!("expert {} needs a unique, non-empty token", c.id));
            }
        }
        Ok(Self {
            engine,
            tokens: Arc::new(tokens),
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn expert(&self, token: &str) -> Result<&ExpertId, ApiError> {
        self.tokens.get(token).ok_or_else(ApiError::unauthorized)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/recommend", post(recommend))
        .route("/reviews/pending", get(pending))
        .route("/reviews/{id}", get(ticket))
        .route("/reviews/{id}/audit", get(audit))
        .route("/reviews/{id}/vote", post(vote))
        .route("/cases", get(cases))
        .route("/cases/import", post(import))
        .route("/health", get(health))
        .with_state(state)
}

pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        tracing::info!(%addr, "listening");
    }
    axum::serve(listener, router(state)).await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request("invalid_body", e.body_text()))
}

fn ticket_id(raw: &str) -> Result<TicketId, ApiError> {
    raw.parse().map(TicketId).map_err(|_| {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_ticket", format!("unknown ticket {raw}"))
    })
}

#[derive(Deserialize)]
struct RecommendRequest {
    #[serde(default)]
    text: Option<String>,
}

async fn recommend(
    State(state): State<AppState>,
    payload: Result<Json<RecommendRequest>, JsonRejection>,
) -> Result<Json<RecommendationBody>, ApiError> {
    let text = body(payload)?.text.unwrap_or_default();
    let (rec, ticket) = state.engine.solve(&text)?;
    Ok(Json(RecommendationBody::new(&rec, ticket.as_ref())))
}

async fn pending(State(state): State<AppState>, headers: HeaderMap) -> Result<Json<Vec<PendingBody>>, ApiError> {
    let viewer = match headers.get(header::AUTHORIZATION) {
        None => None,
        Some(value) => {
            let token = value
                .to_str()
                .ok()
                .and_then(|v| v.strip_prefix("Bearer "))
                .ok_or_else(ApiError::unauthorized)?;
            Some(state.expert(token.trim())?.clone())
        }
    };
    let queue = state.engine.board().pending_queue(viewer.as_ref());
    Ok(Json(queue.iter().map(PendingBody::from).collect()))
}

async fn ticket(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<TicketBody>, ApiError> {
    let id = ticket_id(&id)?;
    let t = state
        .engine
        .board()
        .ticket(id)
        .ok_or(bookcbr::ReviewError::UnknownTicket(id))?;
    Ok(Json(TicketBody::from(&t)))
}

async fn audit(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Vec<AuditBody>>, ApiError> {
    let log = state.engine.board().audit_log(ticket_id(&id)?)?;
    Ok(Json(log.iter().map(AuditBody::from).collect()))
}

#[derive(Deserialize)]
struct VoteRequest {
    expert_token: String,
    decision: Decision,
    #[serde(default)]
    justification: Option<String>,
}

async fn vote(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<VoteRequest>, JsonRejection>,
) -> Result<Json<VoteResponse>, ApiError> {
    let req = body(payload)?;
    let expert = state.expert(&req.expert_token)?.clone();
    let id = ticket_id(&id)?;
    let vote = Vote::new(expert.as_str(), req.decision, req.justification.as_deref());
    let outcome = state.engine.cast_vote(id, vote)?;
    Ok(Json(VoteResponse {
        ticket: TicketBody::from(&outcome.ticket),
        retained_case_id: outcome.retained.map(|c| c.id().0),
        case_count: state.engine.store().snapshot().len(),
    }))
}

fn page_param(params: &HashMap<String, String>, key: &str, default: usize) -> Result<usize, ApiError> {
    match params.get(key) {
        None => Ok(default),
        Some(raw) => raw
            .parse()
            .map_err(|_| ApiError::bad_request("invalid_pagination", format!("{key} must be a non-negative integer"))),
    }
}

async fn cases(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<CasePage>, ApiError> {
    let offset = page_param(&params, "offset", 0)?;
    let limit = page_param(&params, "limit", DEFAULT_PAGE_SIZE)?;
    if limit == 0 || limit > MAX_PAGE_SIZE {
        return Err(ApiError::bad_request(
            "invalid_pagination",
            format!("limit must be between 1 and {MAX_PAGE_SIZE}"),
        ));
    }
    let snap = state.engine.store().snapshot();
    let cases = snap
        .cases()
        .iter()
        .skip(offset)
        .take(limit)
        .map(|c| CaseBody::from(c.as_ref()))
        .collect();
    Ok(Json(CasePage {
        total: snap.len(),
        offset,
        limit,
        store_version: snap.version(),
        cases,
    }))
}

async fn import(State(state): State<AppState>, body: String) -> Result<Json<ImportBody>, ApiError> {
    let store = state.engine.store();
    let loaded = store.import_seed_json(&body)?;
    let snap = store.snapshot();
    Ok(Json(ImportBody {
        loaded,
        case_count: snap.len(),
        store_version: snap.version(),
    }))
}

async fn health(State(state): State<AppState>) -> Json<HealthBody> {
    let snap = state.engine.store().snapshot();
    Json(HealthBody {
        status: "ok",
        store_version: snap.version(),
        case_count: snap.len(),
    })
}
