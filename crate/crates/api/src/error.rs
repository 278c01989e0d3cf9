use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use bookcbr::{EngineError, ReviewError, StoreError, TextError};
use serde::Serialize;

/// Error response: `{code, detail}` plus the offending record for imports.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub detail: String,
    pub record_index: Option<usize>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    detail: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    record_index: Option<usize>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, detail: impl Into<String>) -> Self {
        Self {
            status,
            code,
            detail: detail.into(),
            record_index: None,
        }
    }

    fn record(mut self, index: usize) -> Self {
        self.record_index = Some(index);
        self
    }

    pub fn bad_request(code: &'static str, detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, detail)
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unknown_expert", "expert token not recognised")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code,
            detail: &self.detail,
            record_index: self.record_index,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<TextError> for ApiError {
    fn from(e: TextError) -> Self {
        let detail = e.to_string();
        match e {
            TextError::EmptyInput => Self::bad_request("empty_text", detail),
            TextError::EmptyAfterCleaning => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_after_cleaning", detail)
            }
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "pipeline_error", detail),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let detail = e.to_string();
        let unprocessable = |code| Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, detail.clone());
        match e {
            StoreError::SchemaError { index, .. } => unprocessable("schema_error").record(index),
            StoreError::InvalidPersonality { index, .. } => unprocessable("invalid_personality").record(index),
            StoreError::InvalidText { index, .. } => unprocessable("invalid_text").record(index),
            StoreError::DuplicateRecord { index } => unprocessable("duplicate_record").record(index),
            StoreError::NotAnArray(_) => unprocessable("invalid_seed_file"),
            StoreError::NotAccepted(_) => Self::new(StatusCode::CONFLICT, "not_accepted", detail),
            StoreError::CorruptStore(_) | StoreError::Io { .. } => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "store_error", detail)
            }
        }
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let detail = e.to_string();
        match e {
            ReviewError::UnknownExpert(_) => Self::new(StatusCode::UNAUTHORIZED, "unknown_expert", detail),
            ReviewError::UnknownTicket(_) => Self::new(StatusCode::NOT_FOUND, "unknown_ticket", detail),
            ReviewError::TicketClosed(_) => Self::new(StatusCode::CONFLICT, "ticket_closed", detail),
            ReviewError::AlreadyVoted { .. } => Self::new(StatusCode::CONFLICT, "already_voted", detail),
            ReviewError::JustificationRequired(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "justification_required", detail)
            }
            ReviewError::InvalidPanel(_) | ReviewError::Storage { .. } => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "review_store_error", detail)
            }
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Text(e) => e.into(),
            EngineError::Store(e) => e.into(),
            EngineError::Review(e) => e.into(),
            EngineError::EmptyCaseBase => Self::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "empty_case_base",
                "the case base is empty",
            ),
            EngineError::InvalidConfig(d) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "config_error", d),
        }
    }
}
