use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use vista_core::caption::CaptionError;
use vista_core::metrics::RatingError;
use vista_core::overlay::OverlayError;
use vista_core::store::{ReviewStatus, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("{0}")]
    BadRequest(String),
    #[error("missing or invalid bearer token")]
    Unauthorized,
    #[error("sample {0} not found")]
    NotFound(String),
    #[error(transparent)]
    Validation(#[from] CaptionError),
    #[error(transparent)]
    Range(#[from] RatingError),
    #[error("{sample_id}: cannot {action} while {}", status.as_str())]
    InvalidTransition { sample_id: String, status: ReviewStatus, action: &'static str },
    #[error("{sample_id} is claimed by {holder} until {expires_at}")]
    ClaimConflict { sample_id: String, holder: String, expires_at: String },
    #[error("asset unavailable: {0}")]
    Asset(#[from] OverlayError),
    #[error(transparent)]
    Store(StoreError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<StoreError> for ReviewError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => ReviewError::NotFound(id),
            StoreError::InvalidTransition { sample_id, status, action } => {
                ReviewError::InvalidTransition { sample_id, status, action }
            }
            StoreError::Caption(c) => ReviewError::Validation(c),
            other => ReviewError::Store(other),
        }
    }
}

impl ReviewError {
    /// Machine-readable code carried in every error body.
    pub fn code(&self) -> &'static str {
        match self {
            ReviewError::BadRequest(_) => "bad_request",
            ReviewError::Unauthorized => "unauthorized",
            ReviewError::NotFound(_) => "not_found",
            ReviewError::Validation(CaptionError::Empty) => "empty_caption",
            ReviewError::Validation(CaptionError::SentenceCount(_)) => "sentence_count",
            ReviewError::Validation(CaptionError::Incomplete(_)) => "incomplete_caption",
            ReviewError::Range(_) => "range_error",
            ReviewError::InvalidTransition { .. } => "invalid_transition",
            ReviewError::ClaimConflict { .. } => "claim_conflict",
            ReviewError::Asset(_) => "asset_unavailable",
            ReviewError::Store(StoreError::NoDraft(_)) => "no_draft",
            ReviewError::Store(StoreError::ProvenanceOrder { .. }) => "invalid_transition",
            ReviewError::Store(StoreError::SplitRestricted { .. }) => "split_restricted",
            ReviewError::Store(_) => "store_error",
            ReviewError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ReviewError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ReviewError::Unauthorized => StatusCode::UNAUTHORIZED,
            ReviewError::NotFound(_) | ReviewError::Asset(_) => StatusCode::NOT_FOUND,
            ReviewError::Validation(_) | ReviewError::Range(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ReviewError::InvalidTransition { .. } | ReviewError::ClaimConflict { .. } => StatusCode::CONFLICT,
            ReviewError::Store(StoreError::NoDraft(_) | StoreError::ProvenanceOrder { .. }) => StatusCode::CONFLICT,
            ReviewError::Store(StoreError::SplitRestricted { .. }) => StatusCode::FORBIDDEN,
            ReviewError::Store(_) | ReviewError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn details(&self) -> serde_json::Value {
        match self {
            ReviewError::Validation(CaptionError::SentenceCount(found)) => json!({ "found": found, "expected": 4 }),
            ReviewError::Range(RatingError::Range { criterion, value }) => {
                json!({ "criterion": criterion, "value": value })
            }
            ReviewError::ClaimConflict { holder, expires_at, .. } => {
                json!({ "holder": holder, "expires_at": expires_at })
            }
            ReviewError::InvalidTransition { status, action, .. } => {
                json!({ "status": status.as_str(), "action": action })
            }
            _ => serde_json::Value::Null,
        }
    }
}

impl IntoResponse for ReviewError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        let body = json!({ "code": self.code(), "message": self.to_string(), "details": self.details() });
        (status, Json(body)).into_response()
    }
}
