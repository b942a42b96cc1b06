use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use esgmap_core::Error as CoreError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    pub fn not_found(what: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{what} not found"))
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "missing or invalid bearer token")
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match &e {
            CoreError::UnknownCandidate(_) => StatusCode::NOT_FOUND,
            CoreError::DuplicateVote { .. }
            | CoreError::CandidateFinalized(_)
            | CoreError::PendingCandidates(_)
            | CoreError::DuplicateId(_) => StatusCode::CONFLICT,
            CoreError::NoDocuments
            | CoreError::EmptySelection
            | CoreError::EmptyText
            | CoreError::InvalidArgument(_)
            | CoreError::InvalidNaceCode(_)
            | CoreError::Validation(_)
            | CoreError::Template { .. }
            | CoreError::Parse { .. }
            | CoreError::ZeroVector(_)
            | CoreError::EmbedderMismatch { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            CoreError::Transport(_) | CoreError::Embedding { .. } | CoreError::Unparseable { .. } => {
                StatusCode::BAD_GATEWAY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}
