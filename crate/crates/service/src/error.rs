use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

/// An HTTP error with a JSON body `{"error": message}`.
#[derive(Debug, thiserror::Error)]
#[error("{status}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn not_found(what: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{what} not found"))
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl From<imis_core::Error> for ApiError {
    fn from(e: imis_core::Error) -> Self {
        use imis_core::proposer::SegmenterError;
        use imis_core::Error as E;
        let status = match &e {
            E::Segmenter(SegmenterError::Unsupported(_)) => StatusCode::NOT_IMPLEMENTED,
            E::Segmenter(SegmenterError::Failed(_)) => StatusCode::BAD_GATEWAY,
            E::OutOfRange(_) | E::DimensionMismatch { .. } | E::Csr(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            E::InvalidImage(_) | E::InvalidArgument(_) | E::EmptyMask => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}
