use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use lorlut_core::LutError;

/// An error response: status code plus a JSON `{"error": message}` body.
#[derive(Debug, Clone, PartialEq, Eq)]
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

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    pub fn not_found() -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown or expired session")
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl From<LutError> for ApiError {
    fn from(e: LutError) -> Self {
        match e {
            LutError::DimensionMismatch { .. }
            | LutError::GridTooSmall(_)
            | LutError::InvalidConfig(_)
            | LutError::NonFiniteLoss { .. } => {
                Self::unprocessable(e.to_string())
            }
            _ => Self::internal(e),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}
