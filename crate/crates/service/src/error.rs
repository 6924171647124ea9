use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

/// Error body: `{code, message, path}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                path: None,
            },
        }
    }

    pub fn at(mut self, path: impl Into<String>) -> Self {
        self.body.path = Some(path.into());
        self
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no {what} `{id}`"))
    }

    pub fn gone(id: &str) -> Self {
        ApiError::new(StatusCode::GONE, "gone", format!("field `{id}` was deleted"))
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
    }

    pub fn conflict(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::CONFLICT, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<gma_core::Error> for ApiError {
    fn from(e: gma_core::Error) -> Self {
        let path = e.path();
        let mut err = if e.is_validation() || matches!(e, gma_core::Error::UnknownPair(..)) {
            ApiError::invalid(e.to_string())
        } else if matches!(e, gma_core::Error::Unassessed(_) | gma_core::Error::Assembly { .. }) {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "stage_failed", e.to_string())
        } else {
            ApiError::internal(e.to_string())
        };
        err.body.path = path;
        err
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
