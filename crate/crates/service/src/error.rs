use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] crossover_core::Error),
    #[error("invalid session config: {0}")]
    Config(String),
    #[error("session '{0}' already exists")]
    Duplicate(String),
    #[error("session '{0}' not found")]
    NotFound(String),
    #[error("session '{id}' is {phase}; {action} not allowed")]
    InvalidState { id: String, phase: String, action: &'static str },
    #[error("session '{0}' has no recorded samples")]
    Empty(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ServiceError>;

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            Self::Core(_) | Self::Config(_) | Self::Json(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Self::Duplicate(_) | Self::InvalidState { .. } | Self::Empty(_) => StatusCode::CONFLICT,
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::Bind { .. } | Self::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.status(), Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}
