use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use dpm_core::query::StoreError;
use dpm_core::{json, HmmError, IngestError, QueryError, SummaryError};
use serde::Serialize;
use serde_json::{json, Value};

/// Error body `{code, message, detail?}` with its HTTP status.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into(), detail: None }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} {id:?} not found"))
            .with_detail(json!({ "kind": what, "id": id }))
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "validation_error", message)
    }

    pub fn busy() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "training_busy", "a training job is already running")
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, [(header::CONTENT_TYPE, "application/json")], json::to_string(&self)).into_response()
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let err = ApiError::validation(e.to_string());
        match e.row() {
            Some(row) => err.with_detail(json!({ "row": row })),
            None => err,
        }
    }
}

impl From<HmmError> for ApiError {
    fn from(e: HmmError) -> Self {
        ApiError::validation(e.to_string())
    }
}

impl From<SummaryError> for ApiError {
    fn from(e: SummaryError) -> Self {
        ApiError::validation(e.to_string())
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        match &e {
            QueryError::Syntax { offset, expected, found } => {
                ApiError::new(StatusCode::BAD_REQUEST, "query_parse_error", e.to_string())
                    .with_detail(json!({ "offset": offset, "expected": expected, "found": found }))
            }
            _ => match e.offset() {
                Some(offset) => ApiError::new(StatusCode::BAD_REQUEST, "query_parse_error", e.to_string())
                    .with_detail(json!({ "offset": offset })),
                None => ApiError::validation(e.to_string()),
            },
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => ApiError::not_found("cohort", &id),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::internal(e.to_string())
    }
}
