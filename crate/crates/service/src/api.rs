use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::Router;
use dpm_core::ingest::IngestConfig;
use dpm_core::json;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::workspace::{TrainRequest, Workspace};

const MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;

type Shared = Arc<Workspace>;

pub fn router(workspace: Shared) -> Router {
    Router::new()
        .route("/api/datasets", post(upload_dataset))
        .route("/api/models", post(train_model))
        .route("/api/models/{id}", get(get_model))
        .route("/api/models/{id}/feature-matrix", get(feature_matrix))
        .route("/api/models/{id}/waterfall", get(waterfall))
        .route("/api/models/{id}/transitions", get(transitions))
        .route("/api/models/{id}/density", get(density))
        .route("/api/models/{id}/subjects/{sid}", get(subject))
        .route("/api/cohorts", post(create_cohort).get(list_cohorts))
        .route("/api/cohorts/{id}", delete(delete_cohort))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(workspace)
}

fn json_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], json::to_string(value)).into_response()
}

/// Runs workspace work off the async executor; training and first-time
/// decoding are CPU-bound.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::validation(format!("invalid JSON body: {e}")))
}

#[derive(Deserialize)]
struct DatasetUpload {
    csv: String,
    config: IngestConfig,
}

/// Accepts either `multipart/form-data` with `csv` and `config` parts, or a
/// JSON body `{"csv": "...", "config": {...}}`.
async fn upload_dataset(State(ws): State<Shared>, request: Request) -> Result<Response, ApiError> {
    let is_multipart = request
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let upload = if is_multipart {
        let mut multipart = Multipart::from_request(request, &())
            .await
            .map_err(|e| ApiError::validation(e.body_text()))?;
        let mut csv = None;
        let mut config = None;
        while let Some(field) = multipart.next_field().await.map_err(|e| ApiError::validation(e.body_text()))? {
            let name = field.name().unwrap_or_default().to_owned();
            let bytes = field.bytes().await.map_err(|e| ApiError::validation(e.body_text()))?;
            match name.as_str() {
                "csv" => {
                    csv = Some(String::from_utf8(bytes.to_vec()).map_err(|_| ApiError::validation("csv part is not UTF-8"))?)
                }
                "config" => config = Some(parse_body::<IngestConfig>(&bytes)?),
                _ => {}
            }
        }
        match (csv, config) {
            (Some(csv), Some(config)) => DatasetUpload { csv, config },
            _ => return Err(ApiError::validation("multipart upload needs `csv` and `config` parts")),
        }
    } else {
        let body = Bytes::from_request(request, &()).await.map_err(|e| ApiError::validation(e.body_text()))?;
        parse_body(&body)?
    };
    let info = blocking(move || ws.add_dataset(&upload.csv, &upload.config)).await?;
    Ok(json_response(StatusCode::CREATED, &info))
}

async fn train_model(State(ws): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let request: TrainRequest = parse_body(&body)?;
    let response = blocking(move || ws.train(&request)).await?;
    Ok(json_response(StatusCode::CREATED, &response))
}

async fn get_model(State(ws): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let body = ws.model_json(&id)?;
    Ok((StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], body).into_response())
}

#[derive(Deserialize)]
struct VarsParam {
    vars: Option<String>,
}

async fn feature_matrix(
    State(ws): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<VarsParam>,
) -> Result<Response, ApiError> {
    let vars = q
        .vars
        .filter(|v| !v.is_empty())
        .map(|v| v.split(',').map(str::to_owned).collect::<Vec<_>>());
    let fm = blocking(move || ws.feature_matrix(&id, vars)).await?;
    Ok(json_response(StatusCode::OK, &fm))
}

#[derive(Deserialize)]
struct CohortParam {
    cohort_id: Option<String>,
}

async fn waterfall(
    State(ws): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<CohortParam>,
) -> Result<Response, ApiError> {
    let points = blocking(move || ws.waterfall(&id, q.cohort_id.as_deref())).await?;
    Ok(json_response(StatusCode::OK, &points))
}

async fn transitions(
    State(ws): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<CohortParam>,
) -> Result<Response, ApiError> {
    let summary = blocking(move || ws.transitions(&id, q.cohort_id.as_deref())).await?;
    Ok(json_response(StatusCode::OK, &summary))
}

#[derive(Deserialize)]
struct DensityParams {
    outcome: Option<String>,
    cohort_id: Option<String>,
    grid_points: Option<usize>,
}

async fn density(
    State(ws): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<DensityParams>,
) -> Result<Response, ApiError> {
    let outcome = q.outcome.ok_or_else(|| ApiError::validation("missing `outcome` query parameter"))?;
    let est = blocking(move || ws.density(&id, &outcome, q.cohort_id.as_deref(), q.grid_points)).await?;
    Ok(json_response(StatusCode::OK, &est))
}

async fn subject(State(ws): State<Shared>, Path((id, sid)): Path<(String, String)>) -> Result<Response, ApiError> {
    let view = blocking(move || ws.subject(&id, &sid)).await?;
    Ok(json_response(StatusCode::OK, &view))
}

#[derive(Deserialize)]
struct CohortRequest {
    model_id: String,
    name: String,
    query: String,
}

async fn create_cohort(State(ws): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let req: CohortRequest = parse_body(&body)?;
    let cohort = blocking(move || ws.create_cohort(&req.model_id, &req.name, &req.query)).await?;
    Ok(json_response(StatusCode::CREATED, &cohort))
}

async fn list_cohorts(State(ws): State<Shared>) -> Result<Response, ApiError> {
    let cohorts = blocking(move || ws.list_cohorts()).await?;
    Ok(json_response(StatusCode::OK, &cohorts))
}

async fn delete_cohort(State(ws): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    blocking(move || ws.delete_cohort(&id)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}
