//! HTTP front end for the capture pipeline.
//!
//! | route | body | reply |
//! |---|---|---|
//! | `POST /v1/sessions` | `{"question", "max_attempts"?}` | `{"session_id"}` |
//! | `POST /v1/sessions/{id}/attempts` | multipart `image`, optional `boxes` | `{"report", "response", "state"}` |
//! | `GET /v1/sessions/{id}` | | the session |
//! | `POST /v1/assess` | multipart `image`, `question`, optional `boxes` | `{"report", "response"}` |
//! | `GET /v1/health` | | `{"status": "ok"}` |
//!
//! The optional `boxes` part uses the detector reply schema and replaces the
//! detector for that request. Errors come back as `{"error": ...}`; a failed
//! answer call is a 502 that still carries the report and response.

use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;
use viassist_core::backend::wire::{sanitize_boxes, DetectResponse};
use viassist_core::pipeline::{AttemptOutcome, Pipeline, PipelineError};
use viassist_core::{BoundingBox, ImageBuffer};

/// Uploads larger than this are rejected before decoding.
pub const MAX_UPLOAD_BYTES: usize = 32 * 1024 * 1024;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl std::fmt::Display) -> Self {
        Self {
            status,
            body: json!({ "error": message.to_string() }),
        }
    }

    fn bad_request(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::EmptyQuestion | PipelineError::InvalidMaxAttempts | PipelineError::Image(_) => {
                Self::bad_request(e)
            }
            PipelineError::UnknownSession(_) => Self::new(StatusCode::NOT_FOUND, e),
            PipelineError::SessionClosed { .. } => Self::new(StatusCode::CONFLICT, e),
            PipelineError::BackendUnavailable { error, outcome } => {
                let mut body = attempt_body(&outcome, true);
                body["error"] = json!(format!("answer backend unavailable: {error}"));
                Self {
                    status: StatusCode::BAD_GATEWAY,
                    body,
                }
            }
            PipelineError::Journal(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, e),
        }
    }
}

fn attempt_body(o: &AttemptOutcome, with_state: bool) -> Value {
    let mut body = json!({ "report": o.report, "response": o.response });
    if with_state {
        body["state"] = json!(o.state);
    }
    if !o.warnings.is_empty() {
        body["warnings"] = json!(o.warnings);
    }
    body
}

#[derive(Debug, Deserialize)]
pub struct OpenRequest {
    pub question: String,
    #[serde(default)]
    pub max_attempts: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct OpenReply {
    pub session_id: String,
}

#[derive(Default)]
struct Upload {
    image: Option<ImageBuffer>,
    question: Option<String>,
    boxes: Option<Vec<BoundingBox>>,
}

async fn read_upload(mut mp: Multipart) -> Result<Upload, ApiError> {
    let mut up = Upload::default();
    while let Some(field) = mp.next_field().await.map_err(ApiError::bad_request)? {
        let name = field.name().unwrap_or_default().to_owned();
        match name.as_str() {
            "image" => {
                let bytes = field.bytes().await.map_err(ApiError::bad_request)?;
                up.image = Some(ImageBuffer::decode(&bytes).map_err(ApiError::bad_request)?);
            }
            "question" => up.question = Some(field.text().await.map_err(ApiError::bad_request)?),
            "boxes" => {
                let text = field.text().await.map_err(ApiError::bad_request)?;
                let raw: DetectResponse = serde_json::from_str(&text)
                    .map_err(|e| ApiError::bad_request(format!("boxes: {e}")))?;
                let d = sanitize_boxes(&raw.boxes).map_err(|e| ApiError::bad_request(format!("boxes: {e}")))?;
                up.boxes = Some(d.boxes);
            }
            _ => {}
        }
    }
    Ok(up)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn open_session(
    State(p): State<Arc<Pipeline>>,
    Json(req): Json<OpenRequest>,
) -> Result<(StatusCode, Json<OpenReply>), ApiError> {
    let s = p.open_session(&req.question, req.max_attempts)?;
    tracing::info!(session = %s.id, "opened");
    Ok((StatusCode::CREATED, Json(OpenReply { session_id: s.id })))
}

async fn get_session(State(p): State<Arc<Pipeline>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let s = p
        .session(&id)
        .ok_or_else(|| ApiError::from(PipelineError::UnknownSession(id)))?;
    Ok(Json(json!(s)))
}

async fn submit_attempt(
    State(p): State<Arc<Pipeline>>,
    Path(id): Path<String>,
    mp: Multipart,
) -> Result<Json<Value>, ApiError> {
    let up = read_upload(mp).await?;
    let img = up.image.ok_or_else(|| ApiError::bad_request("missing `image` part"))?;
    let outcome = blocking(move || p.submit_attempt(&id, &img, up.boxes)).await??;
    tracing::info!(mode = %outcome.report.mode, state = %outcome.state, "attempt");
    Ok(Json(attempt_body(&outcome, true)))
}

async fn assess(State(p): State<Arc<Pipeline>>, mp: Multipart) -> Result<Json<Value>, ApiError> {
    let up = read_upload(mp).await?;
    let img = up.image.ok_or_else(|| ApiError::bad_request("missing `image` part"))?;
    let question = up.question.ok_or_else(|| ApiError::bad_request("missing `question` part"))?;
    let outcome = blocking(move || p.assess(&img, &question, up.boxes)).await??;
    Ok(Json(attempt_body(&outcome, false)))
}

pub fn router(pipeline: Arc<Pipeline>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(open_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/attempts", post(submit_attempt))
        .route("/v1/assess", post(assess))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .layer(CorsLayer::permissive())
        .with_state(pipeline)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(pipeline: Arc<Pipeline>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(pipeline)).await
}
