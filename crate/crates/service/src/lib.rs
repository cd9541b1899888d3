//! JSON-over-HTTP front end for a single live pipeline session.
//!
//! | route | |
//! |---|---|
//! | `POST /api/session` | start a session: `{config, corpus, embeddings, report?}` (paths on the server) |
//! | `GET /api/state` | [`SessionState`] snapshot |
//! | `GET /api/queue?limit=N` | open [`AnnotationRequest`]s, oldest first |
//! | `POST /api/labels` | `{request_id, label}`, returns an [`Ack`] |
//! | `GET /api/classes` | class names known so far |
//! | `GET /api/report` | the finished report |
//!
//! Unknown ids give 404, a busy service or a conflicting replay 409, and an
//! exhausted budget 402.

mod session;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mnid::ingest::{load_corpus, load_embeddings};
use mnid::{PipelineReport, RunConfig};
use serde::{Deserialize, Serialize};

pub use session::{Ack, AnnotationRequest, BudgetView, Session, SessionState, SubmitError};

#[derive(Debug, Clone, Deserialize)]
pub struct StartRequest {
    #[serde(default)]
    pub config: RunConfig,
    pub corpus: PathBuf,
    pub embeddings: PathBuf,
    /// Where to write the report when the run finishes.
    #[serde(default)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Started {
    pub session_id: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LabelSubmission {
    pub request_id: String,
    pub label: String,
}

#[derive(Debug, Deserialize)]
struct QueueParams {
    limit: Option<usize>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn no_session() -> Self {
        Self::new(StatusCode::NOT_FOUND, "no session")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        let status = match e {
            SubmitError::UnknownRequest(_) => StatusCode::NOT_FOUND,
            SubmitError::DuplicateSubmission(_) => StatusCode::CONFLICT,
            SubmitError::BudgetExhausted => StatusCode::PAYMENT_REQUIRED,
            SubmitError::InvalidLabel(_) => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.to_string())
    }
}

#[derive(Default)]
struct Slot {
    session: Option<Session>,
    started: u64,
}

#[derive(Clone, Default)]
pub struct AppState {
    slot: Arc<Mutex<Slot>>,
}

impl AppState {
    fn current(&self) -> Result<Session, ApiError> {
        self.slot
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .session
            .clone()
            .ok_or_else(ApiError::no_session)
    }
}

pub fn router() -> Router {
    Router::new()
        .route("/api/session", post(start_session))
        .route("/api/state", get(state))
        .route("/api/queue", get(queue))
        .route("/api/labels", post(submit_label))
        .route("/api/classes", get(classes))
        .route("/api/report", get(report))
        .with_state(AppState::default())
}

pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router()).await
}

async fn start_session(
    State(app): State<AppState>,
    Json(req): Json<StartRequest>,
) -> Result<(StatusCode, Json<Started>), ApiError> {
    let mut slot = app.slot.lock().unwrap_or_else(|e| e.into_inner());
    if slot.session.as_ref().is_some_and(|s| !s.is_done()) {
        return Err(ApiError::new(StatusCode::CONFLICT, "a session is already running"));
    }
    req.config
        .validate()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let bad = |e: mnid::ingest::IngestError| ApiError::new(StatusCode::BAD_REQUEST, e.to_string());
    let corpus = load_corpus(&req.corpus).map_err(bad)?;
    let x = load_embeddings::<f64>(&req.embeddings, &corpus, false).map_err(bad)?;
    slot.started += 1;
    let id = format!("s{}", slot.started);
    slot.session = Some(Session::start(id.clone(), req.config, corpus, x, req.report));
    Ok((StatusCode::CREATED, Json(Started { session_id: id })))
}

async fn state(State(app): State<AppState>) -> Result<Json<SessionState>, ApiError> {
    Ok(Json(app.current()?.state()))
}

async fn queue(
    State(app): State<AppState>,
    Query(params): Query<QueueParams>,
) -> Result<Json<Vec<AnnotationRequest>>, ApiError> {
    Ok(Json(app.current()?.queue(params.limit)))
}

async fn submit_label(
    State(app): State<AppState>,
    Json(sub): Json<LabelSubmission>,
) -> Result<Json<Ack>, ApiError> {
    Ok(Json(app.current()?.submit(&sub.request_id, &sub.label)?))
}

async fn classes(State(app): State<AppState>) -> Result<Json<Vec<String>>, ApiError> {
    Ok(Json(app.current()?.classes()))
}

async fn report(State(app): State<AppState>) -> Result<Json<PipelineReport>, ApiError> {
    let session = app.current()?;
    match (session.report(), session.error()) {
        (Some(r), _) => Ok(Json(r)),
        (None, Some(e)) => Err(ApiError::new(StatusCode::CONFLICT, format!("run failed: {e}"))),
        (None, None) => Err(ApiError::new(StatusCode::CONFLICT, "session still running")),
    }
}
