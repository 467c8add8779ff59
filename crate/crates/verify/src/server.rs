//! HTTP routes.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use forge_core::dataset::ReviewBatch;
use forge_core::InstructionType;
use serde::{Deserialize, Serialize};

use crate::log::{Fault, LogError, Verdict, VerdictLog};
use crate::report::{agreement_report, ReportFilter};

pub const ANNOTATOR_HEADER: &str = "x-annotator";

pub struct ServiceState {
    batch: Option<ReviewBatch>,
    log: Mutex<VerdictLog>,
    crashed: AtomicBool,
}

impl ServiceState {
    pub fn new(batch: Option<ReviewBatch>, log: VerdictLog) -> Self {
        ServiceState { batch, log: Mutex::new(log), crashed: AtomicBool::new(false) }
    }

    pub fn batch(&self) -> Option<&ReviewBatch> {
        self.batch.as_ref()
    }

    /// Arms a crash on the `nth` verdict append from now.
    pub fn inject_fault(&self, nth: usize, fault: Fault) {
        self.log.lock().unwrap().inject_fault(nth, fault);
    }

    /// Whether an injected crash has fired; the service then refuses all requests.
    pub fn is_crashed(&self) -> bool {
        self.crashed.load(Ordering::SeqCst)
    }

    pub fn verdicts(&self) -> Vec<Verdict> {
        self.log.lock().unwrap().verdicts().to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub index: usize,
    pub episode_id: String,
    pub instruction_type: InstructionType,
    pub original_instruction: String,
    pub transcript: String,
    pub audio_url: String,
    pub calibration: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchInfo {
    pub loaded: bool,
    pub items: usize,
    pub calibration_items: usize,
    pub seed: Option<u64>,
    pub stratified: Option<bool>,
    pub verdicts: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub detail: String,
}

fn error(status: StatusCode, code: &str, detail: impl Into<String>) -> Response {
    (status, Json(ApiError { code: code.into(), detail: detail.into() })).into_response()
}

fn crashed() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, "CRASHED", "service is down")
}

fn no_batch() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, "NO_BATCH_LOADED", "no review batch loaded")
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    annotator: Option<String>,
}

async fn next_item(State(s): State<Arc<ServiceState>>, Query(q): Query<NextQuery>, headers: HeaderMap) -> Response {
    if s.is_crashed() {
        return crashed();
    }
    let annotator = q
        .annotator
        .or_else(|| headers.get(ANNOTATOR_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string))
        .filter(|a| !a.trim().is_empty());
    let Some(annotator) = annotator else {
        return error(StatusCode::BAD_REQUEST, "MISSING_ANNOTATOR", "pass ?annotator= or the x-annotator header");
    };
    let Some(batch) = s.batch() else { return no_batch() };
    let log = s.log.lock().unwrap();
    let next = batch.items.iter().enumerate().find(|(_, i)| !log.has_judged(&i.episode_id, &annotator));
    match next {
        None => StatusCode::NO_CONTENT.into_response(),
        Some((index, item)) => Json(ReviewItem {
            index,
            episode_id: item.episode_id.clone(),
            instruction_type: item.instruction_type,
            original_instruction: item.original_instruction.clone(),
            transcript: item.transcript.clone(),
            audio_url: format!("/api/episodes/{}/audio", item.episode_id),
            calibration: item.calibration,
        })
        .into_response(),
    }
}

async fn audio(State(s): State<Arc<ServiceState>>, Path(id): Path<String>) -> Response {
    if s.is_crashed() {
        return crashed();
    }
    let Some(batch) = s.batch() else { return no_batch() };
    let Some(item) = batch.item(&id) else {
        return error(StatusCode::NOT_FOUND, "UNKNOWN_EPISODE", id);
    };
    let path = PathBuf::from(&batch.root).join(&item.audio_ref);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "audio/wav")], Body::from(bytes)).into_response(),
        Err(e) => error(StatusCode::NOT_FOUND, "AUDIO_MISSING", format!("{}: {e}", path.display())),
    }
}

async fn submit(State(s): State<Arc<ServiceState>>, Json(v): Json<Verdict>) -> Response {
    if s.is_crashed() {
        return crashed();
    }
    let Some(batch) = s.batch() else { return no_batch() };
    if v.annotator_id.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "MISSING_ANNOTATOR", "annotator_id is empty");
    }
    if batch.item(&v.episode_id).is_none() {
        return error(StatusCode::NOT_FOUND, "UNKNOWN_EPISODE", v.episode_id);
    }
    let result = s.log.lock().unwrap().append(v);
    match result {
        Ok(stored) => (StatusCode::CREATED, Json(stored)).into_response(),
        Err(LogError::Crashed) => {
            s.crashed.store(true, Ordering::SeqCst);
            crashed()
        }
        Err(e @ LogError::Duplicate { .. }) => error(StatusCode::CONFLICT, e.code(), e.to_string()),
        Err(e @ LogError::NonMonotone { .. }) => error(StatusCode::BAD_REQUEST, e.code(), e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.code(), e.to_string()),
    }
}

async fn report(State(s): State<Arc<ServiceState>>, Query(filter): Query<ReportFilter>) -> Response {
    if s.is_crashed() {
        return crashed();
    }
    let verdicts = s.verdicts();
    match agreement_report(&verdicts, s.batch(), &filter) {
        Some(r) => Json(r).into_response(),
        None => error(StatusCode::NOT_FOUND, "NO_VERDICTS", "no verdicts match"),
    }
}

async fn batch_info(State(s): State<Arc<ServiceState>>) -> Response {
    if s.is_crashed() {
        return crashed();
    }
    let verdicts = s.log.lock().unwrap().len();
    let b = s.batch();
    Json(BatchInfo {
        loaded: b.is_some(),
        items: b.map_or(0, |b| b.items.len()),
        calibration_items: b.map_or(0, |b| b.items.iter().filter(|i| i.calibration).count()),
        seed: b.map(|b| b.seed),
        stratified: b.map(|b| b.stratified),
        verdicts,
    })
    .into_response()
}

/// API routes, plus the review console bundle at `/` when `static_dir` is set.
pub fn router(state: Arc<ServiceState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/review/next", get(next_item))
        .route("/api/episodes/{id}/audio", get(audio))
        .route("/api/verdicts", post(submit))
        .route("/api/report", get(report))
        .route("/api/batch", get(batch_info))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<ServiceState>, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    axum::serve(listener, router(state, static_dir)).await
}
