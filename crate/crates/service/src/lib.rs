//! HTTP front end for [`mmda_core::campaign::CampaignStore`].
//!
//! All mutations go through one mutex-guarded store, which makes assignment
//! and submission linearizable per workdir. Workers authenticate with an
//! opaque bearer token that doubles as their worker id.

use std::net::SocketAddr;
use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use mmda_core::assets::MediaFormat;
use mmda_core::campaign::{
    AnalysisOutcome, CampaignConfig, CampaignError, CampaignState, CampaignStore, JudgmentSubmission, DEFAULT_LEASE_MS,
    PAYLOAD_VERSION,
};
use mmda_core::report::parse_ranking_csv;
use mmda_core::workdir::{read_json, Workdir};

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0))
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<CampaignStore>>,
    clock: Clock,
    static_dir: Option<PathBuf>,
    default_lease_ms: u64,
}

impl AppState {
    pub fn new(store: CampaignStore, clock: Clock) -> Self {
        Self { store: Arc::new(Mutex::new(store)), clock, static_dir: None, default_lease_ms: DEFAULT_LEASE_MS }
    }

    /// Serves a prebuilt annotator bundle under `/ui/`.
    pub fn with_static_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.static_dir = Some(dir.into());
        self
    }

    /// Lease applied to campaigns created without an explicit `lease_ms`.
    pub fn with_default_lease(mut self, lease_ms: u64) -> Self {
        self.default_lease_ms = lease_ms;
        self
    }

    pub fn open(workdir: Workdir, clock: Clock) -> Result<Self, CampaignError> {
        Ok(Self::new(CampaignStore::open(workdir)?, clock))
    }

    fn now(&self) -> u64 {
        (self.clock)()
    }

    /// Runs `f` on the store off the async executor; the store does blocking IO.
    async fn with_store<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&mut CampaignStore, u64) -> Result<T, ApiError> + Send + 'static,
    {
        let store = self.store.clone();
        let now = self.now();
        tokio::task::spawn_blocking(move || {
            let mut guard = store.lock().unwrap_or_else(|p| p.into_inner());
            f(&mut guard, now)
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), detail: Value::Null }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<CampaignError> for ApiError {
    fn from(e: CampaignError) -> Self {
        use CampaignError as E;
        let message = e.to_string();
        let (status, code, detail) = match &e {
            E::NotFound(_) => (StatusCode::NOT_FOUND, "not_found", Value::Null),
            E::UnknownAssignment(_) => (StatusCode::NOT_FOUND, "unknown_assignment", Value::Null),
            E::Conflict(_) => (StatusCode::CONFLICT, "conflict", Value::Null),
            E::InvalidConfig(_) => (StatusCode::BAD_REQUEST, "invalid_config", Value::Null),
            E::MissingHits { missing, .. } => (StatusCode::UNPROCESSABLE_ENTITY, "missing_hits", json!({ "missing": missing })),
            E::MissingAudio { hit_id, item_index } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "missing_audio",
                json!({ "hit_id": hit_id, "item_index": item_index }),
            ),
            E::MissingRaster { hit_id, item_index } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "missing_raster",
                json!({ "hit_id": hit_id, "item_index": item_index }),
            ),
            E::ConditionMismatch { hit_id, .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "condition_mismatch", json!({ "hit_id": hit_id }))
            }
            E::InvalidHit { hit_id, violations } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_hit",
                json!({ "hit_id": hit_id, "violations": violations }),
            ),
            E::InvalidTransition { .. } => (StatusCode::CONFLICT, "invalid_transition", Value::Null),
            E::NotOpen(_) => (StatusCode::CONFLICT, "not_open", Value::Null),
            E::NoHitsAvailable => (StatusCode::NOT_FOUND, "no_hits_available", Value::Null),
            E::WorkerAlreadyActive { assignment_id } => {
                (StatusCode::CONFLICT, "worker_already_active", json!({ "assignment_id": assignment_id }))
            }
            E::OutOfOrder { expected, got } => {
                (StatusCode::CONFLICT, "out_of_order", json!({ "expected": expected, "got": got }))
            }
            E::ScoreOutOfRange(_) => (StatusCode::UNPROCESSABLE_ENTITY, "score_out_of_range", Value::Null),
            E::StaleAssignment(_) => (StatusCode::GONE, "stale_assignment", Value::Null),
            E::CampaignNotClosed(_) => (StatusCode::CONFLICT, "campaign_not_closed", Value::Null),
            E::Analysis(_) | E::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", Value::Null),
        };
        Self { status, code, message, detail }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, "{}", self.message);
        }
        let mut body = json!({ "v": PAYLOAD_VERSION, "error": self.code, "message": self.message });
        if !self.detail.is_null() {
            body["detail"] = self.detail;
        }
        (self.status, Json(body)).into_response()
    }
}

fn worker_token(headers: &HeaderMap) -> Result<String, ApiError> {
    let value = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing bearer worker token"))?;
    Ok(value.to_string())
}

fn check_owner(store: &CampaignStore, assignment_id: &str, worker: &str) -> Result<(), ApiError> {
    let a = store
        .assignment(assignment_id)
        .ok_or_else(|| CampaignError::UnknownAssignment(assignment_id.to_string()))?;
    if a.worker_id != worker {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "forbidden", "assignment belongs to another worker"));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StateResponse {
    pub v: u32,
    pub campaign_id: String,
    pub state: CampaignState,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportResponse {
    pub v: u32,
    pub campaign_id: String,
    pub analysis: AnalysisOutcome,
    pub ranking: Vec<mmda_core::ranking::SystemScorecard>,
}

async fn create_campaign(
    State(app): State<AppState>,
    body: Result<Json<Value>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Json(mut raw) = body?;
    if let Some(obj) = raw.as_object_mut() {
        obj.entry("lease_ms").or_insert(json!(app.default_lease_ms));
    }
    let config: CampaignConfig = serde_json::from_value(raw)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?;
    let snap = app.with_store(move |s, now| Ok(s.create_campaign(config, now)?)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "v": PAYLOAD_VERSION, "campaign_id": snap.config.campaign_id, "state": snap.state, "hit_ids": snap.hit_ids }))))
}

async fn get_campaign(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    app.with_store(move |s, _| {
        let snap = s.campaign(&id).ok_or(CampaignError::NotFound(id.clone()))?;
        let completed = snap.completed_sessions().len();
        Ok(Json(json!({
            "v": PAYLOAD_VERSION,
            "campaign_id": id,
            "condition": snap.config.condition,
            "state": snap.state,
            "hits": snap.hit_ids.len(),
            "assignments": snap.assignments.len(),
            "completed_sessions": completed,
            "reschedule": snap.reschedule,
        })))
    })
    .await
}

async fn open_campaign(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<StateResponse>, ApiError> {
    app.with_store(move |s, now| {
        s.open_campaign(&id, now)?;
        Ok(Json(StateResponse { v: PAYLOAD_VERSION, state: CampaignState::Open, campaign_id: id }))
    })
    .await
}

async fn close_campaign(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<StateResponse>, ApiError> {
    app.with_store(move |s, now| {
        s.close_campaign(&id, now)?;
        Ok(Json(StateResponse { v: PAYLOAD_VERSION, state: CampaignState::Closed, campaign_id: id }))
    })
    .await
}

async fn analyze_campaign(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<AnalysisOutcome>, ApiError> {
    app.with_store(move |s, now| Ok(Json(s.run_analysis(&id, None, now)?))).await
}

async fn report(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<ReportResponse>, ApiError> {
    app.with_store(move |s, _| {
        let snap = s.campaign(&id).ok_or(CampaignError::NotFound(id.clone()))?;
        if snap.state != CampaignState::Analyzed {
            return Err(ApiError::new(StatusCode::CONFLICT, "not_analyzed", format!("campaign is {:?}", snap.state)));
        }
        let dir = s.report_dir(&id);
        let analysis: AnalysisOutcome = read_json(&dir.join("analysis.json")).map_err(|e| ApiError::internal(e.to_string()))?;
        let label = snap.config.condition.as_str();
        let csv = std::fs::read_to_string(dir.join(format!("ranking_{label}.csv"))).map_err(|e| ApiError::internal(e.to_string()))?;
        let ranking = parse_ranking_csv(&csv).map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(Json(ReportResponse { v: PAYLOAD_VERSION, campaign_id: id, analysis, ranking }))
    })
    .await
}

async fn next_hit(State(app): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> Result<Response, ApiError> {
    let worker = worker_token(&headers)?;
    let payload = app.with_store(move |s, now| Ok(s.next_hit(&id, &worker, now)?)).await?;
    Ok(Json(payload).into_response())
}

async fn get_assignment(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let worker = worker_token(&headers)?;
    let payload = app
        .with_store(move |s, _| {
            check_owner(s, &id, &worker)?;
            Ok(s.assignment_payload(&id)?)
        })
        .await?;
    Ok(Json(payload).into_response())
}

async fn submit_judgment(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<JudgmentSubmission>, JsonRejection>,
) -> Result<Response, ApiError> {
    let worker = worker_token(&headers)?;
    let Json(sub) = body?;
    let ack = app
        .with_store(move |s, now| {
            check_owner(s, &id, &worker)?;
            Ok(s.submit_judgment(&id, sub, now)?)
        })
        .await?;
    Ok(Json(ack).into_response())
}

async fn submit_feedback(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let worker = worker_token(&headers)?;
    let Json(req) = body?;
    app.with_store(move |s, now| {
        check_owner(s, &id, &worker)?;
        s.submit_feedback(&id, &req.text, now)?;
        Ok(Json(json!({ "v": PAYLOAD_VERSION, "assignment_id": id, "accepted": true })))
    })
    .await
}

fn media_response(app: &AppState, id: &str, want: &[MediaFormat]) -> Result<Response, ApiError> {
    if id.len() != 64 || !id.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such asset"));
    }
    let assets = app.store.lock().unwrap_or_else(|p| p.into_inner()).assets().clone();
    let (entry, bytes) = assets
        .read(id)
        .map_err(|e| ApiError::internal(e.to_string()))?
        .filter(|(e, _)| want.contains(&e.format))
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such asset"))?;
    let mut resp = bytes.into_response();
    resp.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static(entry.format.content_type()));
    resp.headers_mut().insert(header::CACHE_CONTROL, HeaderValue::from_static("public, max-age=31536000, immutable"));
    Ok(resp)
}

async fn audio_asset(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    tokio::task::spawn_blocking(move || media_response(&app, &id, &[MediaFormat::WavPcm16, MediaFormat::Mp3]))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn raster_asset(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    tokio::task::spawn_blocking(move || media_response(&app, &id, &[MediaFormat::Png]))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn static_content_type(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

async fn static_file(State(app): State<AppState>, path: Option<Path<String>>) -> Result<Response, ApiError> {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such file");
    let root = app.static_dir.clone().ok_or_else(not_found)?;
    let rel = PathBuf::from(path.map(|Path(p)| p).filter(|p| !p.is_empty()).unwrap_or_else(|| "index.html".into()));
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(not_found());
    }
    let full = root.join(&rel);
    let content_type = static_content_type(&full);
    let bytes = tokio::task::spawn_blocking(move || std::fs::read(full))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|_| not_found())?;
    let mut resp = bytes.into_response();
    resp.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type));
    Ok(resp)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/campaigns", post(create_campaign))
        .route("/campaigns/{id}", get(get_campaign))
        .route("/campaigns/{id}/open", post(open_campaign))
        .route("/campaigns/{id}/close", post(close_campaign))
        .route("/campaigns/{id}/analyze", post(analyze_campaign))
        .route("/campaigns/{id}/report", get(report))
        .route("/campaigns/{id}/next-hit", get(next_hit))
        .route("/assignments/{id}", get(get_assignment))
        .route("/assignments/{id}/judgments", post(submit_judgment))
        .route("/assignments/{id}/feedback", post(submit_feedback))
        .route("/assets/{id}", get(audio_asset))
        .route("/rasters/{id}", get(raster_asset))
        .route("/ui", get(static_file))
        .route("/ui/{*path}", get(static_file))
        .with_state(state)
}

/// Binds and serves until ctrl-c.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
