//! JSON-over-HTTP service for the workbench UI.
//!
//! Each session has a writer lock: mutations run one at a time against a copy
//! of the last committed snapshot, and the copy replaces the snapshot only when
//! the action succeeds. Readers always see a committed snapshot.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use super::actions;
use super::views::{self, ConceptDetail, MatrixView, SliceDetail};
use crate::error::Error;
use crate::gateway::{usage_report, Gateway, Tier, UsageReport};
use crate::ingest::{ingest_path, ingest_reader, Format, IngestOptions, RejectedRow};
use crate::model::{save_session_file, validate_session, load_session_file, Concept, MetaKind, Session, SessionConfig, Slice, TraceEvent, Violation};
use crate::pipeline::{run_iterations, InductionResult, Progress};
use crate::scoring::{self, Normalization};

/// Committed description of the HTTP API.
pub const OPENAPI: &str = include_str!("../../openapi.json");

/// Every route as (method, path), matching the API description.
pub const ROUTES: &[(&str, &str)] = &[
    ("get", "/api/health"),
    ("get", "/api/openapi.json"),
    ("get", "/api/sessions"),
    ("post", "/api/sessions"),
    ("get", "/api/sessions/{session_id}"),
    ("get", "/api/sessions/{session_id}/download"),
    ("get", "/api/sessions/{session_id}/validate"),
    ("get", "/api/sessions/{session_id}/usage"),
    ("post", "/api/sessions/{session_id}/induce"),
    ("get", "/api/jobs/{job_id}"),
    ("get", "/api/sessions/{session_id}/matrix"),
    ("post", "/api/sessions/{session_id}/concepts"),
    ("get", "/api/sessions/{session_id}/concepts/{concept_id}"),
    ("patch", "/api/sessions/{session_id}/concepts/{concept_id}"),
    ("post", "/api/sessions/{session_id}/concepts/{concept_id}/split"),
    ("post", "/api/sessions/{session_id}/merge"),
    ("post", "/api/sessions/{session_id}/slices"),
    ("get", "/api/sessions/{session_id}/slices/{slice_name}"),
    ("put", "/api/sessions/{session_id}/threshold"),
];

/// Builds the gateway used for a session's configuration.
pub type GatewayFactory = Arc<dyn Fn(&SessionConfig) -> Result<Arc<Gateway>, String> + Send + Sync>;

#[derive(Debug, Clone, Default)]
pub struct ServiceOptions {
    /// Sessions are persisted here after every committed change.
    pub session_dir: Option<PathBuf>,
    /// Static UI bundle served at `/`.
    pub ui_dir: Option<PathBuf>,
    pub base_config: SessionConfig,
    /// Allows `debug=true` view payloads, which include raw prompts.
    pub allow_debug: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub session_id: String,
    pub state: JobState,
    pub stage: String,
    pub done: usize,
    pub total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<InductionResult>,
}

struct SessionSlot {
    snapshot: RwLock<Arc<Session>>,
    writer: tokio::sync::Mutex<()>,
    job: Mutex<Option<String>>,
}

impl SessionSlot {
    fn new(s: Session) -> Self {
        SessionSlot { snapshot: RwLock::new(Arc::new(s)), writer: tokio::sync::Mutex::new(()), job: Mutex::new(None) }
    }

    fn get(&self) -> Arc<Session> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn set(&self, s: Session) {
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(s);
    }
}

pub struct AppState {
    sessions: RwLock<IndexMap<String, Arc<SessionSlot>>>,
    jobs: Mutex<HashMap<String, JobStatus>>,
    gateways: GatewayFactory,
    options: ServiceOptions,
}

impl AppState {
    /// Loads any sessions already in `options.session_dir`.
    pub fn new(gateways: GatewayFactory, options: ServiceOptions) -> Result<Arc<Self>, Error> {
        let mut sessions = IndexMap::new();
        if let Some(dir) = &options.session_dir {
            std::fs::create_dir_all(dir)?;
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            for p in paths {
                let s = load_session_file(&p)?;
                sessions.insert(s.id.clone(), Arc::new(SessionSlot::new(s)));
            }
        }
        Ok(Arc::new(AppState { sessions: RwLock::new(sessions), jobs: Mutex::new(HashMap::new()), gateways, options }))
    }

    /// Registers an existing session.
    pub fn insert(&self, session: Session) -> Result<(), Error> {
        self.persist(&session)?;
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(session.id.clone(), Arc::new(SessionSlot::new(session)));
        Ok(())
    }

    /// Latest committed snapshot of a session.
    pub fn snapshot(&self, id: &str) -> Option<Arc<Session>> {
        self.slot(id).ok().map(|s| s.get())
    }

    pub fn job(&self, id: &str) -> Option<JobStatus> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown-session", format!("no session {id}")))
    }

    fn persist(&self, s: &Session) -> Result<(), Error> {
        if let Some(dir) = &self.options.session_dir {
            save_session_file(s, &dir.join(format!("{}.json", s.id)))?;
        }
        Ok(())
    }

    fn update_job(&self, id: &str, f: impl FnOnce(&mut JobStatus)) {
        if let Some(j) = self.jobs.lock().unwrap_or_else(|e| e.into_inner()).get_mut(id) {
            f(j);
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    detail: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, detail: impl Into<String>) -> Self {
        ApiError { status, code: code.to_string(), detail: detail.into() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::Invalid(_) => (StatusCode::BAD_REQUEST, "invalid"),
            Error::Predicate(_) => (StatusCode::BAD_REQUEST, "predicate"),
            Error::Ingest(_) => (StatusCode::BAD_REQUEST, "ingest"),
            Error::UnknownConcept(_) => (StatusCode::NOT_FOUND, "unknown-concept"),
            Error::ConceptInactive(_) => (StatusCode::CONFLICT, "concept-inactive"),
            Error::Gateway(_) => (StatusCode::BAD_GATEWAY, "gateway"),
            Error::Pipeline(_) | Error::Clustering(_) => (StatusCode::UNPROCESSABLE_ENTITY, "pipeline"),
            Error::Session(_) | Error::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "detail": self.detail}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn gateway_for(state: &AppState, config: &SessionConfig) -> ApiResult<Arc<Gateway>> {
    (state.gateways)(config).map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, "gateway-config", e))
}

/// Runs `f` on a copy of the session under its writer lock; commits on success.
async fn mutate<T, F>(state: &Arc<AppState>, sid: &str, needs_gateway: bool, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Session, Option<&Gateway>) -> Result<T, Error> + Send + 'static,
{
    let slot = state.slot(sid)?;
    let _writer = slot.writer.lock().await;
    let mut session = (*slot.get()).clone();
    let gw = if needs_gateway { Some(gateway_for(state, &session.config)?) } else { None };
    let (session, out) = tokio::task::spawn_blocking(move || {
        let out = f(&mut session, gw.as_deref());
        (session, out)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    let out = out?;
    state.persist(&session)?;
    slot.set(session);
    Ok(out)
}

pub fn router(state: Arc<AppState>) -> Router {
    let mut r = Router::new()
        .route("/api/health", get(health))
        .route("/api/openapi.json", get(openapi))
        .route("/api/sessions", get(list_sessions).post(create_session))
        .route("/api/sessions/{session_id}", get(session_summary))
        .route("/api/sessions/{session_id}/download", get(download))
        .route("/api/sessions/{session_id}/validate", get(validate))
        .route("/api/sessions/{session_id}/usage", get(usage))
        .route("/api/sessions/{session_id}/induce", post(start_induction))
        .route("/api/jobs/{job_id}", get(job_status))
        .route("/api/sessions/{session_id}/matrix", get(matrix))
        .route("/api/sessions/{session_id}/concepts", post(add_concept))
        .route("/api/sessions/{session_id}/concepts/{concept_id}", get(concept_detail).patch(edit_concept))
        .route("/api/sessions/{session_id}/concepts/{concept_id}/split", post(split_concept))
        .route("/api/sessions/{session_id}/merge", post(merge_concepts))
        .route("/api/sessions/{session_id}/slices", post(define_slice))
        .route("/api/sessions/{session_id}/slices/{slice_name}", get(slice_detail))
        .route("/api/sessions/{session_id}/threshold", put(set_threshold));
    if let Some(dir) = &state.options.ui_dir {
        r = r.fallback_service(ServeDir::new(dir));
    }
    r.with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    let n = state.sessions.read().unwrap_or_else(|e| e.into_inner()).len();
    Json(json!({"status": "ok", "sessions": n}))
}

async fn openapi() -> Response {
    ([(axum::http::header::CONTENT_TYPE, "application/json")], OPENAPI).into_response()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub n_docs: usize,
    pub n_concepts: usize,
    pub n_active_concepts: usize,
    pub threshold: f64,
    pub slices: Vec<Slice>,
    pub columns: IndexMap<String, MetaKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job_id: Option<String>,
}

fn summary(s: &Session, job: Option<String>) -> SessionSummary {
    SessionSummary {
        session_id: s.id.clone(),
        n_docs: s.documents.len(),
        n_concepts: s.concepts.len(),
        n_active_concepts: s.active_concepts().count(),
        threshold: s.config.score_threshold,
        slices: s.slices.clone(),
        columns: crate::slices::column_kinds(s),
        job_id: job,
    }
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Vec<SessionSummary>> {
    let slots: Vec<Arc<SessionSlot>> = state.sessions.read().unwrap_or_else(|e| e.into_inner()).values().cloned().collect();
    Json(slots.iter().map(|s| summary(&s.get(), s.job.lock().unwrap_or_else(|e| e.into_inner()).clone())).collect())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CreateSessionRequest {
    /// Dataset file readable by the server.
    pub path: Option<String>,
    /// Inline dataset, used when `path` is absent.
    pub content: Option<String>,
    pub format: Option<Format>,
    pub text_col: String,
    pub id_col: Option<String>,
    /// Overrides on top of the service's base config.
    pub config: Option<Value>,
    pub session_id: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
    pub accepted: usize,
    pub rejected: Vec<RejectedRow>,
    pub columns: IndexMap<String, MetaKind>,
}

/// Applies a JSON object of overrides onto `base`.
pub fn merge_config(base: &SessionConfig, overrides: &Value) -> Result<SessionConfig, Error> {
    let mut v = serde_json::to_value(base).expect("config serializes");
    fn merge(a: &mut Value, b: &Value) {
        match (a, b) {
            (Value::Object(a), Value::Object(b)) => {
                for (k, bv) in b {
                    merge(a.entry(k.clone()).or_insert(Value::Null), bv);
                }
            }
            (a, b) => *a = b.clone(),
        }
    }
    merge(&mut v, overrides);
    let c: SessionConfig = serde_path_to_error::deserialize(v).map_err(|e| Error::Invalid(format!("config: {e}")))?;
    let problems = c.problems();
    if !problems.is_empty() {
        return Err(Error::Invalid(format!("config: {}", problems.join("; "))));
    }
    Ok(c)
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateSessionRequest>,
) -> ApiResult<(StatusCode, Json<CreateSessionResponse>)> {
    if req.text_col.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid", "text_col is required"));
    }
    let mut opts = IngestOptions::new(req.text_col.clone());
    opts.id_col = req.id_col.clone();
    let report = match (&req.path, &req.content) {
        (Some(p), _) => {
            let path = std::path::Path::new(p);
            match req.format {
                Some(f) => ingest_reader(std::fs::File::open(path).map_err(Error::from)?, f, &opts),
                None => ingest_path(path, &opts),
            }
        }
        (None, Some(c)) => ingest_reader(c.as_bytes(), req.format.unwrap_or(Format::Csv), &opts),
        (None, None) => return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid", "either path or content is required")),
    }
    .map_err(Error::from)?;
    let config = match &req.config {
        Some(o) => merge_config(&state.options.base_config, o)?,
        None => state.options.base_config.clone(),
    };
    let id = req.session_id.clone().unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
    if state.slot(&id).is_ok() {
        return Err(ApiError::new(StatusCode::CONFLICT, "session-exists", format!("session {id} already exists")));
    }
    let resp = CreateSessionResponse {
        session_id: id.clone(),
        accepted: report.accepted,
        rejected: report.rejected.clone(),
        columns: report.columns.clone(),
    };
    state.insert(Session::new(id, report.documents, config))?;
    Ok((StatusCode::CREATED, Json(resp)))
}

async fn session_summary(State(state): State<Arc<AppState>>, Path(sid): Path<String>) -> ApiResult<Json<SessionSummary>> {
    let slot = state.slot(&sid)?;
    let job = slot.job.lock().unwrap_or_else(|e| e.into_inner()).clone();
    Ok(Json(summary(&slot.get(), job)))
}

async fn download(State(state): State<Arc<AppState>>, Path(sid): Path<String>) -> ApiResult<Json<Session>> {
    Ok(Json((*state.slot(&sid)?.get()).clone()))
}

async fn validate(State(state): State<Arc<AppState>>, Path(sid): Path<String>) -> ApiResult<Json<Vec<Violation>>> {
    Ok(Json(validate_session(&state.slot(&sid)?.get())))
}

async fn usage(State(state): State<Arc<AppState>>, Path(sid): Path<String>) -> ApiResult<Json<UsageReport>> {
    Ok(Json(usage_report(&state.slot(&sid)?.get().usage)))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct InduceRequest {
    pub n_loops: Option<u32>,
    pub seed_term: Option<String>,
    pub rng_seed: Option<u64>,
}

async fn start_induction(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
    body: Option<Json<InduceRequest>>,
) -> ApiResult<(StatusCode, Json<JobStatus>)> {
    let req = body.map(|b| b.0).unwrap_or_default();
    let slot = state.slot(&sid)?;
    let job_id = {
        let mut current = slot.job.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(j) = current.as_ref().and_then(|j| state.job(j)) {
            if matches!(j.state, JobState::Queued | JobState::Running) {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "job-running",
                    format!("induction job {} is already {:?} on this session", j.job_id, j.state),
                ));
            }
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        *current = Some(id.clone());
        id
    };
    let status = JobStatus {
        job_id: job_id.clone(),
        session_id: sid.clone(),
        state: JobState::Queued,
        stage: "queued".into(),
        done: 0,
        total: 0,
        error: None,
        result: None,
    };
    state.jobs.lock().unwrap_or_else(|e| e.into_inner()).insert(job_id.clone(), status.clone());
    let st = state.clone();
    tokio::spawn(async move {
        let outcome = run_job(&st, &slot, &job_id, req).await;
        st.update_job(&job_id, |j| match outcome {
            Ok(result) => {
                j.state = JobState::Done;
                j.stage = "done".into();
                j.result = Some(result);
            }
            Err(e) => {
                j.state = JobState::Failed;
                j.error = Some(e);
            }
        });
    });
    Ok((StatusCode::ACCEPTED, Json(status)))
}

async fn run_job(state: &Arc<AppState>, slot: &Arc<SessionSlot>, job_id: &str, req: InduceRequest) -> Result<InductionResult, String> {
    let _writer = slot.writer.lock().await;
    state.update_job(job_id, |j| {
        j.state = JobState::Running;
        j.stage = "starting".into();
    });
    let mut session = (*slot.get()).clone();
    if let Some(seed) = &req.seed_term {
        session.config.seed_term = Some(seed.clone()).filter(|s| !s.trim().is_empty());
    }
    if let Some(r) = req.rng_seed {
        session.config.rng_seed = r;
    }
    let n_loops = req.n_loops.unwrap_or(session.config.n_loops);
    let gw = (state.gateways)(&session.config).map_err(|e| format!("gateway configuration: {e}"))?;
    gw.check_tiers(&[Tier::Distill, Tier::Synthesize, Tier::Score, Tier::Embed]).map_err(|e| e.to_string())?;
    let st = state.clone();
    let jid = job_id.to_string();
    let (session, result) = tokio::task::spawn_blocking(move || {
        let progress = |p: &Progress| {
            st.update_job(&jid, |j| {
                j.stage = p.stage.clone();
                j.done = p.done;
                j.total = p.total;
            })
        };
        session.record(TraceEvent::note("induction-started", format!("n_loops {n_loops}")));
        let r = run_iterations(&mut session, &gw, n_loops, Some(&progress));
        (session, r)
    })
    .await
    .map_err(|e| e.to_string())?;
    let result = result.map_err(|e| e.to_string())?;
    state.persist(&session).map_err(|e| e.to_string())?;
    slot.set(session);
    Ok(result)
}

async fn job_status(State(state): State<Arc<AppState>>, Path(job_id): Path<String>) -> ApiResult<Json<JobStatus>> {
    state
        .job(&job_id)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown-job", format!("no job {job_id}")))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct ViewQuery {
    pub normalization: Option<Normalization>,
    pub debug: bool,
}

async fn matrix(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
    Query(q): Query<ViewQuery>,
) -> ApiResult<Json<MatrixView>> {
    Ok(Json(views::matrix_view(&state.slot(&sid)?.get(), q.normalization.unwrap_or_default())))
}

async fn concept_detail(
    State(state): State<Arc<AppState>>,
    Path((sid, cid)): Path<(String, String)>,
    Query(q): Query<ViewQuery>,
) -> ApiResult<Json<ConceptDetail>> {
    if q.debug && !state.options.allow_debug {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "debug-disabled", "debug payloads are disabled on this server"));
    }
    Ok(Json(views::concept_detail(&state.slot(&sid)?.get(), &cid, q.normalization.unwrap_or_default(), q.debug)?))
}

async fn slice_detail(
    State(state): State<Arc<AppState>>,
    Path((sid, name)): Path<(String, String)>,
    Query(q): Query<ViewQuery>,
) -> ApiResult<Json<SliceDetail>> {
    Ok(Json(views::slice_detail(&state.slot(&sid)?.get(), &name, q.normalization.unwrap_or_default())?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AddConceptRequest {
    pub name: String,
    pub criteria: String,
}

async fn add_concept(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
    Json(req): Json<AddConceptRequest>,
) -> ApiResult<(StatusCode, Json<Concept>)> {
    let c = mutate(&state, &sid, true, move |s, gw| {
        let id = actions::add_concept(s, gw.expect("gateway"), &req.name, &req.criteria)?;
        Ok(s.concept(&id).cloned().expect("just added"))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(c)))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EditConceptRequest {
    pub name: Option<String>,
    pub criteria: Option<String>,
}

async fn edit_concept(
    State(state): State<Arc<AppState>>,
    Path((sid, cid)): Path<(String, String)>,
    Json(req): Json<EditConceptRequest>,
) -> ApiResult<Json<Concept>> {
    let needs_gateway = req.criteria.is_some();
    mutate(&state, &sid, needs_gateway, move |s, gw| {
        actions::edit_concept(s, gw, &cid, req.name.as_deref(), req.criteria.as_deref())
    })
    .await
    .map(Json)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergeRequest {
    pub concept_ids: Vec<String>,
}

async fn merge_concepts(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
    Json(req): Json<MergeRequest>,
) -> ApiResult<(StatusCode, Json<Concept>)> {
    let c = mutate(&state, &sid, true, move |s, gw| actions::merge_concepts(s, gw.expect("gateway"), &req.concept_ids)).await?;
    Ok((StatusCode::CREATED, Json(c)))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitRequest {
    pub n_concepts: Option<usize>,
}

async fn split_concept(
    State(state): State<Arc<AppState>>,
    Path((sid, cid)): Path<(String, String)>,
    body: Option<Json<SplitRequest>>,
) -> ApiResult<(StatusCode, Json<Vec<Concept>>)> {
    let n = body.and_then(|b| b.0.n_concepts).unwrap_or(2);
    let cs = mutate(&state, &sid, true, move |s, gw| actions::split_concept(s, gw.expect("gateway"), &cid, n)).await?;
    Ok((StatusCode::CREATED, Json(cs)))
}

async fn define_slice(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
    Json(req): Json<Slice>,
) -> ApiResult<(StatusCode, Json<Slice>)> {
    let s = mutate(&state, &sid, false, move |s, _| actions::define_slice(s, &req.name, &req.predicate)).await?;
    Ok((StatusCode::CREATED, Json(s)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdRequest {
    pub threshold: f64,
}

async fn set_threshold(
    State(state): State<Arc<AppState>>,
    Path(sid): Path<String>,
    Json(req): Json<ThresholdRequest>,
) -> ApiResult<Json<Value>> {
    mutate(&state, &sid, false, move |s, _| scoring::set_threshold(s, req.threshold)).await?;
    Ok(Json(json!({"threshold": req.threshold})))
}
