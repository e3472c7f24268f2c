//! HTTP service for the mock app store.
//!
//! All participant state lives server-side. Each state-changing request runs
//! the engine on a copy of the session state, appends the resulting events to
//! the log, and only then commits the new state and responds.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;

use crate::catalog::Catalog;
use crate::engine::{replay_session, Engine, EngineConfig, NoticeDecision, ScoredApp, SessionState, UserAction};
use crate::error::{EngineError, LogError};
use crate::eventlog::{self, EventLog};
use crate::model::{EventKind, LightThresholds, SessionEvent};
use crate::profiles::ProfileDocument;

/// Header carrying the client-asserted elapsed session time in
/// [`ClockMode::Client`].
pub const ELAPSED_HEADER: &str = "x-elapsed-ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Elapsed time measured by the server from session creation.
    #[default]
    System,
    /// Elapsed time taken from the `x-elapsed-ms` request header. For
    /// simulations and scripted tests.
    Client,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: String,
    pub catalog_path: PathBuf,
    pub profiles_path: PathBuf,
    pub log_path: PathBuf,
    pub exploratory_from_s: f64,
    pub exploratory_to_s: f64,
    pub red_threshold: f64,
    pub green_threshold: f64,
    pub alternatives_threshold: f64,
    pub fsync: bool,
    pub clock: ClockMode,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8080".into(),
            catalog_path: "catalog.json".into(),
            profiles_path: "profiles.json".into(),
            log_path: "events.jsonl".into(),
            exploratory_from_s: 210.0,
            exploratory_to_s: 240.0,
            red_threshold: 0.1,
            green_threshold: 0.5,
            alternatives_threshold: 0.1,
            fsync: true,
            clock: ClockMode::System,
        }
    }
}

impl ServiceConfig {
    /// Reads a TOML config file. Missing keys take defaults.
    pub fn from_toml_file(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Applies `VCPA_LISTEN`, `VCPA_CATALOG`, `VCPA_PROFILES`, `VCPA_LOG`.
    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var("VCPA_LISTEN") {
            self.listen = v;
        }
        if let Ok(v) = std::env::var("VCPA_CATALOG") {
            self.catalog_path = v.into();
        }
        if let Ok(v) = std::env::var("VCPA_PROFILES") {
            self.profiles_path = v.into();
        }
        if let Ok(v) = std::env::var("VCPA_LOG") {
            self.log_path = v.into();
        }
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            lights: LightThresholds {
                red_below: self.red_threshold,
                green_above: self.green_threshold,
            },
            alternatives_above: self.alternatives_threshold,
            exploratory_from_ms: (self.exploratory_from_s * 1000.0).round() as u64,
            exploratory_to_ms: (self.exploratory_to_s * 1000.0).round() as u64,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
}

struct Session {
    state: SessionState,
    started: Instant,
    next_seq: u64,
}

pub struct StoreState {
    engine: Engine,
    log: EventLog,
    catalog_doc: String,
    profiles_doc: String,
    clock: ClockMode,
    sessions: std::sync::Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    counter: AtomicU64,
}

impl StoreState {
    /// Loads catalog and profile documents from disk and opens the log.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let engine_config = config.engine_config();
        engine_config.validate().map_err(ServiceError::Config)?;
        let read = |path: &PathBuf| {
            std::fs::read_to_string(path).map_err(|source| ServiceError::Read {
                path: path.clone(),
                source,
            })
        };
        let catalog_doc = read(&config.catalog_path)?;
        let profiles_doc = read(&config.profiles_path)?;
        let catalog: Catalog = serde_json::from_str(&catalog_doc).map_err(|source| ServiceError::Parse {
            path: config.catalog_path.clone(),
            source,
        })?;
        let profiles: ProfileDocument =
            serde_json::from_str(&profiles_doc).map_err(|source| ServiceError::Parse {
                path: config.profiles_path.clone(),
                source,
            })?;
        let engine = Engine::new(catalog, profiles, engine_config);
        let log = EventLog::open(&config.log_path, config.fsync)?;
        let (sessions, counter) = restore_sessions(&engine, &log.load()?)?;
        Ok(StoreState {
            engine,
            log,
            catalog_doc,
            profiles_doc,
            clock: config.clock,
            sessions: std::sync::Mutex::new(sessions),
            counter: AtomicU64::new(counter),
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
    }

    fn new_session_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::SeqCst) + 1;
        match self.clock {
            ClockMode::Client => format!("sess-{n:06}"),
            ClockMode::System => {
                let mut bytes = [0u8; 12];
                rand::thread_rng().fill_bytes(&mut bytes);
                hex::encode(bytes)
            }
        }
    }
}

type SessionMap = HashMap<String, Arc<Mutex<Session>>>;

/// Rebuilds session state from an existing log so a restarted service keeps
/// serving the same sessions. Also returns the highest sequential session
/// number seen.
fn restore_sessions(engine: &Engine, events: &[SessionEvent]) -> Result<(SessionMap, u64), ServiceError> {
    let mut sessions = HashMap::new();
    let mut counter = 0;
    for (id, events) in eventlog::by_session(events) {
        let replay = replay_session(engine, &events).map_err(|e| ServiceError::Config(format!("log replay: {e}")))?;
        let last = replay.final_state.last_elapsed_ms;
        let started = Instant::now()
            .checked_sub(Duration::from_millis(last))
            .unwrap_or_else(Instant::now);
        if let Some(n) = id.strip_prefix("sess-").and_then(|n| n.parse::<u64>().ok()) {
            counter = counter.max(n);
        }
        let session = Session {
            state: replay.final_state,
            started,
            next_seq: events.last().map_or(0, |e| e.seq + 1),
        };
        sessions.insert(id, Arc::new(Mutex::new(session)));
    }
    Ok((sessions, counter))
}

fn wall_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or_default()
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn not_found(message: String) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            message,
        }
    }

    fn unprocessable(message: String) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message,
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::UnknownApp(_) | EngineError::UnknownProfile(_) => StatusCode::NOT_FOUND,
            EngineError::NoPendingNotice(_)
            | EngineError::NoProfileSelected
            | EngineError::AlreadyDownloaded(_)
            | EngineError::NotDownloaded(_)
            | EngineError::NoFamily(_) => StatusCode::CONFLICT,
            EngineError::ClockBackwards { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            message: e.to_string(),
        }
    }
}

impl From<LogError> for ApiError {
    fn from(e: LogError) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type Shared = Arc<StoreState>;

/// Response body for every session action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionResponse {
    pub session_id: String,
    pub events: Vec<SessionEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<NoticeDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternatives: Option<Vec<ScoredApp>>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
pub struct NewSession {
    #[serde(default)]
    pub entry_concern: Option<u8>,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct SelectProfile {
    pub profile_id: String,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct IgnoreBody {
    #[serde(default)]
    pub reason: String,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct ExploratoryAnswer {
    pub kept_profile: bool,
    #[serde(default)]
    pub new_profile_id: Option<String>,
}

fn elapsed_for(state: &StoreState, session: &Session, headers: &HeaderMap) -> Result<u64, ApiError> {
    match state.clock {
        ClockMode::System => Ok(session.started.elapsed().as_millis() as u64),
        ClockMode::Client => headers
            .get(ELAPSED_HEADER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| ApiError::unprocessable(format!("missing or invalid {ELAPSED_HEADER} header"))),
    }
}

fn stamp(session: &mut Session, id: &str, elapsed_ms: u64, kinds: Vec<EventKind>) -> Vec<SessionEvent> {
    let wall = wall_ms();
    kinds
        .into_iter()
        .map(|kind| {
            let seq = session.next_seq;
            session.next_seq += 1;
            SessionEvent {
                session_id: id.to_string(),
                seq,
                elapsed_ms,
                wall_ms: wall,
                kind,
            }
        })
        .collect()
}

async fn act(
    state: &StoreState,
    id: &str,
    headers: &HeaderMap,
    action: UserAction,
) -> Result<ActionResponse, ApiError> {
    let handle = state.session(id)?;
    let mut session = handle.lock().await;
    let elapsed = elapsed_for(state, &session, headers)?;
    let mut next = session.state.clone();
    let outcome = state.engine.apply(&mut next, &action, elapsed)?;
    let seq_before = session.next_seq;
    let events = stamp(&mut session, id, elapsed, outcome.events);
    if let Err(e) = state.log.append_all(&events) {
        session.next_seq = seq_before;
        return Err(e.into());
    }
    session.state = next;
    Ok(ActionResponse {
        session_id: id.to_string(),
        events,
        decision: outcome.decision,
        alternatives: outcome.alternatives,
    })
}

fn raw_json(body: &str) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body.to_string()).into_response()
}

async fn get_catalog(State(s): State<Shared>) -> Response {
    raw_json(&s.catalog_doc)
}

async fn get_profiles(State(s): State<Shared>) -> Response {
    raw_json(&s.profiles_doc)
}

async fn create_session(
    State(s): State<Shared>,
    body: Option<Json<NewSession>>,
) -> Result<Json<ActionResponse>, ApiError> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    if let Some(c) = body.entry_concern {
        if !(1..=9).contains(&c) {
            return Err(ApiError::unprocessable(format!("entry_concern {c} outside 1..=9")));
        }
    }
    let id = s.new_session_id();
    let mut session = Session {
        state: SessionState::new(id.clone()),
        started: Instant::now(),
        next_seq: 0,
    };
    let events = stamp(
        &mut session,
        &id,
        0,
        vec![EventKind::SessionStarted {
            entry_concern: body.entry_concern,
        }],
    );
    s.log.append_all(&events)?;
    s.sessions
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok(Json(ActionResponse {
        session_id: id,
        events,
        decision: None,
        alternatives: None,
    }))
}

async fn get_session(State(s): State<Shared>, Path(id): Path<String>) -> Result<Json<SessionState>, ApiError> {
    let handle = s.session(&id)?;
    let session = handle.lock().await;
    Ok(Json(session.state.clone()))
}

async fn select_profile(
    State(s): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(body): Json<SelectProfile>,
) -> Result<Json<ActionResponse>, ApiError> {
    act(&s, &id, &headers, UserAction::SelectProfile { profile_id: body.profile_id })
        .await
        .map(Json)
}

async fn view_app(
    State(s): State<Shared>,
    Path((id, app)): Path<(String, String)>,
    headers: HeaderMap,
) -> Result<Json<ActionResponse>, ApiError> {
    act(&s, &id, &headers, UserAction::ViewApp { app_id: app }).await.map(Json)
}

async fn download(
    State(s): State<Shared>,
    Path((id, app)): Path<(String, String)>,
    headers: HeaderMap,
) -> Result<Json<ActionResponse>, ApiError> {
    act(&s, &id, &headers, UserAction::Download { app_id: app }).await.map(Json)
}

async fn ignore(
    State(s): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(body): Json<IgnoreBody>,
) -> Result<Json<ActionResponse>, ApiError> {
    act(&s, &id, &headers, UserAction::Ignore { reason: body.reason }).await.map(Json)
}

async fn exploratory_answer(
    State(s): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(body): Json<ExploratoryAnswer>,
) -> Result<Json<ActionResponse>, ApiError> {
    act(
        &s,
        &id,
        &headers,
        UserAction::AnswerExploratory {
            kept_profile: body.kept_profile,
            new_profile_id: body.new_profile_id,
        },
    )
    .await
    .map(Json)
}

async fn remove(
    State(s): State<Shared>,
    Path((id, app)): Path<(String, String)>,
    headers: HeaderMap,
) -> Result<Json<ActionResponse>, ApiError> {
    act(&s, &id, &headers, UserAction::Remove { app_id: app }).await.map(Json)
}

async fn alternatives(
    State(s): State<Shared>,
    Path((id, app)): Path<(String, String)>,
    headers: HeaderMap,
) -> Result<Json<ActionResponse>, ApiError> {
    act(&s, &id, &headers, UserAction::OpenAlternatives { app_id: app })
        .await
        .map(Json)
}

async fn scores(State(s): State<Shared>, Path(id): Path<String>) -> Result<Json<Vec<ScoredApp>>, ApiError> {
    let handle = s.session(&id)?;
    let session = handle.lock().await;
    let profile = session
        .state
        .selected_profile_id
        .clone()
        .ok_or(EngineError::NoProfileSelected)?;
    Ok(Json(s.engine.score_catalog(&profile)?))
}

async fn session_log(State(s): State<Shared>, Path(id): Path<String>) -> Result<Json<Vec<SessionEvent>>, ApiError> {
    let handle = s.session(&id)?;
    // hold the session lock so the read sees every committed append
    let _guard = handle.lock().await;
    let events = eventlog::load(s.log.path())?;
    Ok(Json(events.into_iter().filter(|e| e.session_id == id).collect()))
}

pub fn router(state: Arc<StoreState>) -> Router {
    Router::new()
        .route("/catalog", get(get_catalog))
        .route("/profiles", get(get_profiles))
        .route("/session", post(create_session))
        .route("/session/:id", get(get_session))
        .route("/session/:id/profile", post(select_profile))
        .route("/session/:id/view/:app", post(view_app))
        .route("/session/:id/download/:app", post(download))
        .route("/session/:id/ignore", post(ignore))
        .route("/session/:id/exploratory-answer", post(exploratory_answer))
        .route("/session/:id/remove/:app", post(remove))
        .route("/session/:id/alternatives/:app", get(alternatives))
        .route("/session/:id/scores", get(scores))
        .route("/session/:id/log", get(session_log))
        .with_state(state)
}

/// Binds and serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = Arc::new(StoreState::from_config(&config)?);
    let listener = tokio::net::TcpListener::bind(&config.listen)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: config.listen.clone(),
            source,
        })?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|source| ServiceError::Bind {
            addr: config.listen.clone(),
            source,
        })
}

/// A service running on a background thread, for tests and examples.
pub struct RunningService {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningService {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningService {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Starts the service on its own runtime thread. `config.listen` may use port 0.
pub fn spawn(config: ServiceConfig) -> Result<RunningService, ServiceError> {
    let state = Arc::new(StoreState::from_config(&config)?);
    let std_listener = std::net::TcpListener::bind(&config.listen).map_err(|source| ServiceError::Bind {
        addr: config.listen.clone(),
        source,
    })?;
    std_listener
        .set_nonblocking(true)
        .map_err(|source| ServiceError::Bind {
            addr: config.listen.clone(),
            source,
        })?;
    let addr = std_listener.local_addr().map_err(|source| ServiceError::Bind {
        addr: config.listen.clone(),
        source,
    })?;
    let (tx, rx) = tokio::sync::oneshot::channel();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .build()
            .expect("tokio runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
            let _ = axum::serve(listener, router(state))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(RunningService {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
