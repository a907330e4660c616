//! HTTP+JSON service for subitizing sessions.
//!
//! Every session owns an append-only JSON-lines log under
//! `<data_dir>/sessions/`. Each request that changes a session appends its
//! events before the response goes out, and the in-memory state is only
//! replaced after the write succeeds, so restarting the service (which
//! replays all logs) loses nothing that a client saw.

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use smnist_core::sampler::Rng;
use smnist_core::session::eventlog::{answer_events, replay_file, LogWriter, SessionEvent};
use smnist_core::session::{
    aggregate, aggregate_csv, Answer, AggregateRow, LevelChangeRecord, SessionConfig, SessionError,
    SessionState, Status, Verdict,
};
use thiserror::Error;
use tower_http::services::ServeDir;

pub const SESSIONS_DIR: &str = "sessions";
pub const DATASETS_DIR: &str = "datasets";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub answer_window_ms: u64,
    /// Built web client, served for every path outside `/api`.
    pub static_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            answer_window_ms: smnist_core::session::DEFAULT_ANSWER_WINDOW_MS,
            static_dir: None,
        }
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.data_dir.join(SESSIONS_DIR)
    }

    pub fn datasets_dir(&self) -> PathBuf {
        self.data_dir.join(DATASETS_DIR)
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("session log {path}: {message}")]
    Log { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// JSON error body with an HTTP status.
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

    fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{what} not found"))
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        tracing::error!("{e}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match e {
            SessionError::NotActive | SessionError::NoOutstandingTrial | SessionError::TrialOutstanding => {
                StatusCode::CONFLICT
            }
            SessionError::MalformedDigit(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct LiveSession {
    id: String,
    created_at_ms: u64,
    state: SessionState,
    log: LogWriter,
    rng: Rng,
    /// Server time the outstanding trial was handed out.
    issued_at: Option<Instant>,
}

pub struct AppState {
    config: ServiceConfig,
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<LiveSession>>>>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn log_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.jsonl"))
}

impl AppState {
    /// Opens the data directory and replays every session log in it.
    pub fn open(config: ServiceConfig) -> Result<Arc<Self>, ServiceError> {
        let dir = config.sessions_dir();
        std::fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "jsonl") {
                continue;
            }
            let replayed = replay_file(&path).map_err(|e| ServiceError::Log {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let live = LiveSession {
                id: replayed.session_id.clone(),
                created_at_ms: replayed.created_at_ms,
                issued_at: replayed.state.outstanding.as_ref().map(|_| Instant::now()),
                state: replayed.state,
                log: LogWriter::create(&path)?,
                rng: Rng::new(rand::random(), 0),
            };
            sessions.insert(live.id.clone(), Arc::new(tokio::sync::Mutex::new(live)));
        }
        tracing::info!("loaded {} session logs from {}", sessions.len(), dir.display());
        Ok(Arc::new(Self {
            config,
            sessions: Mutex::new(sessions),
        }))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn session(&self, id: &str) -> ApiResult<Arc<tokio::sync::Mutex<LiveSession>>> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(&format!("session {id}")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(session_summary))
        .route("/api/sessions/{id}/trial", get(get_trial))
        .route("/api/sessions/{id}/answer", post(post_answer))
        .route("/api/sessions/{id}/end", post(end_session))
        .route("/api/sessions/{id}/report", get(report))
        .route("/api/aggregate", get(get_aggregate))
        .route("/api/datasets", get(list_datasets))
        .route("/api/datasets/{name}/{file}", get(dataset_file))
        .fallback(|| async { ApiError::not_found("route") });
    let app = match state.config.static_dir.clone() {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.with_state(state)
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> Result<(), ServiceError> {
    let state = AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    answer_window_ms: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionHandle {
    pub session_id: String,
    pub created_at_ms: u64,
    pub config: SessionConfig,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub session_id: String,
    pub created_at_ms: u64,
    pub config: SessionConfig,
    pub level: u8,
    pub streak: usize,
    pub status: Status,
    pub clock_ms: u64,
    pub answers: u64,
    pub score: f64,
    pub level_row: String,
    pub millis_row: String,
    pub records: Vec<LevelChangeRecord>,
    pub trial_outstanding: bool,
}

fn summary(live: &LiveSession) -> Summary {
    let s = &live.state;
    Summary {
        session_id: live.id.clone(),
        created_at_ms: live.created_at_ms,
        config: s.config,
        level: s.level,
        streak: s.streak,
        status: s.status,
        clock_ms: s.clock_ms,
        answers: s.answers,
        score: s.score(),
        level_row: s.level_row(),
        millis_row: s.millis_row(),
        records: s.records.clone(),
        trial_outstanding: s.outstanding.is_some(),
    }
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateRequest = if body.iter().all(u8::is_ascii_whitespace) {
        CreateRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?
    };
    let window = req.answer_window_ms.unwrap_or(app.config.answer_window_ms);
    if window == 0 {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "answer window must be positive"));
    }
    let config = SessionConfig {
        answer_window_ms: window,
    };
    let id = uuid::Uuid::new_v4().simple().to_string();
    let created_at_ms = now_ms();
    let mut log = LogWriter::create(&log_path(&app.config.sessions_dir(), &id)).map_err(ApiError::internal)?;
    log.append(&SessionEvent::Created {
        session_id: id.clone(),
        created_at_ms,
        config,
    })
    .map_err(ApiError::internal)?;
    let live = LiveSession {
        id: id.clone(),
        created_at_ms,
        state: SessionState::new(config),
        log,
        rng: Rng::new(rand::random(), 0),
        issued_at: None,
    };
    app.sessions
        .lock()
        .unwrap()
        .insert(id.clone(), Arc::new(tokio::sync::Mutex::new(live)));
    Ok((
        StatusCode::CREATED,
        Json(SessionHandle {
            session_id: id,
            created_at_ms,
            config,
        }),
    ))
}

async fn session_summary(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Summary>> {
    let live = app.session(&id)?;
    let live = live.lock().await;
    Ok(Json(summary(&live)))
}

/// What the client may see of a trial: never the numerosity.
#[derive(Debug, Serialize, Deserialize)]
pub struct TrialView {
    pub positions: Vec<[f64; 2]>,
    pub dot_radius: f64,
    pub deadline_ms: u64,
    pub level: u8,
    pub streak: usize,
}

async fn get_trial(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<TrialView>> {
    let live = app.session(&id)?;
    let mut live = live.lock().await;
    let live = &mut *live;
    if live.state.outstanding.is_none() {
        let mut next = live.state.clone();
        let trial = next.next_trial(&mut live.rng)?;
        live.log
            .append(&SessionEvent::TrialIssued { trial })
            .map_err(ApiError::internal)?;
        live.state = next;
        live.issued_at = Some(Instant::now());
    }
    let trial = live.state.outstanding.as_ref().expect("trial just ensured");
    Ok(Json(TrialView {
        positions: trial.positions.clone(),
        dot_radius: trial.dot_radius,
        deadline_ms: trial.deadline_ms,
        level: live.state.level,
        streak: live.state.streak,
    }))
}

/// `{"digit": 0..9}`, `{"digit": null}` or `{"timeout": true}`.
fn parse_answer(body: &[u8]) -> ApiResult<Answer> {
    let bad = |m: String| ApiError::new(StatusCode::BAD_REQUEST, m);
    let value: Value = serde_json::from_slice(body).map_err(|e| bad(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| bad("answer must be a JSON object".into()))?;
    if obj.get("timeout").and_then(Value::as_bool) == Some(true) {
        return Ok(Answer::Timeout);
    }
    match obj.get("digit") {
        Some(Value::Null) => Ok(Answer::Timeout),
        Some(Value::Number(n)) => {
            let d = n
                .as_i64()
                .ok_or_else(|| bad(format!("digit {n} is not an integer")))?;
            Ok(Answer::digit(d)?)
        }
        Some(other) => Err(bad(format!("digit must be an integer, got {other}"))),
        None => Err(bad("missing digit".into())),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub verdict: Verdict,
    pub elapsed_ms: u64,
    pub summary: Summary,
}

async fn post_answer(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<AnswerResponse>> {
    let live = app.session(&id)?;
    let answer = parse_answer(&body)?;
    let mut live = live.lock().await;
    let elapsed_ms = live
        .issued_at
        .map(|t| t.elapsed().as_millis() as u64)
        .unwrap_or(0);
    let mut next = live.state.clone();
    let verdict = next.submit_answer(answer, elapsed_ms)?;
    live.log
        .append_all(&answer_events(answer, elapsed_ms, &verdict))
        .map_err(ApiError::internal)?;
    live.state = next;
    live.issued_at = None;
    Ok(Json(AnswerResponse {
        verdict,
        elapsed_ms,
        summary: summary(&live),
    }))
}

async fn end_session(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Summary>> {
    let live = app.session(&id)?;
    let mut live = live.lock().await;
    if live.state.status == Status::Active {
        live.log.append(&SessionEvent::Ended).map_err(ApiError::internal)?;
        live.state.end();
        live.issued_at = None;
    }
    Ok(Json(summary(&live)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub session_id: String,
    pub level: u8,
    pub status: Status,
    pub records: Vec<LevelChangeRecord>,
    pub score: f64,
    pub display: String,
    pub millis_row: String,
}

async fn report(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Report>> {
    let live = app.session(&id)?;
    let live = live.lock().await;
    Ok(Json(Report {
        session_id: live.id.clone(),
        level: live.state.level,
        status: live.state.status,
        records: live.state.records.clone(),
        score: live.state.score(),
        display: live.state.level_row(),
        millis_row: live.state.millis_row(),
    }))
}

/// Aggregates every readable log in `dir`; unreadable logs are skipped.
pub fn aggregate_logs(dir: &Path) -> io::Result<Vec<AggregateRow>> {
    let mut sessions = Vec::new();
    if dir.exists() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            match replay_file(&path) {
                Ok(r) => sessions.push(r.state.records),
                Err(e) => tracing::warn!("skipping {}: {e}", path.display()),
            }
        }
    }
    Ok(aggregate(sessions.iter().map(Vec::as_slice)))
}

#[derive(Debug, Deserialize)]
struct AggregateQuery {
    format: Option<String>,
}

async fn get_aggregate(State(app): State<Arc<AppState>>, Query(q): Query<AggregateQuery>) -> ApiResult<Response> {
    let dir = app.config.sessions_dir();
    let rows = tokio::task::spawn_blocking(move || aggregate_logs(&dir))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::internal)?;
    Ok(match q.format.as_deref() {
        Some("csv") => ([(header::CONTENT_TYPE, "text/csv")], aggregate_csv(&rows)).into_response(),
        None | Some("json") => Json(rows).into_response(),
        Some(other) => return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("unknown format {other}"))),
    })
}

fn safe_component(s: &str) -> bool {
    !s.is_empty()
        && !s.starts_with('.')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

async fn list_datasets(State(app): State<Arc<AppState>>) -> ApiResult<Json<Vec<String>>> {
    let dir = app.config.datasets_dir();
    let mut names = Vec::new();
    if let Ok(mut entries) = tokio::fs::read_dir(&dir).await {
        while let Some(e) = entries.next_entry().await.map_err(ApiError::internal)? {
            if e.path().is_dir() {
                names.push(e.file_name().to_string_lossy().into_owned());
            }
        }
    }
    names.sort();
    Ok(Json(names))
}

async fn dataset_file(
    State(app): State<Arc<AppState>>,
    UrlPath((name, file)): UrlPath<(String, String)>,
) -> ApiResult<Response> {
    if !safe_component(&name) || !safe_component(&file) {
        return Err(ApiError::not_found("dataset file"));
    }
    let path = app.config.datasets_dir().join(&name).join(&file);
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|_| ApiError::not_found("dataset file"))?;
    let content_type = if file.ends_with(".json") {
        "application/json"
    } else {
        "application/octet-stream"
    };
    let disposition = format!("attachment; filename=\"{file}\"");
    Ok((
        [
            (header::CONTENT_TYPE, content_type.to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        bytes,
    )
        .into_response())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answers_parse() {
        assert_eq!(parse_answer(br#"{"digit": 7}"#).unwrap(), Answer::Digit(7));
        assert_eq!(parse_answer(br#"{"digit": null}"#).unwrap(), Answer::Timeout);
        assert_eq!(parse_answer(br#"{"timeout": true}"#).unwrap(), Answer::Timeout);
        for bad in [&br#"{"digit": 10}"#[..], br#"{"digit": -1}"#, br#"{"digit": "3"}"#, br#"{"digit": 2.5}"#, b"[]", b"{", b"{}"] {
            assert_eq!(parse_answer(bad).unwrap_err().status, StatusCode::BAD_REQUEST);
        }
    }

    #[test]
    fn path_components_are_checked() {
        assert!(safe_component("s2-hard-102x"));
        assert!(safe_component("train-images-idx3-ubyte.gz"));
        for bad in ["", "..", ".hidden", "a/b", "a\\b"] {
            assert!(!safe_component(bad), "{bad}");
        }
    }
}
