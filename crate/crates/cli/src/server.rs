//! HTTP simulator service for manual play.
//!
//! Sessions are keyed by the `x-session-id` request header (`default` when
//! absent). Each session keeps its own evaluation count and improvement log.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use radarnet::runlog::{RunHeader, RunTrajectory};
use radarnet::{Instance, DIMENSION};
use serde::{Deserialize, Serialize};

pub const SESSION_HEADER: &str = "x-session-id";
const DEFAULT_SESSION: &str = "default";
const MAX_SESSION_ID: usize = 64;

#[derive(Debug, Default, Clone)]
struct Session {
    evaluations: u64,
    improvements: Vec<(u64, f64)>,
}

impl Session {
    fn best(&self) -> Option<f64> {
        self.improvements.last().map(|&(_, f)| f)
    }
}

pub struct AppState {
    instance: Instance,
    sessions: Mutex<HashMap<String, Session>>,
}

impl AppState {
    pub fn new(instance: Instance) -> Self {
        Self {
            instance,
            sessions: Mutex::new(HashMap::new()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TerrainResponse {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub altitudes: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub vector: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub fitness: f64,
    pub covered: usize,
    /// Base64 bitset, bit `k` = voxel `k = itheta * 900 + iy * 30 + ix`.
    pub coverage_map: String,
    pub evaluation: u64,
    pub best_so_far: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: message.into(),
        }),
    )
        .into_response()
}

fn session_id(headers: &HeaderMap) -> Result<String, &'static str> {
    let Some(value) = headers.get(SESSION_HEADER) else {
        return Ok(DEFAULT_SESSION.to_string());
    };
    let id = value.to_str().map_err(|_| "session id must be ASCII")?;
    let valid = !id.is_empty()
        && id.len() <= MAX_SESSION_ID
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if !valid {
        return Err("session id must be 1-64 characters of [A-Za-z0-9_-]");
    }
    Ok(id.to_string())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/terrain", get(terrain))
        .route("/evaluate", post(evaluate))
        .route("/session/log", get(session_log))
        .route("/session/reset", post(session_reset))
        .with_state(state)
}

async fn terrain(State(state): State<Arc<AppState>>) -> Json<TerrainResponse> {
    let g = &state.instance.grid;
    Json(TerrainResponse {
        name: state.instance.name.clone(),
        width: g.width(),
        height: g.height(),
        cell_size: g.cell_size(),
        altitudes: g.altitudes().to_vec(),
    })
}

async fn evaluate(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(body): Json<EvaluateRequest>,
) -> Response {
    let id = match session_id(&headers) {
        Ok(id) => id,
        Err(m) => return error(StatusCode::BAD_REQUEST, m),
    };
    let result = match state.instance.evaluate_vector(&body.vector) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    };
    let fitness = result.uncovered() as f64;
    let (evaluation, best_so_far) = {
        let mut sessions = state.sessions.lock().unwrap();
        let s = sessions.entry(id).or_default();
        s.evaluations += 1;
        if s.best().is_none_or(|b| fitness < b) {
            s.improvements.push((s.evaluations, fitness));
        }
        (s.evaluations, s.best().expect("at least one evaluation"))
    };
    Json(EvaluateResponse {
        fitness,
        covered: result.covered(),
        coverage_map: base64::engine::general_purpose::STANDARD.encode(result.bitset()),
        evaluation,
        best_so_far,
    })
    .into_response()
}

async fn session_log(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    let id = match session_id(&headers) {
        Ok(id) => id,
        Err(m) => return error(StatusCode::BAD_REQUEST, m),
    };
    let session = state.sessions.lock().unwrap().get(&id).cloned();
    let Some(session) = session.filter(|s| s.evaluations > 0) else {
        return error(
            StatusCode::NOT_FOUND,
            format!("session `{id}` has no evaluations"),
        );
    };
    let header = RunHeader {
        algorithm: format!("human_{id}"),
        instance: state.instance.name.clone(),
        seed: 0,
        budget: session.evaluations,
        dimension: DIMENSION,
    };
    let text = RunTrajectory::new(header, &session.improvements).to_text();
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response()
}

async fn session_reset(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    let id = match session_id(&headers) {
        Ok(id) => id,
        Err(m) => return error(StatusCode::BAD_REQUEST, m),
    };
    state.sessions.lock().unwrap().remove(&id);
    StatusCode::NO_CONTENT.into_response()
}

pub async fn serve(instance: Instance, host: &str, port: u16) -> anyhow::Result<()> {
    let app = router(Arc::new(AppState::new(instance)));
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}
