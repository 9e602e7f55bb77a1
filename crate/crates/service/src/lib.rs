//! HTTP front-end over the deformation pipeline.
//!
//! | method | path | |
//! |---|---|---|
//! | `POST` | `/sessions` | OBJ text in the body; creates a session |
//! | `GET` | `/sessions/{id}` | session summary and counters |
//! | `DELETE` | `/sessions/{id}` | drops a session |
//! | `PUT` | `/sessions/{id}/handles` | `{"handles": [{"name", "vertices"}]}` |
//! | `GET` | `/sessions/{id}/weights` | harmonic weights per vertex |
//! | `POST` | `/sessions/{id}/deform` | `{"transforms": {name: transform}, "beta", "operator"}` |
//! | `GET` | `/healthz` | liveness |
//! | `GET` | `/ui/...` | static viewer assets |

pub mod api;
pub mod session;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use harmonica_core::Model;
use tower_http::services::ServeDir;

use api::{ApiError, DeformRequest, DeformResponse, HandlesAccepted, HandlesRequest, SessionCreated, SessionInfo, WeightsResponse};
use session::{Session, SessionStore};

pub const DEFAULT_PORT: u16 = 8787;
pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(30 * 60);
const MAX_BODY_BYTES: usize = 256 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct Config {
    pub ui_dir: PathBuf,
    pub idle_timeout: Duration,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            ui_dir: PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/ui")),
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub sessions: Arc<SessionStore>,
    pub config: Arc<Config>,
}

impl AppState {
    pub fn new(config: Config) -> Self {
        AppState {
            sessions: Arc::new(SessionStore::default()),
            config: Arc::new(config),
        }
    }
}

pub fn router(state: AppState) -> Router {
    let ui = ServeDir::new(&state.config.ui_dir).append_index_html_on_directories(true);
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_info).delete(delete_session))
        .route("/sessions/{id}/handles", put(set_handles))
        .route("/sessions/{id}/weights", get(weights))
        .route("/sessions/{id}/deform", post(deform))
        .nest_service("/ui", ui)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Runs CPU-bound work off the async executor.
async fn blocking<T: Send + 'static>(work: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(work)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &str) -> Result<T, ApiError> {
    if body.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "empty request body"));
    }
    serde_json::from_str(body).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))
}

async fn create_session(State(state): State<AppState>, body: String) -> Result<impl IntoResponse, ApiError> {
    if body.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "empty request body; expected OBJ text"));
    }
    let session = blocking(move || {
        let model = Model::from_obj(&body)?;
        Ok(Session::new(uuid::Uuid::new_v4().to_string(), model))
    })
    .await?;
    let created = SessionCreated {
        id: session.id.clone(),
        num_vertices: session.model().mesh().num_vertices(),
        num_triangles: session.model().mesh().num_triangles(),
        bbox: session.bbox(),
    };
    state.sessions.insert(session);
    tracing::info!(id = %created.id, vertices = created.num_vertices, "session created");
    Ok((StatusCode::CREATED, Json(created)))
}

async fn session_info(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionInfo>, ApiError> {
    Ok(Json(state.sessions.get(&id)?.info()))
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    state.sessions.remove(&id).ok_or_else(|| ApiError::not_found(&id))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn set_handles(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: String,
) -> Result<Json<HandlesAccepted>, ApiError> {
    let session = state.sessions.get(&id)?;
    let request: HandlesRequest = parse_json(&body)?;
    let accepted = blocking(move || session.set_handles(request.handles)).await?;
    Ok(Json(accepted))
}

async fn weights(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<WeightsResponse>, ApiError> {
    let session = state.sessions.get(&id)?;
    Ok(Json(blocking(move || session.weights()).await?))
}

async fn deform(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: String,
) -> Result<Json<DeformResponse>, ApiError> {
    let session = state.sessions.get(&id)?;
    let request: DeformRequest = parse_json(&body)?;
    Ok(Json(blocking(move || session.deform(request)).await?))
}

/// Periodically drops sessions idle for longer than the configured timeout.
pub fn spawn_eviction(state: AppState, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        loop {
            tick.tick().await;
            let removed = state.sessions.evict_idle(Instant::now(), state.config.idle_timeout);
            if removed > 0 {
                tracing::info!(removed, "evicted idle sessions");
            }
        }
    })
}
