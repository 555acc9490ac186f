use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use substrace::mechanisms::AttributeSelection;
use substrace::model::TimeWindow;

use crate::analysis::{evolution, pair_detail, parse_project, project_list, AnalysisRequest};
use crate::error::ApiError;
use crate::snapshot::{Snapshot, SnapshotStore};

#[derive(Debug, Default)]
pub struct AppState {
    pub store: SnapshotStore,
    /// Directory `POST /api/reload` reads from.
    pub data_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(snapshot: Option<Snapshot>, data_dir: Option<PathBuf>) -> Self {
        Self {
            store: SnapshotStore::new(snapshot),
            data_dir,
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/projects", get(projects))
        .route("/api/analysis", post(analysis))
        .route("/api/pair", get(pair))
        .route("/api/evolution", get(evolution_route))
        .route("/api/reload", post(reload))
        .fallback(|| async { ApiError::NotFound("no such route".into()) })
        .with_state(state)
}

fn json_bytes(body: Arc<Vec<u8>>) -> Response {
    (
        StatusCode::OK,
        [(header::CONTENT_TYPE, "application/json")],
        Vec::clone(&body),
    )
        .into_response()
}

fn json<T: Serialize>(value: &T) -> Result<Response, ApiError> {
    let bytes = serde_json::to_vec(value).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(json_bytes(Arc::new(bytes)))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn projects(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let snap = state.store.get()?;
    json(&project_list(&snap.dataset))
}

async fn analysis(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let request: AnalysisRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("invalid request body: {e}")))?;
    let valid = request.validate()?;
    let snap = state.store.get()?;
    let body = blocking(move || snap.analysis_body(&valid)).await?;
    Ok(json_bytes(body))
}

struct Params(HashMap<String, String>);

impl Params {
    fn required(&self, name: &str) -> Result<&str, ApiError> {
        self.0
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| ApiError::BadRequest(format!("missing query parameter {name:?}")))
    }

    fn window(&self) -> Result<Option<TimeWindow>, ApiError> {
        self.0.get("window").map(|w| w.parse().map_err(ApiError::from)).transpose()
    }

    fn attributes(&self) -> Result<AttributeSelection, ApiError> {
        match self.0.get("attributes") {
            None => Ok(AttributeSelection::all()),
            Some(list) => Ok(AttributeSelection::parse_list(list)?),
        }
    }
}

async fn pair(State(state): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> Result<Response, ApiError> {
    let q = Params(q);
    let a = parse_project(q.required("a")?)?;
    let b = parse_project(q.required("b")?)?;
    let window = q.window()?;
    let selection = q.attributes()?;
    let snap = state.store.get()?;
    let detail = blocking(move || pair_detail(&snap.dataset, &a, &b, window, &selection)).await?;
    json(&detail)
}

async fn evolution_route(
    State(state): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let q = Params(q);
    let project = parse_project(q.required("project")?)?;
    let window = q.window()?;
    let selection = q.attributes()?;
    let snap = state.store.get()?;
    let series = blocking(move || evolution(&snap.dataset, &project, window, &selection)).await?;
    json(&series)
}

#[derive(Serialize)]
struct Reloaded {
    projects: usize,
    span: Option<TimeWindow>,
}

async fn reload(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let dir = state.data_dir.clone().ok_or(ApiError::ServiceNotReady)?;
    let snapshot = blocking(move || Snapshot::load(&dir)).await?;
    let summary = Reloaded {
        projects: snapshot.dataset.projects().len(),
        span: snapshot.dataset.span(),
    };
    state.store.replace(snapshot);
    json(&summary)
}

/// Binds and serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, host: &str, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
