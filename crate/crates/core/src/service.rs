//! HTTP front end: search routes plus patch metadata and image routes.

use std::collections::HashMap;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use crate::error::Error;
use crate::index::IndexCatalog;
use crate::query::{execute_search, EngineConfig, ModelKind, QuerySession, SearchError, SearchRequest};
use crate::store::FeatureStore;

pub const DATA_ROOT_ENV: &str = "BOXSEARCH_DATA_ROOT";
pub const PORT_ENV: &str = "BOXSEARCH_PORT";
pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_PATCH_CAP: u64 = 10_000;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Directory that record `image_ref`s are relative to.
    pub data_root: PathBuf,
    pub store: PathBuf,
    pub catalog: PathBuf,
    pub addr: SocketAddr,
    pub engine: EngineConfig,
    /// Largest grid area one `/api/patches` call may cover.
    pub patch_cap: u64,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    pub stage: String,
}

#[derive(Debug, Clone)]
struct Failure {
    status: StatusCode,
    body: ApiError,
}

impl Failure {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, stage: &str) -> Self {
        Failure { status, body: ApiError { code: code.into(), message: message.into(), stage: stage.into() } }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Failure::new(StatusCode::BAD_REQUEST, "bad_request", message, "parse")
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn status_for(error: &Error) -> StatusCode {
    match error {
        Error::Train(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Error::InvalidRequest(_) | Error::Sample(_) => StatusCode::BAD_REQUEST,
        Error::NotFound { .. } => StatusCode::NOT_FOUND,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<SearchError> for Failure {
    fn from(e: SearchError) -> Self {
        Failure::new(status_for(&e.error), e.error.code(), e.error.to_string(), e.stage.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridExtent {
    pub min_row: i64,
    pub max_row: i64,
    pub min_col: i64,
    pub max_col: i64,
}

/// Shared read-only state behind every route.
#[derive(Debug, Clone)]
pub struct AppState {
    store: Arc<FeatureStore>,
    catalog: Arc<IndexCatalog>,
    data_root: PathBuf,
    engine: EngineConfig,
    patch_cap: u64,
    grid: GridExtent,
}

impl AppState {
    pub fn new(
        store: Arc<FeatureStore>,
        catalog: Arc<IndexCatalog>,
        data_root: impl Into<PathBuf>,
        engine: EngineConfig,
        patch_cap: u64,
    ) -> crate::error::Result<Self> {
        if engine.knn_k == 0 || engine.ensemble_size == 0 || engine.n_candidate_subsets == 0 {
            return Err(Error::InvalidRequest("knn_k, ensemble_size and candidates must be at least 1".into()));
        }
        if catalog.store_fingerprint() != store.fingerprint() {
            return Err(Error::IndexMismatch("catalog was built over a different store".into()));
        }
        let records = store.records();
        let grid = GridExtent {
            min_row: records.iter().map(|r| r.grid_row).min().unwrap_or(0),
            max_row: records.iter().map(|r| r.grid_row).max().unwrap_or(0),
            min_col: records.iter().map(|r| r.grid_col).min().unwrap_or(0),
            max_col: records.iter().map(|r| r.grid_col).max().unwrap_or(0),
        };
        Ok(AppState { store, catalog, data_root: data_root.into(), engine, patch_cap, grid })
    }

    /// Opens the store and catalog named by `config`.
    pub fn load(config: &ServiceConfig) -> crate::error::Result<Self> {
        let store = Arc::new(FeatureStore::open(&config.store)?);
        let catalog = Arc::new(IndexCatalog::load(&config.catalog, &store)?);
        AppState::new(store, catalog, &config.data_root, config.engine, config.patch_cap)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/search", post(search))
        .route("/api/session/validate", post(validate_session))
        .route("/api/meta", get(meta))
        .route("/api/patches", get(patches))
        .route("/api/patch/{id}", get(patch_image))
        .layer(CorsLayer::permissive())
        .with_state(Arc::new(state))
}

type Shared = State<Arc<AppState>>;

async fn search(State(state): Shared, body: Bytes) -> Result<Response, Failure> {
    let request: SearchRequest =
        serde_json::from_slice(&body).map_err(|e| Failure::bad_request(format!("search request: {e}")))?;
    let st = state.clone();
    let response = tokio::task::spawn_blocking(move || execute_search(&request, &st.store, &st.catalog, &st.engine))
        .await
        .map_err(|e| Failure::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string(), "infer"))??;
    Ok(Json(response).into_response())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionReport {
    pub valid: bool,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

async fn validate_session(State(state): Shared, body: Bytes) -> Result<Json<SessionReport>, Failure> {
    let text = std::str::from_utf8(&body).map_err(|_| Failure::bad_request("session document is not UTF-8"))?;
    let session = QuerySession::from_document(text).map_err(|e| Failure::bad_request(e.to_string()))?;
    let report = match session.check(state.store.n_rows(), state.store.fingerprint()) {
        Ok(warnings) => SessionReport { valid: true, warnings, error: None },
        Err(e) => SessionReport { valid: false, warnings: Vec::new(), error: Some(e.to_string()) },
    };
    Ok(Json(report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaDefaults {
    pub knn_k: u32,
    pub ensemble_size: u32,
    pub n_candidate_subsets: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub n_rows: u64,
    pub n_dims: u32,
    pub grid: GridExtent,
    pub dataset_fingerprint: String,
    pub models: Vec<ModelKind>,
    pub defaults: MetaDefaults,
    pub n_indexes: u32,
    pub subset_size: u32,
}

async fn meta(State(state): Shared) -> Json<Meta> {
    Json(Meta {
        n_rows: state.store.n_rows(),
        n_dims: state.store.n_dims(),
        grid: state.grid,
        dataset_fingerprint: state.store.fingerprint().to_string(),
        models: ModelKind::ALL.to_vec(),
        defaults: MetaDefaults {
            knn_k: state.engine.knn_k,
            ensemble_size: state.engine.ensemble_size,
            n_candidate_subsets: state.engine.n_candidate_subsets,
        },
        n_indexes: state.catalog.len() as u32,
        subset_size: state.catalog.params().subset_size,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchCell {
    pub id: u64,
    pub grid_row: i64,
    pub grid_col: i64,
    pub geo_x: f64,
    pub geo_y: f64,
}

async fn patches(
    State(state): Shared,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<Vec<PatchCell>>, Failure> {
    let bound = |name: &str| -> Result<i64, Failure> {
        let raw = params.get(name).ok_or_else(|| Failure::bad_request(format!("missing bound {name}")))?;
        raw.parse().map_err(|_| Failure::bad_request(format!("bound {name} is not an integer")))
    };
    let (min_row, max_row) = (bound("min_row")?, bound("max_row")?);
    let (min_col, max_col) = (bound("min_col")?, bound("max_col")?);
    if min_row > max_row || min_col > max_col {
        return Err(Failure::bad_request("bounds are inverted"));
    }
    let area = (max_row as i128 - min_row as i128 + 1) * (max_col as i128 - min_col as i128 + 1);
    if area > state.patch_cap as i128 {
        return Err(Failure::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "area_too_large",
            format!("requested {area} cells, the cap is {}", state.patch_cap),
            "parse",
        ));
    }
    let cells = state
        .store
        .records()
        .iter()
        .filter(|r| (min_row..=max_row).contains(&r.grid_row) && (min_col..=max_col).contains(&r.grid_col))
        .map(|r| PatchCell { id: r.id, grid_row: r.grid_row, grid_col: r.grid_col, geo_x: r.geo_x, geo_y: r.geo_y })
        .collect();
    Ok(Json(cells))
}

fn is_relative_inside(p: &Path) -> bool {
    p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

async fn patch_image(State(state): Shared, UrlPath(raw): UrlPath<String>) -> Result<Response, Failure> {
    let id: u64 = raw.parse().map_err(|_| Failure::bad_request(format!("patch id {raw:?} is not an integer")))?;
    let record = state
        .store
        .record(id)
        .map_err(|e| Failure::new(StatusCode::NOT_FOUND, "not_found", e.to_string(), "lookup"))?;
    let rel = Path::new(&record.image_ref);
    if record.image_ref.is_empty() || !is_relative_inside(rel) {
        return Err(Failure::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "missing_image",
            format!("patch {id} has no usable image reference"),
            "load",
        ));
    }
    let bytes = tokio::fs::read(state.data_root.join(rel)).await.map_err(|e| {
        Failure::new(StatusCode::INTERNAL_SERVER_ERROR, "missing_image", format!("patch {id}: {e}"), "load")
    })?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

/// Startup failure with a stable code.
#[derive(Debug, thiserror::Error)]
#[error("{code}: {message}")]
pub struct StartupError {
    pub code: &'static str,
    pub message: String,
}

impl From<Error> for StartupError {
    fn from(e: Error) -> Self {
        StartupError { code: e.code(), message: e.to_string() }
    }
}

/// Loads the data, binds, prints `listening on <addr>` and serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<(), StartupError> {
    let state = AppState::load(&config)?;
    let listener = tokio::net::TcpListener::bind(config.addr)
        .await
        .map_err(|e| StartupError { code: "bind_error", message: format!("{}: {e}", config.addr) })?;
    let addr = listener.local_addr().map_err(|e| StartupError { code: "bind_error", message: e.to_string() })?;
    println!("listening on {addr}");
    let _ = std::io::stdout().flush();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| StartupError { code: "io_error", message: e.to_string() })
}
