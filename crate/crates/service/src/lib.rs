//! HTTP JSON API over a directory of cell containers.
//!
//! Datasets are loaded once at startup; the only mutation is appending a
//! selection annotation. Spatial results are cached by a hash of dataset
//! generation, analysis kind and request body. Computations that outlive
//! the configured budget continue as jobs polled at `/api/jobs/{id}`.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cellscape::table::container::{load_container, save_container};
use cellscape::table::{CategoricalColumn, ProvenanceRecord};
use cellscape::{api, summaries, CellTable, Error};
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tower_http::cors::{AllowOrigin, CorsLayer};

#[derive(Clone, Debug)]
pub struct Config {
    pub data_dir: PathBuf,
    /// Largest number of per-cell rows a single response may carry.
    pub max_payload_cells: usize,
    /// How long a request waits before its computation becomes a job;
    /// `None` always waits.
    pub job_budget: Option<Duration>,
    pub allow_origins: Vec<String>,
    /// Write appended annotations back to the dataset's container.
    pub persist_annotations: bool,
}

impl Config {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            max_payload_cells: 200_000,
            job_budget: Some(Duration::from_secs(5)),
            allow_origins: Vec::new(),
            persist_annotations: false,
        }
    }
}

pub struct Dataset {
    pub path: PathBuf,
    pub table: Arc<CellTable>,
    /// Bumped on every annotation append; part of the cache key.
    pub generation: u64,
}

enum Job {
    Running,
    Done(Arc<Value>),
    Failed(ApiError),
}

pub struct AppState {
    config: Config,
    datasets: RwLock<BTreeMap<String, Dataset>>,
    cache: Mutex<HashMap<String, Arc<Value>>>,
    jobs: Mutex<HashMap<String, Job>>,
}

impl AppState {
    /// Loads every container directly under `config.data_dir`; the
    /// directory name is the dataset id.
    pub fn load(config: Config) -> cellscape::Result<Self> {
        let mut datasets = BTreeMap::new();
        let entries = std::fs::read_dir(&config.data_dir).map_err(|e| Error::Io {
            path: config.data_dir.clone(),
            source: e,
        })?;
        let mut dirs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("manifest.json").is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            let id = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let table = load_container(&dir)?;
            tracing::info!(dataset = %id, n_cells = table.n_cells(), "loaded");
            datasets.insert(
                id,
                Dataset {
                    path: dir,
                    table: Arc::new(table),
                    generation: 0,
                },
            );
        }
        Ok(Self::with_datasets(config, datasets))
    }

    pub fn with_datasets(config: Config, datasets: BTreeMap<String, Dataset>) -> Self {
        Self {
            config,
            datasets: RwLock::new(datasets),
            cache: Mutex::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
        }
    }

    fn dataset(&self, id: &str) -> Result<(Arc<CellTable>, u64), ApiError> {
        let guard = self.datasets.read().expect("registry lock");
        guard
            .get(id)
            .map(|d| (Arc::clone(&d.table), d.generation))
            .ok_or_else(|| ApiError::NotFound(format!("unknown dataset `{id}`")))
    }

    fn dataset_ids(&self) -> Vec<String> {
        self.datasets.read().expect("registry lock").keys().cloned().collect()
    }
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    BadRequest {
        kind: String,
        message: String,
        field: Option<String>,
    },
    PayloadTooLarge(String),
    Internal(String),
}

impl ApiError {
    fn bad(kind: &str, message: impl Into<String>, field: Option<&str>) -> Self {
        ApiError::BadRequest {
            kind: kind.to_string(),
            message: message.into(),
            field: field.map(str::to_string),
        }
    }

    fn parts(&self) -> (StatusCode, Value) {
        match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, json!({ "error": "NotFound", "message": m })),
            ApiError::BadRequest { kind, message, field } => (
                StatusCode::BAD_REQUEST,
                json!({ "error": kind, "message": message, "field": field }),
            ),
            ApiError::PayloadTooLarge(m) => (
                StatusCode::PAYLOAD_TOO_LARGE,
                json!({
                    "error": "PayloadTooLarge",
                    "message": m,
                    "hint": "request a downsample (e.g. `max` on /cells) or analyze a subset",
                }),
            ),
            ApiError::Internal(detail) => {
                let id = uuid::Uuid::new_v4().to_string();
                tracing::error!(error_id = %id, %detail, "internal error");
                (
                    StatusCode::INTERNAL_SERVER_ERROR,
                    json!({ "error": "Internal", "id": id }),
                )
            }
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } => ApiError::Internal(e.to_string()),
            other => ApiError::BadRequest {
                kind: other.kind().to_string(),
                message: other.to_string(),
                field: other.field().map(str::to_string),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = self.parts();
        (status, Json(body)).into_response()
    }
}

impl Clone for ApiError {
    fn clone(&self) -> Self {
        match self {
            ApiError::NotFound(m) => ApiError::NotFound(m.clone()),
            ApiError::BadRequest { kind, message, field } => ApiError::BadRequest {
                kind: kind.clone(),
                message: message.clone(),
                field: field.clone(),
            },
            ApiError::PayloadTooLarge(m) => ApiError::PayloadTooLarge(m.clone()),
            ApiError::Internal(m) => ApiError::Internal(m.clone()),
        }
    }
}

type ApiResult = Result<Response, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    let cors = if state.config.allow_origins.is_empty() {
        None
    } else {
        let origins: Vec<HeaderValue> = state
            .config
            .allow_origins
            .iter()
            .filter_map(|o| HeaderValue::from_str(o).ok())
            .collect();
        Some(
            CorsLayer::new()
                .allow_origin(AllowOrigin::list(origins))
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([axum::http::header::CONTENT_TYPE]),
        )
    };
    let app = Router::new()
        .route("/api/health", get(health))
        .route("/api/datasets", get(list_datasets))
        .route("/api/datasets/{id}", get(get_dataset))
        .route("/api/datasets/{id}/cells", get(cells))
        .route("/api/datasets/{id}/summaries/{kind}", post(summary))
        .route("/api/datasets/{id}/spatial/{kind}", post(spatial))
        .route("/api/datasets/{id}/annotations", post(add_annotation))
        .route("/api/jobs/{id}", get(job))
        .with_state(state);
    match cors {
        Some(layer) => app.layer(layer),
        None => app,
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state)).await
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({ "status": "ok", "datasets": state.dataset_ids().len() }))
}

fn describe(id: &str, table: &CellTable) -> Value {
    let annotations: Vec<Value> = table
        .annotations()
        .iter()
        .map(|(name, col)| json!({ "name": name, "categories": col.categories() }))
        .collect();
    let bounds = table
        .bounding_box()
        .map(|(xmin, xmax, ymin, ymax)| json!({ "xmin": xmin, "xmax": xmax, "ymin": ymin, "ymax": ymax }));
    json!({
        "id": id,
        "n_cells": table.n_cells(),
        "slide_label": table.slide_label(),
        "features": table.feature_names(),
        "layers": table.layers().keys().collect::<Vec<_>>(),
        "annotations": annotations,
        "associated": table.associated().keys().collect::<Vec<_>>(),
        "bounds": bounds,
    })
}

async fn list_datasets(State(state): State<Arc<AppState>>) -> Json<Value> {
    let guard = state.datasets.read().expect("registry lock");
    Json(Value::Array(
        guard.iter().map(|(id, d)| describe(id, &d.table)).collect(),
    ))
}

async fn get_dataset(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let (table, _) = state.dataset(&id)?;
    Ok(Json(describe(&id, &table)).into_response())
}

fn parse_body(body: &Bytes) -> Result<Value, ApiError> {
    if body.is_empty() {
        return Ok(json!({}));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad("InvalidJson", e.to_string(), Some("body")))
}

fn query_usize(q: &HashMap<String, String>, name: &str) -> Result<Option<usize>, ApiError> {
    q.get(name)
        .map(|v| {
            v.parse()
                .map_err(|_| ApiError::bad("InvalidParameter", format!("`{name}` must be a non-negative integer"), Some(name)))
        })
        .transpose()
}

async fn cells(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let (table, _) = state.dataset(&id)?;
    let n = table.n_cells();
    let max = query_usize(&q, "max")?.unwrap_or(n);
    let seed = q
        .get("seed")
        .map(|s| s.parse::<u64>())
        .transpose()
        .map_err(|_| ApiError::bad("InvalidParameter", "`seed` must be an unsigned integer", Some("seed")))?
        .unwrap_or(0);
    if max.min(n) > state.config.max_payload_cells {
        return Err(ApiError::PayloadTooLarge(format!(
            "{} cells requested, limit is {}",
            max.min(n),
            state.config.max_payload_cells
        )));
    }
    let fields: Vec<&str> = q
        .get("fields")
        .map(|f| f.split(',').filter(|s| !s.is_empty()).collect())
        .unwrap_or_else(|| vec!["coords"]);
    let mut annotations = Vec::new();
    let mut features = Vec::new();
    let mut coords = false;
    for f in &fields {
        match f.split_once(':') {
            None if *f == "coords" => coords = true,
            Some(("annotation", name)) => annotations.push(name.to_string()),
            Some(("feature", name)) => features.push(name.to_string()),
            _ => {
                return Err(ApiError::bad(
                    "InvalidParameter",
                    format!("unknown field `{f}`; use coords, annotation:NAME or feature:NAME"),
                    Some("fields"),
                ))
            }
        }
    }
    let stratify_by = q.get("stratify_by").cloned();
    let layer = q.get("layer").cloned();
    let body = tokio::task::spawn_blocking(move || -> Result<Value, ApiError> {
        let sample = summaries::scatter_downsample(&table, max.max(1), stratify_by.as_deref(), seed, &annotations)?;
        let mut out = json!({
            "dataset": id,
            "n_total": sample.n_total,
            "n": sample.indices.len(),
            "seed": seed,
            "indices": sample.indices,
            "annotations": sample.annotations,
        });
        if coords {
            out["x"] = json!(sample.x);
            out["y"] = json!(sample.y);
        }
        let m = table.layer(layer.as_deref().unwrap_or(cellscape::table::FEATURES))?;
        let mut feats = serde_json::Map::new();
        for name in &features {
            let j = table.feature_index(name)?;
            let values: Vec<f32> = sample.indices.iter().map(|&i| m.get(i, j)).collect();
            feats.insert(name.clone(), json!(values));
        }
        out["features"] = Value::Object(feats);
        Ok(out)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(body).into_response())
}

fn cache_key(id: &str, generation: u64, kind: &str, body: &Value) -> String {
    let mut h = Sha256::new();
    h.update(format!("{id}\n{generation}\n{kind}\n{body}"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs `work` off the async runtime. Returns the result if it finishes
/// within the budget, otherwise a 202 with a job id; the finished result
/// also lands in the cache under `key`.
async fn run_budgeted(
    state: &Arc<AppState>,
    key: Option<String>,
    work: impl FnOnce() -> cellscape::Result<Value> + Send + 'static,
) -> Result<Result<Arc<Value>, String>, ApiError> {
    let mut handle = tokio::task::spawn_blocking(work);
    let finished = match state.config.job_budget {
        None => Some((&mut handle).await),
        Some(budget) => tokio::time::timeout(budget, &mut handle).await.ok(),
    };
    let settle = |joined: Result<cellscape::Result<Value>, tokio::task::JoinError>| -> Result<Arc<Value>, ApiError> {
        let value = Arc::new(joined.map_err(|e| ApiError::Internal(e.to_string()))??);
        Ok(value)
    };
    if let Some(joined) = finished {
        let value = settle(joined)?;
        if let Some(k) = key {
            state.cache.lock().expect("cache lock").insert(k, Arc::clone(&value));
        }
        return Ok(Ok(value));
    }
    let job_id = uuid::Uuid::new_v4().to_string();
    state.jobs.lock().expect("jobs lock").insert(job_id.clone(), Job::Running);
    let st = Arc::clone(state);
    let jid = job_id.clone();
    tokio::spawn(async move {
        let outcome = match settle(handle.await) {
            Ok(value) => {
                if let Some(k) = key {
                    st.cache.lock().expect("cache lock").insert(k, Arc::clone(&value));
                }
                Job::Done(value)
            }
            Err(e) => Job::Failed(e),
        };
        st.jobs.lock().expect("jobs lock").insert(jid, outcome);
    });
    Ok(Err(job_id))
}

fn accepted(job_id: &str) -> Response {
    (
        StatusCode::ACCEPTED,
        Json(json!({ "job_id": job_id, "status": "running", "poll": format!("/api/jobs/{job_id}") })),
    )
        .into_response()
}

async fn summary(
    State(state): State<Arc<AppState>>,
    UrlPath((id, kind)): UrlPath<(String, String)>,
    body: Bytes,
) -> ApiResult {
    let (table, _) = state.dataset(&id)?;
    if !api::SUMMARY_KINDS.contains(&kind.as_str()) {
        return Err(ApiError::NotFound(format!("unknown summary `{kind}`")));
    }
    let params = parse_body(&body)?;
    match run_budgeted(&state, None, move || api::run_summary(&table, &kind, &params)).await? {
        Ok(value) => Ok(Json(value.as_ref().clone()).into_response()),
        Err(job_id) => Ok(accepted(&job_id)),
    }
}

fn cached_response(value: &Value, hit: bool) -> Response {
    let tag = if hit { "hit" } else { "miss" };
    let mut resp = Json(json!({ "cache": tag, "result": value })).into_response();
    resp.headers_mut().insert("cache", HeaderValue::from_static(tag));
    resp
}

async fn spatial(
    State(state): State<Arc<AppState>>,
    UrlPath((id, kind)): UrlPath<(String, String)>,
    body: Bytes,
) -> ApiResult {
    let (table, generation) = state.dataset(&id)?;
    if !api::SPATIAL_KINDS.contains(&kind.as_str()) {
        return Err(ApiError::NotFound(format!("unknown spatial analysis `{kind}`")));
    }
    if api::is_per_cell(&kind) && table.n_cells() > state.config.max_payload_cells {
        return Err(ApiError::PayloadTooLarge(format!(
            "`{kind}` returns one row per cell; dataset has {} cells, limit is {}",
            table.n_cells(),
            state.config.max_payload_cells
        )));
    }
    let params = parse_body(&body)?;
    let key = cache_key(&id, generation, &kind, &params);
    if let Some(hit) = state.cache.lock().expect("cache lock").get(&key).cloned() {
        return Ok(cached_response(&hit, true));
    }
    match run_budgeted(&state, Some(key), move || api::run_spatial(&table, &kind, &params)).await? {
        Ok(value) => Ok(cached_response(&value, false)),
        Err(job_id) => Ok(accepted(&job_id)),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectionBody {
    name: String,
    indices: Vec<usize>,
    #[serde(default = "default_selected")]
    label: String,
    #[serde(default)]
    other_label: Option<String>,
}

fn default_selected() -> String {
    "selected".to_string()
}

async fn add_annotation(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult {
    let params = parse_body(&body)?;
    let sel: SelectionBody = api::parse(&params)?;
    if sel.indices.len() > state.config.max_payload_cells {
        return Err(ApiError::PayloadTooLarge(format!(
            "{} indices submitted, limit is {}",
            sel.indices.len(),
            state.config.max_payload_cells
        )));
    }
    let mut guard = state.datasets.write().expect("registry lock");
    let dataset = guard
        .get_mut(&id)
        .ok_or_else(|| ApiError::NotFound(format!("unknown dataset `{id}`")))?;
    let n = dataset.table.n_cells();
    if let Some(&bad) = sel.indices.iter().find(|&&i| i >= n) {
        return Err(ApiError::bad(
            "InvalidParameter",
            format!("index {bad} out of range for {n} cells"),
            Some("indices"),
        ));
    }
    let mut chosen = vec![false; n];
    for &i in &sel.indices {
        chosen[i] = true;
    }
    let labels = chosen
        .iter()
        .map(|&c| if c { Some(sel.label.as_str()) } else { sel.other_label.as_deref() });
    let column = CategoricalColumn::from_optional_labels(labels);
    let categories = column.categories().to_vec();
    let n_selected = chosen.iter().filter(|&&c| c).count();
    let record = ProvenanceRecord::new(
        "add_selection_annotation",
        json!({ "name": sel.name, "n_selected": n_selected, "label": sel.label, "other_label": sel.other_label }),
    );
    let table = dataset.table.with_annotation(&sel.name, column, record)?;
    if state.config.persist_annotations {
        save_container(&table, &dataset.path)?;
    }
    dataset.table = Arc::new(table);
    dataset.generation += 1;
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "dataset": id,
            "name": sel.name,
            "n_selected": n_selected,
            "categories": categories,
            "persisted": state.config.persist_annotations,
        })),
    )
        .into_response())
}

async fn job(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let jobs = state.jobs.lock().expect("jobs lock");
    match jobs.get(&id) {
        None => Err(ApiError::NotFound(format!("unknown job `{id}`"))),
        Some(Job::Running) => Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": id, "status": "running" }))).into_response()),
        Some(Job::Done(v)) => Ok(Json(json!({ "job_id": id, "status": "done", "result": v.as_ref() })).into_response()),
        Some(Job::Failed(e)) => Err(e.clone()),
    }
}

/// Registry from in-memory tables, for tests and embedding.
pub fn datasets_from_tables(tables: Vec<(String, CellTable)>, base: &Path) -> BTreeMap<String, Dataset> {
    tables
        .into_iter()
        .map(|(id, t)| {
            let path = base.join(&id);
            (
                id,
                Dataset {
                    path,
                    table: Arc::new(t),
                    generation: 0,
                },
            )
        })
        .collect()
}
