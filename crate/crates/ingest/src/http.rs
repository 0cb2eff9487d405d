use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use fieldledger_core::{ApiError, Verdict};
use fieldledger_store::{is_valid_table_name, Store};
use fieldledger_tracker::Tracker;

use crate::error::IngestError;
use crate::query::{parse_limit, RawFilter};
use crate::service::IngestService;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    pub batch_limit: usize,
    /// Directory served at `/console/`.
    pub console_dir: PathBuf,
}

#[derive(Clone)]
struct AppState {
    service: Arc<IngestService>,
    tracker: Arc<Tracker>,
}

impl IntoResponse for IngestError {
    fn into_response(self) -> Response {
        let status = match self.code() {
            "BATCH_MALFORMED" | "BAD_FILTER" | "INVALID_FLAG" => StatusCode::BAD_REQUEST,
            "NOT_FOUND" => StatusCode::NOT_FOUND,
            "STORAGE_UNAVAILABLE" => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = ApiError {
            error: self.code().to_owned(),
            message: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, IngestError>;

fn now_ms() -> i64 {
    chrono::Utc::now().timestamp_millis()
}

/// Runs blocking service work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, IngestError> + Send + 'static,
) -> Result<T, IngestError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| IngestError::StorageUnavailable(e.to_string()))?
}

async fn post_batch(State(app): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let key = headers
        .get("idempotency-key")
        .and_then(|v| v.to_str().ok())
        .map(str::to_owned);
    let service = app.service.clone();
    match blocking(move || service.ingest_batch(&body, key.as_deref(), now_ms())).await {
        Ok(resp) => Json(resp).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_events(State(app): State<AppState>, Query(raw): Query<RawFilter>) -> ApiResult<Value> {
    let (filter, limit) = raw.parse()?;
    let page = blocking(move || app.service.query_events(&filter, limit, raw.cursor.as_deref())).await?;
    Ok(Json(json!(page)))
}

#[derive(Deserialize)]
struct PageParams {
    limit: Option<String>,
    cursor: Option<String>,
}

async fn get_quarantine(State(app): State<AppState>, Query(p): Query<PageParams>) -> ApiResult<Value> {
    let limit = parse_limit(p.limit.as_deref())?;
    let page = blocking(move || app.service.list_quarantine(limit, p.cursor.as_deref())).await?;
    Ok(Json(json!(page)))
}

#[derive(Deserialize)]
struct FlagBody {
    event_id: String,
    verdict: Verdict,
    #[serde(default)]
    note: String,
    actor: String,
}

async fn post_flag(State(app): State<AppState>, body: Bytes) -> ApiResult<Value> {
    let body: FlagBody =
        serde_json::from_slice(&body).map_err(|e| IngestError::InvalidFlag(e.to_string()))?;
    let flag = blocking(move || {
        app.service
            .flag_record(&body.event_id, body.verdict, &body.note, &body.actor, now_ms())
    })
    .await?;
    Ok(Json(json!(flag)))
}

#[derive(Deserialize)]
struct FlagQuery {
    event_id: Option<String>,
}

async fn get_flags(State(app): State<AppState>, Query(q): Query<FlagQuery>) -> ApiResult<Value> {
    let flags = blocking(move || app.service.active_flags(q.event_id.as_deref())).await?;
    Ok(Json(json!({ "flags": flags })))
}

fn known_table(store: &Store, name: &str) -> Result<(), IngestError> {
    if is_valid_table_name(name) && store.table_exists(name) {
        Ok(())
    } else {
        Err(IngestError::NotFound(format!("table {name}")))
    }
}

async fn get_versions(State(app): State<AppState>, Path(name): Path<String>) -> ApiResult<Value> {
    let store = app.service.store().clone();
    let history = blocking(move || {
        known_table(&store, &name)?;
        Ok(store.history(&name)?)
    })
    .await?;
    Ok(Json(json!({ "versions": history })))
}

#[derive(Deserialize)]
struct RowsQuery {
    version: Option<u64>,
    /// Only the rows added by commit `version`, not the whole snapshot.
    #[serde(default)]
    commit_only: bool,
}

async fn get_rows(State(app): State<AppState>, Path(name): Path<String>, Query(q): Query<RowsQuery>) -> ApiResult<Value> {
    let store = app.service.store().clone();
    let (version, rows) = blocking(move || {
        known_table(&store, &name)?;
        let version = match q.version {
            Some(v) => v,
            None => store.latest_version(&name)?,
        };
        let rows = if q.commit_only {
            let commit = store
                .history(&name)?
                .into_iter()
                .find(|c| c.version == version)
                .ok_or_else(|| IngestError::NotFound(format!("{name} version {version}")))?;
            store.read_commit_rows(&name, &commit)?
        } else {
            store.read_at(&name, version)?.rows
        };
        Ok((version, rows))
    })
    .await?;
    Ok(Json(json!({ "version": version, "rows": rows })))
}

async fn get_runs(State(app): State<AppState>) -> ApiResult<Value> {
    let runs = blocking(move || Ok(app.tracker.list_runs()?)).await?;
    Ok(Json(json!({ "runs": runs })))
}

async fn get_run(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Value> {
    let run = blocking(move || Ok(app.tracker.get_run(&id)?)).await?;
    Ok(Json(json!(run)))
}

/// The full HTTP API plus static console assets.
pub fn router(service: Arc<IngestService>, tracker: Arc<Tracker>, console_dir: PathBuf) -> Router {
    let state = AppState { service, tracker };
    Router::new()
        .route("/v1/events:batch", post(post_batch))
        .route("/v1/events", get(get_events))
        .route("/v1/quarantine", get(get_quarantine))
        .route("/v1/curation/flags", post(post_flag).get(get_flags))
        .route("/v1/tables/{name}/versions", get(get_versions))
        .route("/v1/tables/{name}/rows", get(get_rows))
        .route("/v1/runs", get(get_runs))
        .route("/v1/runs/{id}", get(get_run))
        .nest_service("/console", ServeDir::new(console_dir).append_index_html_on_directories(true))
        .layer(DefaultBodyLimit::max(8 * 1024 * 1024))
        .with_state(state)
}

/// Opens the store, service and tracker for `config`.
pub fn build_router(config: &ServerConfig) -> anyhow::Result<(Router, Arc<IngestService>)> {
    let store = Arc::new(Store::open(&config.data_dir)?);
    let service = Arc::new(IngestService::open(
        store.clone(),
        fieldledger_core::Catalog::builtin()?,
        config.batch_limit,
    )?);
    let tracker = Arc::new(Tracker::open(store)?);
    Ok((router(service.clone(), tracker, config.console_dir.clone()), service))
}

/// A server running on its own thread and runtime; stopped on drop.
pub struct ServerHandle {
    pub addr: SocketAddr,
    pub service: Arc<IngestService>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Starts a server on `127.0.0.1` with an ephemeral port.
pub fn spawn_background(config: &ServerConfig) -> anyhow::Result<ServerHandle> {
    let (app, service) = build_router(config)?;
    let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()?;
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(ServerHandle {
        addr,
        service,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
