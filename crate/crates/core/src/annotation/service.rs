//! HTTP API over a [`Store`].
//!
//! | route | result |
//! |---|---|
//! | `GET /api/tasks/next?annotator=<id>` | 200 `{pair_id, source, candidate}`, 204 when done |
//! | `POST /api/judgments` | 201, 409 duplicate, 400 bad body or label, 404 unknown pair |
//! | `GET /api/progress` | totals and per-annotator counts |
//! | `GET /api/pairs/{id}` | pair text with current vote counts |
//!
//! Anything else falls through to the static UI directory when configured.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{SecondsFormat, Utc};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use super::{AnnotationError, Judgment, Label, Store, SubmitOutcome};

pub type SharedStore = Arc<Mutex<Store>>;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    /// Directory of static UI assets served at `/`.
    pub ui_dir: Option<PathBuf>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn lock(store: &SharedStore) -> std::sync::MutexGuard<'_, Store> {
    // a panic mid-request cannot leave the store half-updated: journal
    // append precedes the in-memory insert
    store.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

async fn next_task(State(store): State<SharedStore>, Query(query): Query<HashMap<String, String>>) -> Response {
    let Some(annotator) = query.get("annotator") else {
        return error(StatusCode::BAD_REQUEST, "missing annotator query parameter");
    };
    let store = lock(&store);
    match store.next_task(annotator) {
        Ok(Some(pair)) => Json(json!({
            "pair_id": pair.id,
            "source": pair.source,
            "candidate": pair.candidate,
        }))
        .into_response(),
        Ok(None) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => error(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

fn parse_judgment(body: &[u8]) -> Result<Judgment, String> {
    let value: Value = serde_json::from_slice(body).map_err(|e| format!("invalid JSON body: {e}"))?;
    let field = |name: &str| -> Result<&str, String> {
        value
            .get(name)
            .ok_or_else(|| format!("missing field {name}"))?
            .as_str()
            .ok_or_else(|| format!("field {name} must be a string"))
    };
    let label: Label = field("label")?.parse().map_err(|e: AnnotationError| e.to_string())?;
    Judgment::new(field("pair_id")?, field("annotator_id")?, label, Utc::now()).map_err(|e| e.to_string())
}

async fn submit(State(store): State<SharedStore>, body: Bytes) -> Response {
    let judgment = match parse_judgment(&body) {
        Ok(j) => j,
        Err(message) => return error(StatusCode::BAD_REQUEST, message),
    };
    let view = json!({
        "pair_id": judgment.pair_id,
        "annotator_id": judgment.annotator_id,
        "label": judgment.label,
        "ts": judgment.timestamp.to_rfc3339_opts(SecondsFormat::Millis, true),
    });
    let mut store = lock(&store);
    match store.submit(judgment) {
        Ok(SubmitOutcome::Accepted) => (StatusCode::CREATED, Json(view)).into_response(),
        Ok(SubmitOutcome::Duplicate) => error(StatusCode::CONFLICT, "already judged by this annotator"),
        Err(e @ AnnotationError::UnknownPair(_)) => error(StatusCode::NOT_FOUND, e.to_string()),
        Err(e @ (AnnotationError::EmptyAnnotator | AnnotationError::BadLabel(_))) => {
            error(StatusCode::BAD_REQUEST, e.to_string())
        }
        Err(e) => {
            log::error!("judgment not stored: {e}");
            error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
        }
    }
}

async fn progress(State(store): State<SharedStore>) -> Response {
    Json(lock(&store).progress()).into_response()
}

async fn pair(State(store): State<SharedStore>, UrlPath(id): UrlPath<String>) -> Response {
    match lock(&store).pair_status(&id) {
        Some(status) => Json(status).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown pair {id:?}")),
    }
}

pub fn router(store: SharedStore, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/judgments", post(submit))
        .route("/api/progress", get(progress))
        .route("/api/pairs/{id}", get(pair))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn bind(addr: SocketAddr) -> Result<std::net::TcpListener, AnnotationError> {
    let bind_err = |source| AnnotationError::Bind {
        addr: addr.to_string(),
        source,
    };
    let listener = std::net::TcpListener::bind(addr).map_err(bind_err)?;
    listener.set_nonblocking(true).map_err(bind_err)?;
    Ok(listener)
}

fn runtime() -> Result<tokio::runtime::Runtime, AnnotationError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|source| AnnotationError::Io {
            path: PathBuf::from("<runtime>"),
            source,
        })
}

/// Serves until interrupted (Ctrl-C), then shuts down gracefully.
pub fn run_service(store: Store, config: &ServiceConfig) -> Result<(), AnnotationError> {
    let listener = bind(config.addr)?;
    let app = router(Arc::new(Mutex::new(store)), config.ui_dir.clone());
    let rt = runtime()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener).map_err(|source| AnnotationError::Bind {
            addr: config.addr.to_string(),
            source,
        })?;
        log::info!("listening on http://{}", config.addr);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|source| AnnotationError::Io {
                path: PathBuf::from("<server>"),
                source,
            })
    })
}

/// A service running on a background thread.
pub struct ServiceHandle {
    addr: SocketAddr,
    store: SharedStore,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub fn store(&self) -> &SharedStore {
        &self.store
    }

    /// Stops the server and waits for in-flight requests to finish.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds `config.addr` (port 0 picks a free port) and serves on a
/// background thread.
pub fn spawn_service(store: Store, config: &ServiceConfig) -> Result<ServiceHandle, AnnotationError> {
    let listener = bind(config.addr)?;
    let addr = listener.local_addr().map_err(|source| AnnotationError::Bind {
        addr: config.addr.to_string(),
        source,
    })?;
    let store = Arc::new(Mutex::new(store));
    let app = router(store.clone(), config.ui_dir.clone());
    let rt = runtime()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener registers with runtime");
            let result = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
            if let Err(e) = result {
                log::error!("annotation service stopped: {e}");
            }
        });
    });
    Ok(ServiceHandle {
        addr,
        store,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
