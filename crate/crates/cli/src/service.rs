//! HTTP surface: `POST /query`, `POST /classify`, `GET /healthz`.
//!
//! Work runs on the blocking pool, so slow describers do not stall the
//! reactor. Every response carries an `x-latency-ms` header; query and
//! classify bodies also carry `latency_ms`.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Request, State};
use axum::http::{HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gnssrag_core::describer::Description;
use gnssrag_core::promptkit::{DetailLevel, GenParams};
use gnssrag_core::tasks::Prediction;
use gnssrag_core::vectorstore::SearchHit;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use crate::error::AppError;
use crate::pipeline::{ClassifyInput, Pipeline, QueryRequest, SnapshotInput, StageTimings};

/// Request bodies above this size are refused with 413.
pub const MAX_BODY_BYTES: usize = 1 << 20;
pub const LATENCY_HEADER: &str = "x-latency-ms";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryBody {
    pub snapshot_id: Option<u64>,
    pub snapshot_b64: Option<String>,
    pub question: String,
    #[serde(default)]
    pub detail_level: DetailLevel,
    pub k: Option<usize>,
    pub params: Option<GenParams>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyBody {
    pub snapshot_id: Option<u64>,
    pub snapshot_b64: Option<String>,
    pub vector: Option<Vec<f32>>,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryResponse {
    pub description: Description,
    pub context: Vec<SearchHit>,
    pub latency_ms: f64,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyResponse {
    #[serde(flatten)]
    pub prediction: Prediction,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<&'static str>,
}

fn snapshot_input(id: Option<u64>, b64: Option<String>) -> Option<SnapshotInput> {
    match (id, b64) {
        (Some(id), None) => Some(SnapshotInput::Id(id)),
        (None, Some(data)) => Some(SnapshotInput::Inline(data)),
        _ => None,
    }
}

impl QueryBody {
    pub fn into_request(self) -> Result<QueryRequest, AppError> {
        let input = snapshot_input(self.snapshot_id, self.snapshot_b64).ok_or(AppError::BadInput {
            field: "snapshot_id",
            reason: "give exactly one of snapshot_id and snapshot_b64".into(),
        })?;
        Ok(QueryRequest {
            input,
            question: self.question,
            detail_level: self.detail_level,
            k: self.k,
            params: self.params,
            retrieve: true,
        })
    }
}

impl ClassifyBody {
    pub fn into_input(self) -> Result<ClassifyInput, AppError> {
        match (snapshot_input(self.snapshot_id, self.snapshot_b64.clone()), self.vector) {
            (Some(input), None) => Ok(ClassifyInput::Snapshot(input)),
            (None, Some(v)) if self.snapshot_id.is_none() && self.snapshot_b64.is_none() => Ok(ClassifyInput::Vector(v)),
            _ => Err(AppError::BadInput {
                field: "snapshot_id",
                reason: "give exactly one of snapshot_id, snapshot_b64 and vector".into(),
            }),
        }
    }
}

fn status_of(error: &AppError) -> StatusCode {
    if error.is_backend() {
        StatusCode::BAD_GATEWAY
    } else if matches!(error, AppError::NotFound(_)) {
        StatusCode::NOT_FOUND
    } else if error.is_input() {
        StatusCode::BAD_REQUEST
    } else {
        StatusCode::INTERNAL_SERVER_ERROR
    }
}

fn error_response(error: &AppError) -> Response {
    let field = match error {
        AppError::BadInput { field, .. } => Some(field.to_string()),
        AppError::Config { field, .. } => Some(field.clone()),
        _ => None,
    };
    let body = ErrorBody {
        error: error.to_string(),
        field,
        stage: error.stage().map(|s| s.name()),
    };
    (status_of(error), Json(body)).into_response()
}

fn bad_body(field: String, error: String) -> Response {
    let body = ErrorBody {
        error,
        field: Some(field),
        stage: None,
    };
    (StatusCode::BAD_REQUEST, Json(body)).into_response()
}

/// Parses a JSON body, naming the offending field on failure.
#[allow(clippy::result_large_err)]
fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, Response> {
    let mut de = serde_json::Deserializer::from_slice(body);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        bad_body(path, e.into_inner().to_string())
    })?;
    de.end().map_err(|e| bad_body(".".into(), e.to_string()))?;
    Ok(value)
}

async fn blocking<T, F>(work: F) -> Result<T, AppError>
where
    F: FnOnce() -> Result<T, AppError> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(work).await {
        Ok(result) => result,
        Err(join) => Err(AppError::Internal(format!("worker failed: {join}"))),
    }
}

#[derive(Clone)]
struct AppState {
    pipeline: Arc<Pipeline>,
}

async fn healthz(State(state): State<AppState>) -> Response {
    let body = serde_json::json!({"status": "ok", "index_size": state.pipeline.index().len()});
    Json(body).into_response()
}

async fn query(State(state): State<AppState>, body: Bytes) -> Response {
    let started = Instant::now();
    let request = match parse_body::<QueryBody>(&body) {
        Ok(b) => b,
        Err(response) => return response,
    };
    let request = match request.into_request() {
        Ok(r) => r,
        Err(e) => return error_response(&e),
    };
    let pipeline = state.pipeline.clone();
    match blocking(move || pipeline.query(&request)).await {
        Ok(outcome) => {
            let context = outcome.hits().to_vec();
            Json(QueryResponse {
                description: outcome.description,
                context,
                latency_ms: started.elapsed().as_secs_f64() * 1e3,
                timings: outcome.timings,
            })
            .into_response()
        }
        Err(e) => error_response(&e),
    }
}

async fn classify(State(state): State<AppState>, body: Bytes) -> Response {
    let started = Instant::now();
    let body = match parse_body::<ClassifyBody>(&body) {
        Ok(b) => b,
        Err(response) => return response,
    };
    let k = body.k;
    let input = match body.into_input() {
        Ok(i) => i,
        Err(e) => return error_response(&e),
    };
    let pipeline = state.pipeline.clone();
    match blocking(move || pipeline.classify(&input, k)).await {
        Ok(prediction) => Json(ClassifyResponse {
            prediction,
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        })
        .into_response(),
        Err(e) => error_response(&e),
    }
}

async fn latency_header(request: Request, next: Next) -> Response {
    let started = Instant::now();
    let mut response = next.run(request).await;
    let elapsed = format!("{:.3}", started.elapsed().as_secs_f64() * 1e3);
    if let Ok(value) = HeaderValue::from_str(&elapsed) {
        response.headers_mut().insert(LATENCY_HEADER, value);
    }
    response
}

pub fn router(pipeline: Pipeline) -> Router {
    let state = AppState {
        pipeline: Arc::new(pipeline),
    };
    Router::new()
        .route("/healthz", get(healthz))
        .route("/query", post(query))
        .route("/classify", post(classify))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .layer(middleware::from_fn(latency_header))
        .with_state(state)
}

/// Serves until the process ends.
pub fn serve_forever(pipeline: Pipeline, addr: SocketAddr, on_bound: impl FnOnce(SocketAddr)) -> io::Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        on_bound(listener.local_addr()?);
        axum::serve(listener, router(pipeline)).await
    })
}

/// A server on a background thread, stopped on drop.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn url(&self) -> String {
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

/// Binds `addr` (port 0 picks a free one) and serves on a background thread.
pub fn spawn(pipeline: Pipeline, addr: SocketAddr) -> io::Result<ServerHandle> {
    let runtime = tokio::runtime::Runtime::new()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = thread::spawn(move || {
        runtime.block_on(async move {
            axum::serve(listener, router(pipeline))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
