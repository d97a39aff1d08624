//! JSON-over-HTTP query service.
//!
//! Handlers share one immutable engine; each search runs on the blocking
//! thread pool so slow scans never stall the async workers.

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hamspace::{parse_code_hex, Error, SearchEngine, SearchResult, SearchStrategy};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    /// Hex query code, most significant digit first.
    #[serde(alias = "query")]
    pub code: String,
    #[serde(default)]
    pub radius: Option<u32>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub strategy: Option<SearchStrategy>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_) | Error::Parse(_) => StatusCode::BAD_REQUEST,
            Error::NotReady(_) => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

#[derive(Clone, Copy)]
enum Mode {
    Radius,
    Knn,
}

async fn run_query(
    engine: Arc<SearchEngine>,
    req: QueryRequest,
    mode: Mode,
) -> Result<Json<SearchResult>, ApiError> {
    if req.radius.is_some() && req.k.is_some() {
        return Err(ApiError::bad_request("give either radius or k, not both"));
    }
    let q = parse_code_hex(&req.code, engine.code_len())?;
    let strategy = req.strategy.unwrap_or_else(|| engine.default_strategy());
    let job = match mode {
        Mode::Radius => {
            let r = req
                .radius
                .ok_or_else(|| ApiError::bad_request("missing `radius`"))?;
            tokio::task::spawn_blocking(move || engine.search(strategy, &q, r))
        }
        Mode::Knn => {
            let k = req.k.ok_or_else(|| ApiError::bad_request("missing `k`"))?;
            tokio::task::spawn_blocking(move || engine.knn(strategy, &q, k))
        }
    };
    let result = job.await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        message: format!("search task failed: {e}"),
    })??;
    Ok(Json(result))
}

async fn search(
    State(engine): State<Arc<SearchEngine>>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Result<Json<SearchResult>, ApiError> {
    run_query(engine, body?.0, Mode::Radius).await
}

async fn knn(
    State(engine): State<Arc<SearchEngine>>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Result<Json<SearchResult>, ApiError> {
    run_query(engine, body?.0, Mode::Knn).await
}

async fn stats(State(engine): State<Arc<SearchEngine>>) -> Json<hamspace::EngineStats> {
    Json(engine.stats())
}

pub fn router(engine: Arc<SearchEngine>) -> Router {
    Router::new()
        .route("/search", post(search))
        .route("/knn", post(knn))
        .route("/stats", get(stats))
        .with_state(engine)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    engine: Arc<SearchEngine>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(shutdown)
        .await
}
