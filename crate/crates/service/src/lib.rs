//! HTTP API for fields, assessments, cross-consistency judgments, pinned
//! exploration and analysis runs. Everything lives under `/api/v1` and speaks
//! JSON; errors are `{code, message, path}`.

pub mod analysis;
pub mod error;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gma_core::Execution;
use serde::de::DeserializeOwned;
use serde_json::Value;

pub use analysis::Stage;
pub use error::{ApiError, ApiResult, ErrorBody};
pub use store::Store;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_DATA_DIR: &str = "gma-data";
/// Largest unconstrained configuration count explore will count.
pub const DEFAULT_COMPUTE_BUDGET: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
    pub compute_budget: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: DEFAULT_BIND.parse().expect("valid default address"),
            data_dir: PathBuf::from(DEFAULT_DATA_DIR),
            compute_budget: DEFAULT_COMPUTE_BUDGET,
        }
    }
}

impl ServiceConfig {
    /// Reads `GMA_BIND`, `GMA_DATA_DIR` and `GMA_COMPUTE_BUDGET`, falling back
    /// to the defaults for unset variables.
    pub fn from_env() -> Result<Self, String> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        let mut c = ServiceConfig::default();
        if let Some(b) = get("GMA_BIND") {
            c.bind = b.parse().map_err(|e| format!("GMA_BIND `{b}`: {e}"))?;
        }
        if let Some(d) = get("GMA_DATA_DIR") {
            c.data_dir = PathBuf::from(d);
        }
        if let Some(n) = get("GMA_COMPUTE_BUDGET") {
            c.compute_budget = n
                .replace('_', "")
                .parse()
                .map_err(|e| format!("GMA_COMPUTE_BUDGET `{n}`: {e}"))?;
        }
        Ok(c)
    }
}

type AppState = Arc<Store>;

fn parse_body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    let text = if bytes.is_empty() { b"{}".as_slice() } else { bytes };
    let de = &mut serde_json::Deserializer::from_slice(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", e.into_inner().to_string()).at(path)
    })
}

/// Runs blocking store work off the async executor.
async fn blocking<T: Send + 'static>(
    store: AppState,
    f: impl FnOnce(&Store) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn health() -> Json<Value> {
    Json(serde_json::json!({"status": "ok", "version": env!("CARGO_PKG_VERSION")}))
}

async fn list_fields(State(s): State<AppState>) -> Json<Vec<store::FieldSummary>> {
    Json(s.list())
}

async fn create_field(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req = parse_body(&body)?;
    let view = blocking(s, move |st| st.create(req)).await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn get_field(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<store::FieldView>> {
    blocking(s, move |st| st.get(&id)).await.map(Json)
}

async fn put_field(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<store::FieldView>> {
    let req = parse_body(&body)?;
    blocking(s, move |st| st.update(&id, req)).await.map(Json)
}

async fn delete_field(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    blocking(s, move |st| st.delete(&id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn post_responses(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<store::ScoresSummary>> {
    let req = parse_body(&body)?;
    blocking(s, move |st| st.upload_responses(&id, req)).await.map(Json)
}

async fn get_judgments(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<store::JudgmentsView>> {
    blocking(s, move |st| st.judgments(&id)).await.map(Json)
}

async fn put_judgments(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<store::JudgmentsView>> {
    let req = parse_body(&body)?;
    blocking(s, move |st| st.put_judgments(&id, req)).await.map(Json)
}

/// `pin` may repeat or hold comma-separated ids; `cca` defaults to true.
fn parse_explore_query(raw: Option<&str>) -> ApiResult<(Vec<String>, bool)> {
    let mut pins = Vec::new();
    let mut cca = true;
    for (k, v) in form_urlencoded::parse(raw.unwrap_or_default().as_bytes()) {
        match k.as_ref() {
            "pin" => pins.extend(v.split(',').map(str::trim).filter(|p| !p.is_empty()).map(String::from)),
            "cca" => {
                cca = match v.as_ref() {
                    "true" | "1" | "on" => true,
                    "false" | "0" | "off" => false,
                    other => {
                        return Err(ApiError::new(
                            StatusCode::BAD_REQUEST,
                            "invalid_query",
                            format!("cca must be true or false, not `{other}`"),
                        )
                        .at("cca"))
                    }
                }
            }
            other => {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "invalid_query",
                    format!("unknown query parameter `{other}`"),
                )
                .at(other.to_string()))
            }
        }
    }
    Ok((pins, cca))
}

async fn explore(
    State(s): State<AppState>,
    Path(id): Path<String>,
    RawQuery(q): RawQuery,
) -> ApiResult<Json<store::ExploreResult>> {
    let (pins, cca) = parse_explore_query(q.as_deref())?;
    blocking(s, move |st| st.explore(&id, &pins, cca)).await.map(Json)
}

async fn run_analysis(
    State(s): State<AppState>,
    Path((id, stage)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Response> {
    let stage: Stage = stage.parse()?;
    let params: Value = if body.is_empty() { Value::Null } else { parse_body(&body)? };
    let view = blocking(s, move |st| st.run_stage(&id, stage, &params)).await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn get_artifact(
    State(s): State<AppState>,
    Path((id, aid)): Path<(String, String)>,
) -> ApiResult<Json<store::ArtifactView>> {
    blocking(s, move |st| st.artifact(&id, &aid)).await.map(Json)
}

/// The stored artifact document, byte for byte.
async fn get_artifact_raw(State(s): State<AppState>, Path((id, aid)): Path<(String, String)>) -> ApiResult<Response> {
    let bytes = blocking(s, move |st| {
        st.artifact(&id, &aid)?;
        st.artifact_bytes(&aid)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/json; charset=utf-8")], bytes).into_response())
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(store: Arc<Store>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/fields", get(list_fields).post(create_field))
        .route("/fields/{id}", get(get_field).put(put_field).delete(delete_field))
        .route("/fields/{id}/responses", post(post_responses))
        .route("/fields/{id}/judgments", get(get_judgments).put(put_judgments))
        .route("/fields/{id}/explore", get(explore))
        .route("/fields/{id}/analysis/{stage}", post(run_analysis))
        .route("/fields/{id}/artifacts/{aid}", get(get_artifact))
        .route("/fields/{id}/artifacts/{aid}/raw", get(get_artifact_raw));
    Router::new()
        .nest("/api/v1", api)
        .fallback(fallback)
        .with_state(store)
}

/// Opens the store and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let store = Store::open(&config.data_dir, config.compute_budget, Execution::default())
        .map_err(|e| std::io::Error::other(e.body.message))?;
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    eprintln!(
        "gma service on http://{}/api/v1 (data {}, compute budget {})",
        listener.local_addr()?,
        config.data_dir.display(),
        config.compute_budget
    );
    axum::serve(listener, router(Arc::new(store)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
