//! HTTP service: `POST /v1/recommend` and `GET /v1/health`.
//!
//! Errors are `{"error": {"code": ..., "message": ...}}` with status 400
//! for invalid queries, 503 when a backend is unreachable and 500
//! otherwise.

use std::future::Future;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hirec_core::pipeline::Engine;
use hirec_core::reason::PROMPT_TEMPLATE_VERSION;
use hirec_core::{AblationConfig, PatientQuery, PipelineParams};
use serde_json::json;
use tokio::net::TcpListener;

/// Shared per-process state; the index is loaded once at startup.
#[derive(Clone)]
pub struct AppState {
    pub engine: Engine,
    pub config: AblationConfig,
    pub params: PipelineParams,
    pub omit_timings: bool,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/recommend", post(recommend))
        .route("/v1/health", get(health))
        .with_state(state)
}

pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    let body = json!({"error": {"code": code, "message": message.into()}});
    (status, Json(body)).into_response()
}

async fn recommend(State(state): State<AppState>, body: Bytes) -> Response {
    let query: PatientQuery = match serde_json::from_slice(&body) {
        Ok(q) => q,
        Err(e) => return error(StatusCode::BAD_REQUEST, "MALFORMED_QUERY", e.to_string()),
    };
    if let Err(e) = query.validate() {
        return error(StatusCode::BAD_REQUEST, e.code(), e.to_string());
    }
    let AppState {
        engine,
        config,
        params,
        omit_timings,
    } = state;
    let outcome = tokio::task::spawn_blocking(move || engine.recommend(&query, &config, &params)).await;
    match outcome {
        Ok(Ok(mut result)) => {
            if omit_timings {
                result.clear_timings();
            }
            (StatusCode::OK, Json(result)).into_response()
        }
        Ok(Err(e)) => {
            tracing::warn!(code = e.code(), "recommend failed: {e}");
            let status = if e.is_input_error() {
                StatusCode::BAD_REQUEST
            } else if e.is_unavailable() {
                StatusCode::SERVICE_UNAVAILABLE
            } else {
                StatusCode::INTERNAL_SERVER_ERROR
            };
            error(status, e.code(), e.to_string())
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()),
    }
}

async fn health(State(state): State<AppState>) -> Response {
    let body = json!({
        "status": "ok",
        "name": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "prompt_template_version": PROMPT_TEMPLATE_VERSION,
        "documents": state.engine.knowledge_base().len(),
        "index_entries": state.engine.index().len(),
        "dimension": state.engine.index().dimension(),
        "config": state.config,
        "params": state.params,
    });
    (StatusCode::OK, Json(body)).into_response()
}
