//! Read-only HTTP JSON service over a loaded model.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use designnav::api::{self, ErrorClass, InferRequest, NavigateRequest};
use designnav::bbn::BbnModel;
use designnav::Error;
use serde_json::json;

type Shared = Arc<BbnModel>;

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match api::classify(&self.0) {
            ErrorClass::BadRequest => (StatusCode::BAD_REQUEST, "bad_request"),
            ErrorClass::Unprocessable => (StatusCode::UNPROCESSABLE_ENTITY, "unprocessable"),
            ErrorClass::NotFound => (StatusCode::NOT_FOUND, "not_found"),
            ErrorClass::Internal => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let body = json!({ "error": { "kind": kind, "message": self.0.to_string() } });
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn get_model(State(m): State<Shared>) -> Json<api::ModelSummary> {
    Json(api::model_summary(&m))
}

async fn get_sensitivity(State(m): State<Shared>) -> ApiResult<api::SensitivitySummary> {
    Ok(Json(api::sensitivity(&m)?))
}

async fn get_bins(State(m): State<Shared>) -> Json<designnav::discretize::DiscretizationScheme> {
    Json(api::bins(&m))
}

/// Runs a CPU-bound query off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> designnav::Result<T> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => Ok(Json(r?)),
        Err(e) => Err(Error::InvalidConfig(format!("query task failed: {e}")).into()),
    }
}

async fn post_infer(State(m): State<Shared>, body: Bytes) -> ApiResult<designnav::bbn::Posterior> {
    let req: InferRequest = serde_json::from_slice(&body).map_err(Error::from)?;
    blocking(move || api::infer(&m, &req)).await
}

async fn post_navigate(State(m): State<Shared>, body: Bytes) -> ApiResult<api::NavigateResponse> {
    let req: NavigateRequest = serde_json::from_slice(&body).map_err(Error::from)?;
    blocking(move || api::navigate(&m, &req)).await
}

async fn not_found() -> Response {
    let body = json!({ "error": { "kind": "not_found", "message": "no such endpoint" } });
    (StatusCode::NOT_FOUND, Json(body)).into_response()
}

pub fn router(model: Shared) -> Router {
    Router::new()
        .route("/model", get(get_model))
        .route("/sensitivity", get(get_sensitivity))
        .route("/bins", get(get_bins))
        .route("/infer", post(post_infer))
        .route("/navigate", post(post_navigate))
        .fallback(not_found)
        .with_state(model)
}

pub async fn serve(model: BbnModel, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {addr}: {e}"))?;
    log::info!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(model)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
