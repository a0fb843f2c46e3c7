//! Read-only HTTP/JSON front end for one trained hurdle model.
//!
//! Every response is a pure function of the request and the loaded artifact,
//! so identical requests get identical bodies.

use std::net::SocketAddr;
use std::sync::Arc;

use alimony_core::api::{
    coefficients_response, importances_response, parse_predict_body, predict_response, ApiError, CoefficientsResponse,
    HealthResponse, SchemaDocument,
};
use alimony_core::forest::ImportanceMethod;
use alimony_core::hurdle::HurdleModel;
use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

pub const DEFAULT_TOP_N: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

impl ServiceConfig {
    pub fn address(&self) -> String {
        format!("{}:{}", self.bind, self.port)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind {address}: {source}")]
    Bind {
        address: String,
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Serve(std::io::Error),
}

struct AppState {
    model: HurdleModel,
    fingerprint: String,
    health: HealthResponse,
    schema: SchemaDocument,
    coefficients: CoefficientsResponse,
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    let body = ApiError {
        error: code.into(),
        field: None,
        message: message.into(),
    };
    (status, Json(body)).into_response()
}

fn internal() -> Response {
    error(StatusCode::INTERNAL_SERVER_ERROR, "internal", "internal server error")
}

async fn health(State(state): State<Arc<AppState>>) -> Json<HealthResponse> {
    Json(state.health.clone())
}

async fn schema(State(state): State<Arc<AppState>>) -> Json<SchemaDocument> {
    Json(state.schema.clone())
}

async fn coefficients(State(state): State<Arc<AppState>>) -> Json<CoefficientsResponse> {
    Json(state.coefficients.clone())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportanceQuery {
    method: Option<ImportanceMethod>,
    top_n: Option<usize>,
}

async fn importances(State(state): State<Arc<AppState>>, query: Result<Query<ImportanceQuery>, QueryRejection>) -> Response {
    let Query(query) = match query {
        Ok(q) => q,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_query", e.body_text()),
    };
    let method = query.method.unwrap_or(ImportanceMethod::FrequencyWeighted);
    let top_n = query.top_n.unwrap_or(DEFAULT_TOP_N);
    Json(importances_response(&state.model, method, top_n)).into_response()
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let (cells, mode) = match parse_predict_body(&body, &state.model.schema) {
        Ok(parsed) => parsed,
        Err(e) => {
            let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::BAD_REQUEST);
            return (status, Json(e.body())).into_response();
        }
    };
    match state.model.predict_case(&cells, mode) {
        Ok(breakdown) => Json(predict_response(&breakdown, &state.fingerprint)).into_response(),
        Err(e) => {
            tracing::error!(error = %e, "prediction failed on a schema-valid request");
            internal()
        }
    }
}

async fn not_found() -> Response {
    error(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

/// The service's routes over an immutable model.
pub fn router(model: HurdleModel) -> Router {
    let fingerprint = model.fingerprint();
    let state = AppState {
        health: HealthResponse {
            status: "ok".into(),
            model_fingerprint: fingerprint.clone(),
            schema_fingerprint: model.schema_fingerprint.clone(),
        },
        schema: SchemaDocument {
            fingerprint: model.schema_fingerprint.clone(),
            schema: model.schema.clone(),
        },
        coefficients: coefficients_response(&model),
        fingerprint,
        model,
    };
    Router::new()
        .route("/health", get(health))
        .route("/schema", get(schema))
        .route("/predict", post(predict))
        .route("/importances", get(importances))
        .route("/coefficients", get(coefficients))
        .fallback(not_found)
        .with_state(Arc::new(state))
}

/// Serves until `shutdown` resolves.
pub async fn serve_with_shutdown(
    listener: TcpListener,
    model: HurdleModel,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    axum::serve(listener, router(model))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServiceError::Serve)
}

/// Binds `config`'s address and serves until Ctrl-C.
pub async fn run(config: &ServiceConfig, model: HurdleModel) -> Result<(), ServiceError> {
    let address = config.address();
    let listener = TcpListener::bind(&address).await.map_err(|source| ServiceError::Bind {
        address: address.clone(),
        source,
    })?;
    let local: Option<SocketAddr> = listener.local_addr().ok();
    tracing::info!(address = ?local, "serving");
    serve_with_shutdown(listener, model, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
