//! HTTP routes over a [`ForecastEngine`].

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::sync::Mutex;

use crate::adjust::AdjustmentLog;
use crate::api::{
    check_version, AdjustRequest, ErrorResponse, ForecastRequest, WhatIfRequest, API_VERSION,
};
use crate::engine::ForecastEngine;
use crate::error::{ErrorClass, Result, ServiceError};
use crate::scenario::ForecastSource;

pub struct AppState {
    pub engine: ForecastEngine,
    /// Single writer for the adjustment log; also guards the id registry.
    log: Mutex<Registry>,
}

struct Registry {
    log: AdjustmentLog,
    sources: HashMap<String, ForecastSource>,
}

impl AppState {
    pub fn new(engine: ForecastEngine, log: AdjustmentLog) -> Self {
        let sources = log
            .records()
            .iter()
            .map(|r| (r.forecast_id.clone(), r.source.clone()))
            .collect();
        Self {
            engine,
            log: Mutex::new(Registry { log, sources }),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorResponse {
            v: API_VERSION,
            error: self.class,
            message: self.message,
        };
        json_response(self.class.status(), &body)
    }
}

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    match serde_json::to_vec(body) {
        Ok(bytes) => (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

fn ok<T: Serialize>(body: &T) -> Response {
    json_response(StatusCode::OK, body)
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T> {
    let value: serde_json::Value = serde_json::from_slice(body).map_err(|e| {
        ServiceError::new(ErrorClass::InvalidRequest, format!("malformed JSON: {e}"))
    })?;
    match value.get("v").and_then(|v| v.as_u64()) {
        Some(v) => check_version(v as u32)?,
        None => {
            return Err(ServiceError::new(
                ErrorClass::InvalidRequest,
                "missing version field `v`",
            ))
        }
    }
    serde_json::from_value(value)
        .map_err(|e| ServiceError::new(ErrorClass::InvalidRequest, e.to_string()))
}

async fn meta(State(state): State<Arc<AppState>>) -> Response {
    ok(&state.engine.meta())
}

async fn series(State(state): State<Arc<AppState>>) -> Response {
    match state.engine.series() {
        Ok(body) => ok(&body),
        Err(e) => e.into_response(),
    }
}

async fn respond(state: &AppState, source: ForecastSource) -> Result<Response> {
    let id = state.engine.id(&source);
    let adjustments = state
        .log
        .lock()
        .await
        .log
        .for_forecast(&id)
        .cloned()
        .collect();
    let body = state.engine.respond_with(&source, adjustments)?;
    state.log.lock().await.sources.entry(id).or_insert(source);
    Ok(ok(&body))
}

async fn forecast(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let run = async {
        let req: ForecastRequest = parse(&body)?;
        let source = ForecastSource {
            series: req.series,
            origin: req.origin,
            overrides: Vec::new(),
        };
        respond(&state, source).await
    };
    run.await.unwrap_or_else(IntoResponse::into_response)
}

async fn whatif(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let run = async {
        let req: WhatIfRequest = parse(&body)?;
        let source = ForecastSource {
            series: req.series,
            origin: req.origin,
            overrides: req.overrides,
        };
        respond(&state, source).await
    };
    run.await.unwrap_or_else(IntoResponse::into_response)
}

async fn adjust(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let run = async {
        let req: AdjustRequest = parse(&body)?;
        let mut reg = state.log.lock().await;
        let source = reg.sources.get(&req.forecast_id).cloned().ok_or_else(|| {
            ServiceError::new(
                ErrorClass::ForecastNotFound,
                format!("forecast `{}` has not been issued", req.forecast_id),
            )
        })?;
        let mut adjustment = req.adjustment;
        adjustment.timestamp.get_or_insert_with(chrono::Utc::now);
        let body = state.engine.adjust(&source, adjustment, &mut reg.log)?;
        Ok::<_, ServiceError>(ok(&body))
    };
    run.await.unwrap_or_else(IntoResponse::into_response)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/meta", get(meta))
        .route("/series", get(series))
        .route("/forecast", post(forecast))
        .route("/whatif", post(whatif))
        .route("/adjust", post(adjust))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, bind: &str) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
