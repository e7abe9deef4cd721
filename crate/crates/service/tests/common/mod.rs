#![allow(dead_code)]

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use hnam_core::data::{split_train_val, FeaturePlan, SampleStore};
use hnam_core::fixtures::tiny_config;
use hnam_core::synthetic::{generate, SyntheticSpec};
use hnam_core::train::init_model;
use hnam_service::adjust::AdjustmentLog;
use hnam_service::engine::ForecastEngine;
use hnam_service::server::{router, AppState};
use tower::ServiceExt;

pub const HISTORY: usize = 14;
pub const HORIZON: usize = 7;

/// Untrained model over a small synthetic store; weights are random but
/// fixed by `seed`.
pub fn engine(seed: u64) -> ForecastEngine {
    let spec = SyntheticSpec {
        n_series: 3,
        n_days: 120,
        seed: 5,
        ..SyntheticSpec::default()
    };
    let data = generate(&spec).unwrap();
    let plan = FeaturePlan::fit(&data.dataset, 100, HISTORY, HORIZON);
    let keys: Vec<_> = data.dataset.series.keys().cloned().collect();
    let store = SampleStore::build(&data.dataset, plan, &keys).unwrap();
    let (train, _) =
        split_train_val(store.series(), store.covariates(), store.plan(), 100).unwrap();
    let mut config = tiny_config(store.covariates().clone(), 8, HISTORY, HORIZON);
    config.dropout = 0.0;
    let model = init_model(config, &train, seed).unwrap();
    ForecastEngine::new(model, store, format!("snapshot-{seed}")).unwrap()
}

pub fn app(engine: ForecastEngine, log: AdjustmentLog) -> Router {
    router(Arc::new(AppState::new(engine, log)))
}

pub async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<String>,
) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (
        status,
        to_bytes(resp.into_body(), usize::MAX)
            .await
            .unwrap()
            .to_vec(),
    )
}

pub fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}
