//! HTTP endpoints: meta, series, forecast, what-if and adjustment.

mod common;

use common::{app, call, engine, json, HORIZON};
use hnam_service::adjust::{replay, AdjustmentLog};
use hnam_service::api::ForecastResponse;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const SERIES: &str = r#"{"product_id":"item_001","store_id":"store_1"}"#;

fn forecast_body(origin: &str) -> String {
    format!(r#"{{"v":1,"series":{SERIES},"origin":"{origin}"}}"#)
}

fn whatif_body(origin: &str, overrides: serde_json::Value) -> String {
    format!(r#"{{"v":1,"series":{SERIES},"origin":"{origin}","overrides":{overrides}}}"#)
}

#[tokio::test]
async fn meta_lists_hierarchy_and_vocabularies() {
    let app = app(engine(1), AdjustmentLog::in_memory());
    let (status, body) = call(&app, "GET", "/meta", None).await;
    assert_eq!(status, 200);
    let meta = json(&body);
    assert_eq!(meta["v"], 1);
    assert_eq!(
        meta["hierarchy"],
        json!(["weekday", "relative_price", "promotion", "holiday"])
    );
    assert_eq!(meta["vocabularies"]["promotion"], json!(["0", "1"]));
    assert_eq!(meta["vocabularies"]["holiday"], json!(["", "holiday"]));
    assert_eq!(meta["snapshot"], "snapshot-1");
}

#[tokio::test]
async fn series_lists_valid_origins() {
    let app = app(engine(1), AdjustmentLog::in_memory());
    let (status, body) = call(&app, "GET", "/series", None).await;
    assert_eq!(status, 200);
    let list = json(&body);
    let entries = list["series"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    // history 14, horizon 7, 120 days from 2021-01-04
    assert_eq!(entries[0]["first_origin"], "2021-01-18");
    assert_eq!(entries[0]["last_origin"], "2021-04-27");
}

#[tokio::test]
async fn forecast_is_decomposed_and_consistent() {
    let app = app(engine(1), AdjustmentLog::in_memory());
    let (status, body) = call(&app, "POST", "/forecast", Some(forecast_body("2021-03-01"))).await;
    assert_eq!(status, 200);
    let r: ForecastResponse = serde_json::from_slice(&body).unwrap();
    let f = &r.forecast;
    assert_eq!(f.horizon(), HORIZON);
    assert_eq!(r.dates.len(), HORIZON);
    assert_eq!(r.actuals.len(), HORIZON);
    assert!(r.original.is_none());
    for t in 0..HORIZON {
        let sum: f64 = f.level[t] + f.effects.iter().map(|e| e[t]).sum::<f64>();
        assert!((sum - f.prediction[t]).abs() <= 1e-9 * (1.0 + f.prediction[t].abs()));
        assert_eq!(f.truncated_prediction[t], f.prediction[t].max(0.0));
    }
}

#[tokio::test]
async fn request_errors_carry_classes() {
    let app = app(engine(1), AdjustmentLog::in_memory());
    let cases = [
        (
            r#"{"v":1,"series":{"product_id":"nope","store_id":"x"},"origin":"2021-03-01"}"#
                .to_string(),
            404,
            "SERIES_NOT_FOUND",
        ),
        (forecast_body("2021-01-05"), 404, "ORIGIN_NOT_FOUND"),
        (forecast_body("2030-01-01"), 404, "ORIGIN_NOT_FOUND"),
        (
            format!(r#"{{"series":{SERIES},"origin":"2021-03-01"}}"#),
            400,
            "INVALID_REQUEST",
        ),
        (
            format!(r#"{{"v":2,"series":{SERIES},"origin":"2021-03-01"}}"#),
            400,
            "UNSUPPORTED_VERSION",
        ),
        ("{not json".to_string(), 400, "INVALID_REQUEST"),
        (
            format!(r#"{{"v":1,"series":{SERIES},"origin":"2021-03-01","extra":1}}"#),
            400,
            "INVALID_REQUEST",
        ),
    ];
    for (body, status, class) in cases {
        let (s, b) = call(&app, "POST", "/forecast", Some(body.clone())).await;
        assert_eq!(s.as_u16(), status, "{body}");
        let err = json(&b);
        assert_eq!(err["error"], class, "{body}");
        assert_eq!(err["v"], 1);
    }
}

#[tokio::test]
async fn empty_whatif_is_byte_identical_to_forecast() {
    let app = app(engine(2), AdjustmentLog::in_memory());
    let (_, plain) = call(&app, "POST", "/forecast", Some(forecast_body("2021-03-10"))).await;
    let (_, whatif) = call(
        &app,
        "POST",
        "/whatif",
        Some(whatif_body("2021-03-10", json!([]))),
    )
    .await;
    let (_, omitted) = call(
        &app,
        "POST",
        "/whatif",
        Some(format!(
            r#"{{"v":1,"series":{SERIES},"origin":"2021-03-10"}}"#
        )),
    )
    .await;
    assert_eq!(plain, whatif);
    assert_eq!(plain, omitted);
}

#[tokio::test]
async fn promotion_toggle_leaves_lower_ranks_untouched() {
    let app = app(engine(3), AdjustmentLog::in_memory());
    let (_, base) = call(&app, "POST", "/forecast", Some(forecast_body("2021-03-10"))).await;
    let base: ForecastResponse = serde_json::from_slice(&base).unwrap();
    let current = base.forecast.raw_values[2][3];
    let toggled = json!([{"covariate": "promotion", "step": 3, "value": 1.0 - current}]);
    let (status, body) = call(
        &app,
        "POST",
        "/whatif",
        Some(whatif_body("2021-03-10", toggled)),
    )
    .await;
    assert_eq!(status, 200);
    let r: ForecastResponse = serde_json::from_slice(&body).unwrap();
    assert_ne!(r.id, base.id);
    assert_eq!(r.forecast.effects[0], base.forecast.effects[0]);
    assert_eq!(r.forecast.effects[1], base.forecast.effects[1]);
    assert_eq!(r.forecast.level, base.forecast.level);
    assert_ne!(r.forecast.effects[2], base.forecast.effects[2]);
    assert_eq!(r.forecast.raw_values[2][3], 1.0 - current);
}

#[tokio::test]
async fn randomized_overrides_respect_hierarchy() {
    let app = app(engine(4), AdjustmentLog::in_memory());
    let names = ["weekday", "relative_price", "promotion", "holiday"];
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..25 {
        let origin = chrono::NaiveDate::from_ymd_opt(2021, 2, 1).unwrap()
            + chrono::Days::new(rng.random_range(0..40));
        let (_, base) = call(
            &app,
            "POST",
            "/forecast",
            Some(forecast_body(&origin.to_string())),
        )
        .await;
        let base: ForecastResponse = serde_json::from_slice(&base).unwrap();
        let i = rng.random_range(0..4);
        let value = match i {
            0 => rng.random_range(0..7) as f64,
            1 => rng.random_range(-0.3..0.3),
            _ => rng.random_range(0..2) as f64,
        };
        let ov =
            json!([{"covariate": names[i], "step": rng.random_range(0..HORIZON), "value": value}]);
        let (status, body) = call(
            &app,
            "POST",
            "/whatif",
            Some(whatif_body(&origin.to_string(), ov)),
        )
        .await;
        assert_eq!(status, 200);
        let r: ForecastResponse = serde_json::from_slice(&body).unwrap();
        for j in 0..i {
            assert_eq!(
                r.forecast.effects[j], base.forecast.effects[j],
                "rank {j} changed by override of {i}"
            );
        }
        assert_eq!(r.forecast.level, base.forecast.level);
    }
}

#[tokio::test]
async fn invalid_scenarios_rejected() {
    let app = app(engine(1), AdjustmentLog::in_memory());
    let cases = [
        json!([{"covariate": "sales", "step": 0, "value": 1.0}]),
        json!([{"covariate": "nope", "step": 0, "value": 1.0}]),
        json!([{"covariate": "promotion", "step": HORIZON, "value": 1.0}]),
        json!([{"covariate": "promotion", "step": 0, "value": 2.0}]),
        json!([{"covariate": "weekday", "step": 0, "value": 1.5}]),
        json!([{"covariate": "promotion", "step": 1, "value": 1.0}, {"covariate": "promotion", "step": 1, "value": 0.0}]),
    ];
    for ov in cases {
        let (s, b) = call(
            &app,
            "POST",
            "/whatif",
            Some(whatif_body("2021-03-10", ov.clone())),
        )
        .await;
        assert_eq!(s, 400, "{ov}");
        assert_eq!(json(&b)["error"], "INVALID_SCENARIO", "{ov}");
    }
}

fn adjust_body(id: &str, adjustment: serde_json::Value) -> String {
    json!({"v": 1, "forecast_id": id, "adjustment": adjustment}).to_string()
}

#[tokio::test]
async fn level_adjustment_shifts_prediction() {
    let app = app(engine(1), AdjustmentLog::in_memory());
    let (_, base) = call(&app, "POST", "/forecast", Some(forecast_body("2021-03-01"))).await;
    let base: ForecastResponse = serde_json::from_slice(&base).unwrap();
    let adj = json!({"target": "level", "kind": "add", "values": vec![5.0; HORIZON], "author": "ana", "note": "event"});
    let (status, body) = call(&app, "POST", "/adjust", Some(adjust_body(&base.id, adj))).await;
    assert_eq!(status, 200);
    let r: ForecastResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(r.id, base.id);
    assert_eq!(r.original.as_ref(), Some(&base.forecast));
    assert_eq!(r.adjustments.len(), 1);
    assert!(r.adjustments[0].timestamp.is_some());
    for t in 0..HORIZON {
        let delta = r.forecast.prediction[t] - base.forecast.prediction[t];
        assert!((delta - 5.0).abs() < 1e-9);
    }
    let (_, again) = call(&app, "POST", "/forecast", Some(forecast_body("2021-03-01"))).await;
    assert_eq!(again, body);
}

#[tokio::test]
async fn adjustment_errors() {
    let app = app(engine(1), AdjustmentLog::in_memory());
    let add =
        |target: &str, n: usize| json!({"target": target, "kind": "add", "values": vec![1.0; n]});
    let (s, b) = call(
        &app,
        "POST",
        "/adjust",
        Some(adjust_body("unknown", add("level", HORIZON))),
    )
    .await;
    assert_eq!(
        (s.as_u16(), json(&b)["error"].clone()),
        (404, json!("FORECAST_NOT_FOUND"))
    );
    let (_, base) = call(&app, "POST", "/forecast", Some(forecast_body("2021-03-01"))).await;
    let id = json(&base)["id"].as_str().unwrap().to_string();
    for adj in [add("sales", HORIZON), add("level", HORIZON - 1)] {
        let (s, b) = call(&app, "POST", "/adjust", Some(adjust_body(&id, adj))).await;
        assert_eq!(s, 400);
        assert_eq!(json(&b)["error"], "INVALID_ADJUSTMENT");
    }
    let (_, after) = call(&app, "POST", "/forecast", Some(forecast_body("2021-03-01"))).await;
    assert_eq!(after, base);
}

#[tokio::test]
async fn adjustment_log_replay_reproduces_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adjustments.jsonl");
    let app1 = app(engine(6), AdjustmentLog::open(&path).unwrap());
    let (_, a) = call(
        &app1,
        "POST",
        "/forecast",
        Some(forecast_body("2021-03-01")),
    )
    .await;
    let (_, b) = call(
        &app1,
        "POST",
        "/whatif",
        Some(whatif_body(
            "2021-03-08",
            json!([{"covariate": "holiday", "step": 0, "value": 1.0}]),
        )),
    )
    .await;
    let (ida, idb) = (
        json(&a)["id"].as_str().unwrap().to_string(),
        json(&b)["id"].as_str().unwrap().to_string(),
    );
    let steps = [
        (
            &ida,
            json!({"target": "promotion", "kind": "scale", "values": vec![1.1; HORIZON]}),
        ),
        (
            &idb,
            json!({"target": "level", "kind": "add", "values": vec![-2.0; HORIZON]}),
        ),
        (
            &ida,
            json!({"target": "weekday", "kind": "add", "values": [1, 2, 3, 4, 5, 6, 7]}),
        ),
        (
            &ida,
            json!({"target": "level", "kind": "scale", "values": vec![0.9; HORIZON], "timestamp": "2026-01-01T00:00:00Z"}),
        ),
    ];
    let mut last = std::collections::BTreeMap::new();
    for (id, adj) in steps {
        let (s, body) = call(&app1, "POST", "/adjust", Some(adjust_body(id, adj))).await;
        assert_eq!(s, 200);
        last.insert(id.clone(), body);
    }
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 4);

    let log = AdjustmentLog::open(&path).unwrap();
    let eng = engine(6);
    let states = replay(log.records(), |src| eng.compute(src)).unwrap();
    for (id, body) in &last {
        let r: ForecastResponse = serde_json::from_slice(body).unwrap();
        assert_eq!(&states[id], &r.forecast);
    }

    let app2 = app(engine(6), log);
    let (_, a2) = call(
        &app2,
        "POST",
        "/forecast",
        Some(forecast_body("2021-03-01")),
    )
    .await;
    assert_eq!(&a2, &last[&ida]);
    let (s, _) = call(
        &app2,
        "POST",
        "/adjust",
        Some(adjust_body(
            &idb,
            json!({"target": "level", "kind": "add", "values": vec![0.0; HORIZON]}),
        )),
    )
    .await;
    assert_eq!(s, 200, "ids from the log stay adjustable after restart");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_identical_requests_agree() {
    let app = app(engine(7), AdjustmentLog::in_memory());
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let app = app.clone();
            tokio::spawn(async move {
                call(&app, "POST", "/forecast", Some(forecast_body("2021-03-15")))
                    .await
                    .1
            })
        })
        .collect();
    let mut bodies = Vec::new();
    for t in tasks {
        bodies.push(t.await.unwrap());
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}
