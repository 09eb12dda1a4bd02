use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use pmsense_core::sensing::{convert, RawSample};
use pmsense_core::timeseries::{aggregate_points, Channel, ChannelStore, ManualClock};
use pmsense_core::{Exec, ParticleModel, Timestamp};
use pmsense_service::api::{AqiResponse, FeedResponse, WriteResponse};
use pmsense_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

const T0_MS: i64 = 1_567_000_800_000;

fn setup() -> (Router, Arc<ManualClock>) {
    let store = ChannelStore::in_memory();
    store.create_channel(Channel::new(1, "enseada", "secret")).unwrap();
    let clock = Arc::new(ManualClock::new(T0_MS));
    (router(AppState::new(Arc::new(store), clock.clone())), clock)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Option<String>, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let retry = resp
        .headers()
        .get(header::RETRY_AFTER)
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, retry, value)
}

async fn write_value(app: &Router, value: f64) -> (StatusCode, Option<String>, Value) {
    call(app, "POST", "/channels/1/write", Some(json!({"write_key": "secret", "value": value}))).await
}

#[tokio::test]
async fn write_rate_limit_and_ids() {
    let (app, clock) = setup();
    let (s, _, v) = write_value(&app, 12.5).await;
    assert_eq!(s, StatusCode::OK);
    let first: WriteResponse = serde_json::from_value(v).unwrap();

    clock.advance_secs(5);
    let (s, retry, v) = write_value(&app, 13.0).await;
    assert_eq!(s, StatusCode::TOO_MANY_REQUESTS);
    assert_eq!(retry.as_deref(), Some("25"));
    assert_eq!(v["retry_after"], 25);

    clock.advance_secs(25);
    let (s, _, v) = write_value(&app, 13.0).await;
    assert_eq!(s, StatusCode::OK);
    let second: WriteResponse = serde_json::from_value(v).unwrap();
    assert!(second.entry_id > first.entry_id);
}

#[tokio::test]
async fn error_statuses() {
    let (app, _) = setup();
    let (s, _, _) = call(&app, "POST", "/channels/1/write", Some(json!({"write_key": "nope", "value": 1.0}))).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _, _) = call(&app, "POST", "/channels/7/write", Some(json!({"write_key": "secret", "value": 1.0}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let both = json!({"write_key": "secret", "value": 1.0, "raw": {"window_duration": 30.0, "low_pulse_time": 0.3}});
    let neither = json!({"write_key": "secret"});
    let unknown_field = json!({"write_key": "secret", "value": 1.0, "field": "pm10"});
    let extra = json!({"write_key": "secret", "value": 1.0, "colour": "red"});
    for body in [both, neither, unknown_field, extra] {
        let (s, _, _) = call(&app, "POST", "/channels/1/write", Some(body)).await;
        assert_eq!(s, StatusCode::BAD_REQUEST);
    }
    let req = Request::post("/channels/1/write").body(Body::from("{not json")).unwrap();
    assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::BAD_REQUEST);

    let (s, _, _) = call(&app, "GET", "/channels/7/feed", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _, _) = call(&app, "GET", "/channels/7/aqi", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _, _) = call(&app, "GET", "/channels/abc/feed", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn raw_payload_is_converted() {
    let (app, _) = setup();
    let body = json!({"write_key": "secret", "raw": {"window_duration": 30.0, "low_pulse_time": 0.3}, "sensor_id": "ens-1"});
    let (s, _, v) = call(&app, "POST", "/channels/1/write", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    let expected = convert(&RawSample::new(30.0, 0.3), &ParticleModel::default()).unwrap().pm25;
    assert_eq!(v["value"].as_f64().unwrap(), expected);

    let (_, _, v) = call(&app, "GET", "/channels/1/feed", None).await;
    let feed: FeedResponse = serde_json::from_value(v).unwrap();
    let entries = feed.entries.unwrap();
    assert_eq!(entries.len(), 1);
    assert_eq!(entries[0].value, expected);
    assert_eq!(entries[0].sensor_id, "ens-1");
}

#[tokio::test]
async fn feed_windows_and_buckets() {
    let (app, clock) = setup();
    let (_, _, v) = call(&app, "GET", "/channels/1/feed", None).await;
    assert_eq!(v["entries"], json!([]));

    let mut written = Vec::new();
    for k in 0..10 {
        let value = 3.0 + k as f64;
        assert_eq!(write_value(&app, value).await.0, StatusCode::OK);
        written.push((Timestamp(T0_MS / 1000 + k * 600), value));
        clock.advance_secs(600);
    }
    let (_, _, v) = call(&app, "GET", "/channels/1/feed?bucket=60", None).await;
    let feed: FeedResponse = serde_json::from_value(v).unwrap();
    assert_eq!(feed.buckets.unwrap(), aggregate_points(&written, 60, Exec::Sequential).unwrap());

    let (_, _, v) = call(&app, "GET", "/channels/1/feed?window=1800", None).await;
    let feed: FeedResponse = serde_json::from_value(v).unwrap();
    assert_eq!(feed.entries.unwrap().len(), 3);

    clock.advance_secs(86_400);
    let (_, _, v) = call(&app, "GET", "/channels/1/feed?window=60", None).await;
    assert_eq!(v["entries"], json!([]));

    let (s, _, _) = call(&app, "GET", "/channels/1/feed?start=2030-01-01T00:00:00Z&end=2020-01-01T00:00:00Z", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _, _) = call(&app, "GET", "/channels/1/feed?start=yesterday", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn aqi_endpoint() {
    let (app, clock) = setup();
    let (s, _, _) = call(&app, "GET", "/channels/1/aqi", None).await;
    assert_eq!(s, StatusCode::CONFLICT);

    for _ in 0..4 {
        assert_eq!(write_value(&app, 28.745).await.0, StatusCode::OK);
        clock.advance_secs(30);
    }
    let (s, _, v) = call(&app, "GET", "/channels/1/aqi", None).await;
    assert_eq!(s, StatusCode::OK);
    let a: AqiResponse = serde_json::from_value(v).unwrap();
    assert_eq!(a.level.as_str(), "MODERATE");
    assert!(!a.health_text.is_empty());
    assert!((a.mean - 28.745).abs() < 1e-12);

    let (app, clock) = setup();
    for _ in 0..3 {
        write_value(&app, 1.042).await;
        clock.advance_secs(30);
    }
    let (_, _, v) = call(&app, "GET", "/channels/1/aqi", None).await;
    assert_eq!(v["level"], "GOOD");
}

#[tokio::test]
async fn served_over_a_real_socket() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ServiceConfig {
        bind: "127.0.0.1:0".parse().unwrap(),
        data_dir: Some(dir.path().to_path_buf()),
        channels: vec![Channel::new(3, "ufes", "k")],
        ..Default::default()
    };
    let listener = tokio::net::TcpListener::bind(config.bind).await.unwrap();
    config.bind = listener.local_addr().unwrap();
    drop(listener);

    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let server_config = config.clone();
    let server = tokio::spawn(async move {
        pmsense_service::serve_with_shutdown(&server_config, async {
            let _ = rx.await;
        })
        .await
    });

    let addr = config.bind;
    let body = json!({"write_key": "k", "value": 1.515}).to_string();
    let request = format!(
        "POST /channels/3/write HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let response = loop {
        match tokio::net::TcpStream::connect(addr).await {
            Ok(mut stream) => {
                use tokio::io::{AsyncReadExt, AsyncWriteExt};
                stream.write_all(request.as_bytes()).await.unwrap();
                let mut out = String::new();
                stream.read_to_string(&mut out).await.unwrap();
                break out;
            }
            Err(_) => tokio::time::sleep(std::time::Duration::from_millis(20)).await,
        }
    };
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    tx.send(()).unwrap();
    server.await.unwrap().unwrap();

    let reopened = ChannelStore::open(dir.path()).unwrap();
    let points = reopened.points(3, "pm25", None).unwrap();
    assert_eq!(points.len(), 1);
    assert_eq!(points[0].1, 1.515);
}
