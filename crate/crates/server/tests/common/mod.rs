#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use serde_json::Value;
use substrace::simulator::{simulate, SimConfig, SimOutput};
use substrace_server::{router, AppState, Snapshot};
use tower::ServiceExt;

/// Ten projects, the first launched alone for ten days.
pub fn fixture_config(seed: u64) -> SimConfig {
    let mut cfg = SimConfig::generated(10, 600, 60, seed);
    cfg.launch_offsets = vec![0, 10, 12, 14, 16, 20, 24, 28, 30, 35];
    cfg
}

pub fn write_fixture(dir: &Path, seed: u64) -> SimOutput {
    let out = simulate(&fixture_config(seed)).unwrap();
    out.write_to(dir).unwrap();
    out
}

pub fn app(dir: &Path) -> axum::Router {
    let state = AppState::new(Some(Snapshot::load(dir).unwrap()), Some(dir.to_path_buf()));
    router(Arc::new(state))
}

pub async fn send(app: &axum::Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, bytes.to_vec())
}

pub async fn get(app: &axum::Router, uri: &str) -> (StatusCode, Value) {
    let (status, body) = send(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (status, serde_json::from_slice(&body).unwrap())
}

pub async fn post_raw(app: &axum::Router, body: &str) -> (StatusCode, Vec<u8>) {
    let req = Request::post("/api/analysis")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    send(app, req).await
}

pub async fn post(app: &axum::Router, body: &str) -> (StatusCode, Value) {
    let (status, bytes) = post_raw(app, body).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

pub fn assert_error(status: StatusCode, body: &Value, expected: StatusCode, code: &str) {
    assert_eq!(status, expected, "{body}");
    assert_eq!(body["error"], code, "{body}");
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
    assert_eq!(body.as_object().unwrap().len(), 2);
}

/// Keys of a JSON object, sorted.
pub fn keys(v: &Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().unwrap_or_else(|| panic!("not an object: {v}")).keys().cloned().collect();
    k.sort();
    k
}

pub fn sorted(names: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    v.sort();
    v
}
