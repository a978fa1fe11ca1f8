use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::Engine as _;
use http_body_util::BodyExt;
use imis_core::fixtures::{disk_fixture, DISK_CENTER};
use imis_core::maskcore::dice;
use imis_core::proposer::ReferenceSegmenter;
use imis_core::storage::{encode_csr, encode_png, CsrMask};
use imis_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app_with(config: ServiceConfig) -> (Router, Arc<AppState>) {
    let state = Arc::new(AppState::new(config, Arc::new(ReferenceSegmenter::default())).unwrap());
    (router(state.clone()), state)
}

fn app() -> Router {
    app_with(ServiceConfig::default()).0
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let req = req
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, v)
}

fn disk_upload() -> Value {
    let (image, gt) = disk_fixture();
    json!({
        "image": base64::engine::general_purpose::STANDARD.encode(encode_png(&image)),
        "gt": encode_csr(&gt),
    })
}

async fn disk_session(app: &Router) -> String {
    let (status, v) = call(app, "POST", "/sessions", Some(disk_upload())).await;
    assert_eq!(status, StatusCode::CREATED);
    v["id"].as_str().unwrap().to_owned()
}

fn click(r: usize, c: usize, polarity: &str) -> Value {
    json!({"type": "click", "row": r, "col": c, "polarity": polarity})
}

#[tokio::test]
async fn click_on_disk_recovers_it() {
    let app = app();
    let id = disk_session(&app).await;
    let (status, v) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/prompts"),
        Some(click(DISK_CENTER.0, DISK_CENTER.1, "positive")),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert!(v["dice"].as_f64().unwrap() > 0.9);
    let mask: CsrMask = serde_json::from_value(v["mask"].clone()).unwrap();
    let (_, gt) = disk_fixture();
    assert!(dice(&mask.decode().unwrap(), &gt).unwrap() > 0.9);
    assert_eq!(v["history_len"], 1);
}

#[tokio::test]
async fn create_errors_and_fresh_state() {
    let app = app();
    let (status, _) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"image": "bm90IGEgcG5n"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", "/sessions", Some(json!({"image": "%%%"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let a = disk_session(&app).await;
    let b = disk_session(&app).await;
    assert_ne!(a, b);
    let (status, v) = call(&app, "GET", &format!("/sessions/{a}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["history"], json!([]));
    assert_eq!(v["mask"], Value::Null);
    assert_eq!(v["has_gt"], true);
    let (status, _) = call(&app, "GET", "/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn oversized_uploads_are_rejected() {
    let (app, _) = app_with(ServiceConfig {
        max_upload_bytes: 1024,
        ..ServiceConfig::default()
    });
    let (status, _) = call(&app, "POST", "/sessions", Some(disk_upload())).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    let (app, _) = app_with(ServiceConfig {
        max_pixels: 100,
        ..ServiceConfig::default()
    });
    let (status, _) = call(&app, "POST", "/sessions", Some(disk_upload())).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn out_of_bounds_prompt_leaves_history_alone() {
    let app = app();
    let id = disk_session(&app).await;
    let (status, _) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/prompts"),
        Some(click(500, 2, "positive")),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/prompts"),
        Some(json!({"type": "box", "row_min": 0, "col_min": 0, "row_max": 200, "col_max": 5})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (_, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(v["history"], json!([]));
    let (status, _) = call(
        &app,
        "POST",
        "/sessions/nope/prompts",
        Some(click(1, 1, "positive")),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn undo_replays_history() {
    let app = app();
    let id = disk_session(&app).await;
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let uri = format!("/sessions/{id}/prompts");
    let (_, first) = call(
        &app,
        "POST",
        &uri,
        Some(click(DISK_CENTER.0, DISK_CENTER.1, "positive")),
    )
    .await;
    let (_, state_one) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    let (_, second) = call(&app, "POST", &uri, Some(click(5, 5, "positive"))).await;
    assert_ne!(first["mask"], second["mask"]);
    let (status, undone) = call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(undone["mask"], first["mask"]);
    assert_eq!(undone["history_len"], 1);
    let (_, after) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(after["history"], state_one["history"]);
    assert_eq!(after["dice_trace"], state_one["dice_trace"]);

    // Undo to empty then the same click gives the same prediction.
    call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    let (_, empty) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(empty["mask"], Value::Null);
    let (_, again) = call(
        &app,
        "POST",
        &uri,
        Some(click(DISK_CENTER.0, DISK_CENTER.1, "positive")),
    )
    .await;
    assert_eq!(again["mask"], first["mask"]);
}

#[tokio::test]
async fn stored_prediction_equals_replay() {
    let (app, state) = app_with(ServiceConfig::default());
    let id = disk_session(&app).await;
    let uri = format!("/sessions/{id}/prompts");
    for p in [
        click(DISK_CENTER.0, DISK_CENTER.1, "positive"),
        click(DISK_CENTER.0, DISK_CENTER.1 + 3, "negative"),
        json!({"type": "box", "row_min": 30, "col_min": 30, "row_max": 100, "col_max": 100}),
        click(3, 3, "positive"),
    ] {
        let (status, _) = call(&app, "POST", &uri, Some(p)).await;
        assert_eq!(status, StatusCode::OK);
    }
    let session = state.store.get(&id).unwrap();
    let s = session.lock().await;
    let replayed = s.replay(state.segmenter.as_ref()).unwrap();
    assert_eq!(replayed, s.steps);
    assert_eq!(s.history.len(), 4);
}

#[tokio::test]
async fn text_prompts() {
    let app = app();
    let (status, v) = call(
        &app,
        "POST",
        "/sessions",
        Some({
            let mut b = disk_upload();
            b["gt"] = Value::Null;
            b
        }),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let no_gt = v["id"].as_str().unwrap().to_owned();
    let text = json!({"type": "text", "category": "Liver"});
    let (status, _) = call(
        &app,
        "POST",
        &format!("/sessions/{no_gt}/prompts"),
        Some(text.clone()),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_IMPLEMENTED);

    let mut body = disk_upload();
    body["gt_category"] = json!("liver");
    let (_, v) = call(&app, "POST", "/sessions", Some(body)).await;
    let id = v["id"].as_str().unwrap();
    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/prompts"), Some(text)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["dice"], 1.0);
    let (status, _) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/prompts"),
        Some(json!({"type": "text", "category": "flux capacitor"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn delete_and_expiry() {
    let (app, state) = app_with(ServiceConfig {
        idle_timeout: std::time::Duration::from_millis(0),
        ..ServiceConfig::default()
    });
    let id = disk_session(&app).await;
    let (status, _) = call(&app, "DELETE", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = call(&app, "DELETE", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    disk_session(&app).await;
    assert_eq!(state.store.len(), 1);
    std::thread::sleep(std::time::Duration::from_millis(5));
    assert_eq!(state.store.expire(std::time::Instant::now()), 1);
    assert!(state.store.is_empty());
}

#[tokio::test]
async fn snapshots_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        snapshot_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let (app, _) = app_with(config.clone());
    let id = disk_session(&app).await;
    let (_, before) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/prompts"),
        Some(click(DISK_CENTER.0, DISK_CENTER.1, "positive")),
    )
    .await;
    let (restarted, _) = app_with(config);
    let (status, v) = call(&restarted, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["mask"], before["mask"]);
}

#[tokio::test]
async fn dataset_backed_sessions() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    let data = tmp.path().join("data");
    imis_core::fixtures::write_demo_source(&src).unwrap();
    imis_core::ingest::ingest_dataset(
        &src,
        data.join("demo"),
        &Default::default(),
        &imis_core::ingest::SynonymTable::builtin(),
    )
    .unwrap();
    let (app, _) = app_with(ServiceConfig {
        data_dir: Some(data),
        ..ServiceConfig::default()
    });
    let (status, v) = call(&app, "GET", "/datasets", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v[0]["name"], "demo");
    let (_, detail) = call(&app, "GET", "/datasets/demo", None).await;
    let image_id = detail["image_ids"][0]["id"].as_str().unwrap().to_owned();
    let (status, v) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"dataset": "demo", "image_id": image_id, "gt_index": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    let id = v["id"].as_str().unwrap();
    // Liver is ground-truth mask 1 (kidney sorts first); click inside it.
    let (status, v) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/prompts"),
        Some(click(20, 20, "positive")),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["dice"], 1.0);
    let (status, _) = call(&app, "GET", "/datasets/none", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn image_endpoint_returns_png() {
    let app = app();
    let id = disk_session(&app).await;
    let resp = app
        .clone()
        .oneshot(
            Request::get(format!("/sessions/{id}/image"))
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/png");
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(
        imis_core::storage::decode_image(&bytes).unwrap(),
        disk_fixture().0
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_prompts_are_serialized() {
    let app = app();
    let id = disk_session(&app).await;
    let uri = format!("/sessions/{id}/prompts");
    let tasks: Vec<_> = (0..12)
        .map(|i| {
            let (app, uri) = (app.clone(), uri.clone());
            tokio::spawn(async move {
                call(&app, "POST", &uri, Some(click(10 + i, 10, "positive"))).await
            })
        })
        .collect();
    let mut lens = Vec::new();
    for t in tasks {
        let (status, v) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        lens.push(v["history_len"].as_u64().unwrap());
    }
    lens.sort();
    assert_eq!(lens, (1..=12).collect::<Vec<u64>>());
    let (_, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(v["history"].as_array().unwrap().len(), 12);
}
