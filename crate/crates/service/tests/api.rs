use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use smnist_core::session::eventlog::read_events;
use smnist_service::{aggregate_logs, router, AppState, ServiceConfig};
use tower::ServiceExt;

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

fn app_in(dir: &std::path::Path) -> (Arc<AppState>, Router) {
    let state = AppState::open(ServiceConfig::new(dir)).unwrap();
    (state.clone(), router(state))
}

async fn new_session(app: &Router) -> String {
    let (status, body) = call(app, Method::POST, "/api/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    body["session_id"].as_str().unwrap().to_string()
}

/// Reads the numerosity of the outstanding trial from the session log.
fn outstanding_numerosity(dir: &std::path::Path, id: &str) -> u8 {
    let events = read_events(&dir.join("sessions").join(format!("{id}.jsonl"))).unwrap();
    events
        .iter()
        .rev()
        .find_map(|e| match e {
            smnist_core::session::eventlog::SessionEvent::TrialIssued { trial } => Some(trial.numerosity),
            _ => None,
        })
        .unwrap()
}

#[tokio::test]
async fn correct_answer_starts_a_streak() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_in(dir.path());
    let id = new_session(&app).await;
    let (status, trial) = call(&app, Method::GET, &format!("/api/sessions/{id}/trial"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(trial["level"], 3);
    assert!(trial.get("numerosity").is_none());
    // fetching again returns the same outstanding trial
    let (_, again) = call(&app, Method::GET, &format!("/api/sessions/{id}/trial"), None).await;
    assert_eq!(trial, again);

    let n = outstanding_numerosity(dir.path(), &id);
    assert_eq!(trial["positions"].as_array().unwrap().len(), n as usize);
    let (status, body) = call(&app, Method::POST, &format!("/api/sessions/{id}/answer"), Some(json!({ "digit": n }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["verdict"]["correct"], true);
    assert_eq!(body["verdict"]["streak"], 1);
    assert_eq!(body["summary"]["streak"], 1);
}

#[tokio::test]
async fn tenth_correct_answer_levels_up() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_in(dir.path());
    let id = new_session(&app).await;
    let mut last = Value::Null;
    for _ in 0..10 {
        call(&app, Method::GET, &format!("/api/sessions/{id}/trial"), None).await;
        let n = outstanding_numerosity(dir.path(), &id);
        let (status, body) = call(&app, Method::POST, &format!("/api/sessions/{id}/answer"), Some(json!({ "digit": n }))).await;
        assert_eq!(status, StatusCode::OK);
        last = body;
    }
    assert_eq!(last["verdict"]["level"], 4);
    assert_eq!(last["verdict"]["record"]["i"], 3);
    let (status, report) = call(&app, Method::GET, &format!("/api/sessions/{id}/report"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(report["display"].as_str().unwrap().starts_with("(4) 4/"));
    assert_eq!(report["records"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn protocol_errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_in(dir.path());
    let (status, _) = call(&app, Method::GET, "/api/sessions/nope/report", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::GET, "/api/sessions/nope/trial", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let id = new_session(&app).await;
    let answer = format!("/api/sessions/{id}/answer");
    let (status, _) = call(&app, Method::POST, &answer, Some(json!({ "digit": 1 }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    call(&app, Method::GET, &format!("/api/sessions/{id}/trial"), None).await;
    for bad in [json!({ "digit": 11 }), json!({ "digit": "x" }), json!({})] {
        let (status, _) = call(&app, Method::POST, &answer, Some(bad)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
    }
    // malformed answers leave the trial outstanding
    let (status, body) = call(&app, Method::POST, &answer, Some(json!({ "digit": null }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["verdict"]["correct"], false);

    let (status, body) = call(&app, Method::POST, &format!("/api/sessions/{id}/end"), None).await;
    assert_eq!((status, body["status"].as_str()), (StatusCode::OK, Some("ended")));
    let (status, _) = call(&app, Method::GET, &format!("/api/sessions/{id}/trial"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn restart_replays_logs() {
    let dir = tempfile::tempdir().unwrap();
    let id;
    let before;
    {
        let (_, app) = app_in(dir.path());
        id = new_session(&app).await;
        for k in 0..7 {
            call(&app, Method::GET, &format!("/api/sessions/{id}/trial"), None).await;
            let n = outstanding_numerosity(dir.path(), &id);
            let digit = if k == 3 { (n + 1) % 10 } else { n };
            call(&app, Method::POST, &format!("/api/sessions/{id}/answer"), Some(json!({ "digit": digit }))).await;
        }
        call(&app, Method::GET, &format!("/api/sessions/{id}/trial"), None).await;
        before = call(&app, Method::GET, &format!("/api/sessions/{id}"), None).await.1;
    }
    let (_, app) = app_in(dir.path());
    let after = call(&app, Method::GET, &format!("/api/sessions/{id}"), None).await.1;
    assert_eq!(before, after);
    assert_eq!(after["streak"], 3);
    assert_eq!(after["trial_outstanding"], true);
    // the outstanding trial survives the restart and can be answered
    let n = outstanding_numerosity(dir.path(), &id);
    let (status, body) = call(&app, Method::POST, &format!("/api/sessions/{id}/answer"), Some(json!({ "digit": n }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["verdict"]["streak"], 4);
}

#[tokio::test]
async fn aggregate_and_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_in(dir.path());
    let (status, rows) = call(&app, Method::GET, "/api/aggregate", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rows, json!([]));

    let id = new_session(&app).await;
    for _ in 0..10 {
        call(&app, Method::GET, &format!("/api/sessions/{id}/trial"), None).await;
        let n = outstanding_numerosity(dir.path(), &id);
        call(&app, Method::POST, &format!("/api/sessions/{id}/answer"), Some(json!({ "digit": n }))).await;
    }
    let (_, rows) = call(&app, Method::GET, "/api/aggregate", None).await;
    assert_eq!(rows.as_array().unwrap().len(), 1);
    assert_eq!(rows[0]["level_label"], 4);
    assert_eq!(rows[0]["theoretical"], 1.0);
    assert_eq!(
        serde_json::to_value(aggregate_logs(&dir.path().join("sessions")).unwrap()).unwrap(),
        rows
    );
    let (status, csv) = call(&app, Method::GET, "/api/aggregate?format=csv", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(csv.as_str().unwrap().starts_with("level_label,measured,theoretical,n\n4,"));

    let ds = dir.path().join("datasets").join("tiny");
    std::fs::create_dir_all(&ds).unwrap();
    std::fs::write(ds.join("t10k-labels-idx1-ubyte"), [0u8, 0, 8, 1, 0, 0, 0, 0]).unwrap();
    let (_, names) = call(&app, Method::GET, "/api/datasets", None).await;
    assert_eq!(names, json!(["tiny"]));
    let resp = app
        .clone()
        .oneshot(Request::get("/api/datasets/tiny/t10k-labels-idx1-ubyte").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(to_bytes(resp.into_body(), 64).await.unwrap().as_ref(), &[0u8, 0, 8, 1, 0, 0, 0, 0]);
    for uri in ["/api/datasets/tiny/missing", "/api/datasets/..%2F..%2Fetc/passwd", "/api/datasets/.hidden/x"] {
        let (status, _) = call(&app, Method::GET, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
}

#[tokio::test]
async fn late_answers_are_wrong() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_in(dir.path());
    let (status, body) = call(&app, Method::POST, "/api/sessions", Some(json!({ "answer_window_ms": 1 }))).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = body["session_id"].as_str().unwrap().to_string();
    call(&app, Method::GET, &format!("/api/sessions/{id}/trial"), None).await;
    tokio::time::sleep(std::time::Duration::from_millis(20)).await;
    let n = outstanding_numerosity(dir.path(), &id);
    let (_, body) = call(&app, Method::POST, &format!("/api/sessions/{id}/answer"), Some(json!({ "digit": n }))).await;
    assert_eq!(body["verdict"]["late"], true);
    assert_eq!(body["verdict"]["correct"], false);
    assert!(body["elapsed_ms"].as_u64().unwrap() >= 20);
}
