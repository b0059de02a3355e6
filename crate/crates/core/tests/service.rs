mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use common::{civic_config, civic_gateway, civic_path, keyword_answer, rule_gateway, run_civic};
use concept_induction::workbench::{router, AppState, GatewayFactory, ServiceOptions};

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn state_with(factory: GatewayFactory, options: ServiceOptions) -> Arc<AppState> {
    AppState::new(factory, ServiceOptions { base_config: civic_config(), ..options }).unwrap()
}

fn scripted_factory() -> GatewayFactory {
    Arc::new(|_| Ok(Arc::new(civic_gateway())))
}

fn civic_csv() -> String {
    std::fs::read_to_string(civic_path("civic.csv")).unwrap()
}

#[tokio::test]
async fn create_induce_and_inspect() {
    let app = router(state_with(scripted_factory(), ServiceOptions::default()));
    let (st, body) = call(
        &app,
        Method::POST,
        "/api/sessions",
        Some(json!({"content": civic_csv(), "text_col": "text", "id_col": "id", "session_id": "civic"})),
    )
    .await;
    assert_eq!(st, StatusCode::CREATED, "{body}");
    assert_eq!(body["accepted"], 12);

    let (st, job) = call(&app, Method::POST, "/api/sessions/civic/induce", Some(json!({"n_loops": 2}))).await;
    assert_eq!(st, StatusCode::ACCEPTED, "{job}");
    let job_id = job["job_id"].as_str().unwrap().to_string();
    let mut status = Value::Null;
    for _ in 0..200 {
        status = call(&app, Method::GET, &format!("/api/jobs/{job_id}"), None).await.1;
        if status["state"] == "done" || status["state"] == "failed" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
    assert_eq!(status["state"], "done", "{status}");

    let expected = run_civic(2);
    let (_, summary) = call(&app, Method::GET, "/api/sessions/civic", None).await;
    assert_eq!(summary["n_concepts"], expected.concepts.len());
    let (st, matrix) = call(&app, Method::GET, "/api/sessions/civic/matrix", None).await;
    assert_eq!(st, StatusCode::OK, "{matrix}");
    let (_, violations) = call(&app, Method::GET, "/api/sessions/civic/validate", None).await;
    assert_eq!(violations, json!([]));
    let (_, usage) = call(&app, Method::GET, "/api/sessions/civic/usage", None).await;
    assert!(usage["totals"]["calls"].as_u64().unwrap() > 0);

    let (st, detail) = call(&app, Method::GET, "/api/sessions/civic/concepts/g0-c0-0", None).await;
    assert_eq!(st, StatusCode::OK, "{detail}");
    let (st, _) = call(&app, Method::GET, "/api/sessions/civic/concepts/g0-c0-0?debug=true", None).await;
    assert_eq!(st, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn errors_map_to_statuses() {
    let state = state_with(Arc::new(|_| Ok(Arc::new(rule_gateway(keyword_answer)))), ServiceOptions::default());
    state.insert(run_civic(1)).unwrap();
    let app = router(state);
    let cases = [
        (Method::GET, "/api/sessions/nope", None, StatusCode::NOT_FOUND),
        (Method::GET, "/api/jobs/nope", None, StatusCode::NOT_FOUND),
        (Method::POST, "/api/sessions", Some(json!({"content": "a\n1\n", "text_col": ""})), StatusCode::BAD_REQUEST),
        (Method::POST, "/api/sessions", Some(json!({"content": civic_csv(), "text_col": "text", "session_id": "civic"})), StatusCode::CONFLICT),
        (Method::POST, "/api/sessions/civic/concepts", Some(json!({"name": " ", "criteria": "x"})), StatusCode::BAD_REQUEST),
        (Method::PATCH, "/api/sessions/civic/concepts/zzz", Some(json!({"name": "x"})), StatusCode::NOT_FOUND),
        (Method::POST, "/api/sessions/civic/slices", Some(json!({"name": "s", "predicate": "agee > 3"})), StatusCode::BAD_REQUEST),
        (Method::PUT, "/api/sessions/civic/threshold", Some(json!({"threshold": 0.0})), StatusCode::BAD_REQUEST),
        (Method::POST, "/api/sessions/civic/merge", Some(json!({"concept_ids": ["g0-c0-0"]})), StatusCode::BAD_REQUEST),
    ];
    for (method, uri, body, want) in cases {
        let (st, resp) = call(&app, method.clone(), uri, body).await;
        assert_eq!(st, want, "{method} {uri}: {resp}");
        if st != StatusCode::NOT_FOUND || uri.contains("sessions/nope") {
            assert!(resp["error"].is_string(), "{uri}: {resp}");
        }
    }
    let (st, health) = call(&app, Method::GET, "/api/health", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(health["sessions"], 1);
}

#[tokio::test]
async fn sessions_persist_across_restarts() {
    let dir = tempfile::TempDir::new().unwrap();
    let options = || ServiceOptions { session_dir: Some(dir.path().to_path_buf()), ..Default::default() };
    let factory: GatewayFactory = Arc::new(|_| Ok(Arc::new(rule_gateway(keyword_answer))));
    let state = state_with(factory.clone(), options());
    state.insert(run_civic(1)).unwrap();
    let app = router(state);
    let (st, _) = call(&app, Method::POST, "/api/sessions/civic/slices", Some(json!({"name": "Older", "predicate": "age >= 40"}))).await;
    assert_eq!(st, StatusCode::CREATED);
    let (_, before) = call(&app, Method::GET, "/api/sessions/civic/download", None).await;

    let app = router(state_with(factory, options()));
    let (st, after) = call(&app, Method::GET, "/api/sessions/civic/download", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(after, before);
    let (st, slice) = call(&app, Method::GET, "/api/sessions/civic/slices/Older", None).await;
    assert_eq!(st, StatusCode::OK, "{slice}");
}

#[tokio::test]
async fn second_induction_on_a_busy_session_conflicts() {
    let app = router(state_with(scripted_factory(), ServiceOptions::default()));
    call(&app, Method::POST, "/api/sessions", Some(json!({"content": civic_csv(), "text_col": "text", "id_col": "id", "session_id": "c"}))).await;
    let (first, _) = call(&app, Method::POST, "/api/sessions/c/induce", Some(json!({"n_loops": 1}))).await;
    let (second, body) = call(&app, Method::POST, "/api/sessions/c/induce", Some(json!({"n_loops": 1}))).await;
    assert_eq!(first, StatusCode::ACCEPTED);
    // The first job may already have finished on a fast machine.
    assert!(second == StatusCode::CONFLICT || second == StatusCode::ACCEPTED, "{second} {body}");
}
