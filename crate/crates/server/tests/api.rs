use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use esgmap_core::classifier::OracleBackend;
use esgmap_core::store::ProjectStore;
use esgmap_core::vecindex::HashedBagOfWords;
use esgmap_server::{router, AppState};

const TOKEN: &str = "test-token";

fn taxonomy_json() -> Value {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/taxonomy_transport.jsonl");
    let text = std::fs::read_to_string(path).unwrap();
    Value::Array(text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect())
}

fn doc_text() -> String {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/docs/nordbahn_cargo.txt");
    std::fs::read_to_string(path).unwrap()
}

fn app(dir: &std::path::Path, default_label: u8) -> Router {
    let mut oracle = OracleBackend::new();
    oracle.default_label = default_label;
    let state = AppState::new(
        ProjectStore::open(dir).unwrap(),
        TOKEN,
        Arc::new(HashedBagOfWords),
        Arc::new(oracle),
    );
    router(state)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(app, method, uri, body, Some(TOKEN)).await;
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn call_raw(app: &Router, method: &str, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn create(app: &Router, id: &str) {
    let (status, body) = call(
        app,
        "POST",
        "/projects",
        Some(json!({
            "project_id": id,
            "taxonomy": taxonomy_json(),
            "taxonomy_version": "transport",
            "nace_codes": ["H.49"],
            "config": null,
        })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
}

async fn run_to_completion(app: &Router, id: &str) -> Value {
    let (status, job) = call(app, "POST", &format!("/projects/{id}/run"), None).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{job}");
    let job_id = job["job_id"].as_str().unwrap().to_string();
    for _ in 0..400 {
        let (status, job) = call(app, "GET", &format!("/projects/{id}/jobs/{job_id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        match job["state"].as_str().unwrap() {
            "succeeded" | "failed" => return job,
            _ => tokio::time::sleep(Duration::from_millis(10)).await,
        }
    }
    panic!("job did not finish");
}

#[tokio::test]
async fn rejects_missing_or_wrong_token() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 1);
    let (s, _) = call_raw(&app, "GET", "/projects", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = call_raw(&app, "GET", "/projects", None, Some("nope")).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = call_raw(&app, "GET", "/projects", None, Some(TOKEN)).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn project_lifecycle_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 1);
    create(&app, "acme").await;

    let (s, _) = call(&app, "POST", "/projects", Some(json!({"project_id": "acme", "taxonomy": taxonomy_json(), "nace_codes": ["H.49"]}))).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let (s, _) = call(&app, "POST", "/projects/acme/run", None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "run without documents");

    let (s, doc) = call(
        &app,
        "POST",
        "/projects/acme/documents",
        Some(json!({"company": "Nordbahn Cargo", "title": "NFS 2023", "text": doc_text()})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{doc}");
    assert!(doc["doc_id"].as_str().unwrap().starts_with("doc-"));

    let job = run_to_completion(&app, "acme").await;
    assert_eq!(job["state"], "succeeded", "{job}");

    let (s, summary) = call(&app, "GET", "/projects/acme", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(summary["documents"].as_array().unwrap().len(), 1);
    assert_eq!(summary["runs"].as_array().unwrap().len(), 1);
    let pending = summary["candidates"]["pending"].as_u64().unwrap();
    assert!(pending > 0);

    let (s, cands) = call(&app, "GET", "/projects/acme/candidates?status=pending&annotator=ann1", None).await;
    assert_eq!(s, StatusCode::OK);
    let cands = cands.as_array().unwrap().clone();
    assert_eq!(cands.len() as u64, pending);
    assert!(cands.iter().all(|c| c["model_verdict"].is_null()), "blind mode hides verdicts");

    let (s, ann) = call(&app, "GET", "/projects/acme/annotations?mode=model", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(!ann.as_array().unwrap().is_empty());

    let (s, _) = call(&app, "GET", "/projects/acme/export/dataset", None).await;
    assert_eq!(s, StatusCode::CONFLICT, "export refuses pending candidates");

    for (i, c) in cands.iter().enumerate() {
        let id = c["candidate_id"].as_str().unwrap();
        let decision = if i % 2 == 0 { "confirm" } else { "reject" };
        for ann in ["ann1", "ann2", "ann3"] {
            let (s, out) = call(&app, "POST", &format!("/candidates/{id}/votes"), Some(json!({"annotator_id": ann, "decision": decision}))).await;
            assert_eq!(s, StatusCode::CREATED, "{out}");
        }
    }

    let first = cands[0]["candidate_id"].as_str().unwrap();
    let (s, _) = call(&app, "POST", &format!("/candidates/{first}/votes"), Some(json!({"annotator_id": "ann1", "decision": "confirm"}))).await;
    assert_eq!(s, StatusCode::CONFLICT, "duplicate vote");
    let (s, _) = call(&app, "POST", "/candidates/cand-0000000000000000/votes", Some(json!({"annotator_id": "ann1", "decision": "confirm"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, final_views) = call(&app, "GET", "/projects/acme/candidates?status=accepted", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(final_views.as_array().unwrap().iter().all(|c| !c["model_verdict"].is_null()));

    let (s, bytes) = call_raw(&app, "GET", "/projects/acme/export/dataset", None, Some(TOKEN)).await;
    assert_eq!(s, StatusCode::OK);
    let on_disk = tempfile::NamedTempFile::new().unwrap();
    let stored = ProjectStore::open(dir.path()).unwrap().load("acme").unwrap();
    esgmap_core::benchmark::save_dataset(on_disk.path(), &stored.export_dataset().unwrap()).unwrap();
    assert_eq!(std::fs::read(on_disk.path()).unwrap(), bytes, "API and file export agree byte-for-byte");
    let rows: Vec<Value> = String::from_utf8(bytes).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), cands.len());
    let positives = rows.iter().filter(|r| r["label"] == 1).count();
    assert_eq!(positives, cands.len().div_ceil(2));

    let (s, bytes) = call_raw(&app, "GET", "/projects/acme/export/finetune", None, Some(TOKEN)).await;
    assert_eq!(s, StatusCode::OK);
    let text = String::from_utf8(bytes).unwrap();
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let roles: Vec<_> = first["messages"].as_array().unwrap().iter().map(|m| m["role"].as_str().unwrap().to_string()).collect();
    assert_eq!(roles, ["system", "user", "assistant"]);

    let (s, ann) = call(&app, "GET", "/projects/acme/annotations?mode=adjudicated", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ann.as_array().unwrap().len(), positives);
}

#[tokio::test]
async fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    {
        let app = app(dir.path(), 0);
        create(&app, "persist").await;
        let (s, _) = call(&app, "POST", "/projects/persist/documents", Some(json!({"company": "N", "text": doc_text()}))).await;
        assert_eq!(s, StatusCode::CREATED);
        run_to_completion(&app, "persist").await;
    }
    let app = app(dir.path(), 0);
    let (s, summary) = call(&app, "GET", "/projects/persist", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(summary["runs"].as_array().unwrap().len(), 1);
    let (s, _) = call(&app, "GET", "/projects/missing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn concurrent_votes_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 1);
    create(&app, "race").await;
    call(&app, "POST", "/projects/race/documents", Some(json!({"company": "N", "text": doc_text()}))).await;
    run_to_completion(&app, "race").await;
    let (_, cands) = call(&app, "GET", "/projects/race/candidates", None).await;
    let ids: Vec<String> = cands.as_array().unwrap().iter().map(|c| c["candidate_id"].as_str().unwrap().to_string()).collect();

    let mut handles = vec![];
    for id in &ids {
        for ann in ["a", "b", "c"] {
            let app = app.clone();
            let uri = format!("/candidates/{id}/votes");
            handles.push(tokio::spawn(async move {
                call(&app, "POST", &uri, Some(json!({"annotator_id": ann, "decision": "confirm"}))).await.0
            }));
        }
    }
    for h in handles {
        assert_eq!(h.await.unwrap(), StatusCode::CREATED);
    }
    let (_, summary) = call(&app, "GET", "/projects/race", None).await;
    assert_eq!(summary["votes"].as_u64().unwrap() as usize, ids.len() * 3);
    assert_eq!(summary["candidates"]["accepted"].as_u64().unwrap() as usize, ids.len());
}
