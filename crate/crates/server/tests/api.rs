#[path = "../../core/tests/support/annotation_fixture.rs"]
mod fixture;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use interfere_core::annotation::{build_tasks, ResultStore, TaskFile, TaskSource};
use interfere_core::metrics::{parse_annotations, AnnotationRecord};
use interfere_server::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Setup {
    app: Router,
    tasks: TaskFile,
    results: std::path::PathBuf,
    _dir: tempfile::TempDir,
}

fn setup(kind: &str, n: usize) -> Setup {
    let corpus = fixture::corpus(n);
    let systems = fixture::systems(&corpus);
    let tasks = match kind {
        "rating" => build_tasks(TaskSource::Rating(&corpus), n, 4).unwrap(),
        _ => build_tasks(TaskSource::Ranking { corpus: &corpus, systems: &systems }, n, 4).unwrap(),
    };
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results.jsonl");
    let state = AppState::new(tasks.clone(), ResultStore::open(&results).unwrap());
    Setup {
        app: router(state, None),
        tasks,
        results,
        _dir: dir,
    }
}

async fn call(app: &Router, method: &str, uri: &str, rater: Option<&str>, body: Option<&str>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(r) = rater {
        req = req.header("x-rater-id", r);
    }
    let req = req
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn json_of(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[tokio::test]
async fn lists_tasks_with_progress() {
    let s = setup("rating", 3);
    let (status, body) = call(&s.app, "GET", "/api/tasks", Some("r1"), None).await;
    assert_eq!(status, StatusCode::OK);
    let v = json_of(&body);
    assert_eq!(v["total"], 3);
    assert_eq!(v["completed"], 0);
    assert_eq!(v["schema"], "interfere.tasks/v1");
    let id = s.tasks.tasks[0].id.clone();
    let (status, _) = call(
        &s.app,
        "POST",
        &format!("/api/task/{id}/result"),
        Some("r1"),
        Some(r#"{"q1":"Fully","q2":"Fully","q3":"Somewhat"}"#),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let v = json_of(&call(&s.app, "GET", "/api/tasks?rater=r1", None, None).await.1);
    assert_eq!(v["completed"], 1);
    assert_eq!(v["tasks"][0]["done"], true);
    assert_eq!(v["progress"]["gaps"][0]["missing"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn ranking_payloads_never_name_systems() {
    let s = setup("ranking", 5);
    for task in &s.tasks.tasks {
        for rater in ["r1", "r2"] {
            let (status, body) = call(&s.app, "GET", &format!("/api/task/{}", task.id), Some(rater), None).await;
            assert_eq!(status, StatusCode::OK);
            for name in fixture::SYSTEMS {
                assert!(!body.contains(name), "{body}");
            }
            let v = json_of(&body);
            assert_eq!(v["task"]["payload"]["candidates"].as_array().unwrap().len(), 3);
        }
    }
    let (status, body) = call(&s.app, "GET", "/api/tasks", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(fixture::SYSTEMS.iter().all(|n| !body.contains(n)));
    let (status, _) = call(&s.app, "GET", &format!("/api/task/{}", s.tasks.tasks[0].id), None, None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn submissions_are_idempotent_and_replaceable() {
    let s = setup("ranking", 2);
    let uri = format!("/api/task/{}/result", s.tasks.tasks[0].id);
    let first = r#"{"ranks":{"A":1,"B":2,"C":3}}"#;
    let outcome = |b: &str| json_of(b)["outcome"].as_str().unwrap().to_string();
    assert_eq!(outcome(&call(&s.app, "POST", &uri, Some("r1"), Some(first)).await.1), "created");
    let size = std::fs::metadata(&s.results).unwrap().len();
    assert_eq!(outcome(&call(&s.app, "POST", &uri, Some("r1"), Some(first)).await.1), "unchanged");
    assert_eq!(std::fs::metadata(&s.results).unwrap().len(), size);
    let tie = r#"{"ranks":{"A":1,"B":1,"C":2}}"#;
    assert_eq!(outcome(&call(&s.app, "POST", &uri, Some("r1"), Some(tie)).await.1), "replaced");

    let (_, body) = call(&s.app, "GET", &format!("/api/task/{}", s.tasks.tasks[0].id), Some("r1"), None).await;
    assert_eq!(json_of(&body)["previous"], json!({"ranks": {"A": 1, "B": 1, "C": 2}}));
}

#[tokio::test]
async fn bad_bodies_are_rejected() {
    let s = setup("rating", 1);
    let uri = format!("/api/task/{}/result", s.tasks.tasks[0].id);
    let (status, body) = call(&s.app, "POST", &uri, Some("r1"), Some(r#"{"q1":"Fully","q2":"Loads"}"#)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let fields: Vec<String> = json_of(&body)["errors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["field"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(fields, ["q2", "q3"]);
    let (status, _) = call(&s.app, "POST", &uri, Some("r1"), Some("{not json")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = call(&s.app, "POST", &uri, None, Some(r#"{"q1":"Fully","q2":"Fully","q3":"Fully"}"#)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body.contains("rater_id"));
    let (status, _) = call(&s.app, "POST", "/api/task/nope/result", Some("r1"), Some("{}")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let ok = r#"{"rater_id":"r9","q1":"Fully","q2":"Fully","q3":"Fully"}"#;
    assert_eq!(call(&s.app, "POST", &uri, None, Some(ok)).await.0, StatusCode::OK);
}

#[tokio::test]
async fn export_unblinds_and_round_trips() {
    let s = setup("ranking", 4);
    let mut expected = Vec::new();
    for task in &s.tasks.tasks {
        let (_, body) = call(&s.app, "GET", &format!("/api/task/{}", task.id), Some("r1"), None).await;
        let cands = json_of(&body)["task"]["payload"]["candidates"].clone();
        let mut ranks = serde_json::Map::new();
        for c in cands.as_array().unwrap() {
            let resp = c["response"].as_str().unwrap();
            let sys = fixture::RESPONSES.iter().position(|r| *r == resp).unwrap();
            ranks.insert(c["label"].as_str().unwrap().to_string(), json!(if sys == 2 { 1 } else { 2 }));
        }
        let body = json!({ "ranks": ranks }).to_string();
        let uri = format!("/api/task/{}/result", task.id);
        assert_eq!(call(&s.app, "POST", &uri, Some("r1"), Some(&body)).await.0, StatusCode::OK);
        expected.push(task.id.clone());
    }
    let (status, body) = call(&s.app, "GET", "/api/export", None, None).await;
    assert_eq!(status, StatusCode::OK);
    let records = parse_annotations(&body).unwrap();
    assert_eq!(records.len(), 4);
    for r in records {
        let AnnotationRecord::Ranking(r) = r else { panic!() };
        assert_eq!(r.ranks["simpletod-inter"], 1);
        assert_eq!(r.ranks["simpletod"], 2);
        assert_eq!(r.ranks["simpletod-fused"], 2);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_raters_are_all_recorded() {
    let s = setup("rating", 20);
    let app = Arc::new(s.app.clone());
    let mut handles = Vec::new();
    for rater in ["a", "b", "c", "d"] {
        for task in &s.tasks.tasks {
            let app = app.clone();
            let uri = format!("/api/task/{}/result", task.id);
            handles.push(tokio::spawn(async move {
                let body = r#"{"q1":"Fully","q2":"Somewhat","q3":"Fully"}"#;
                call(&app, "POST", &uri, Some(rater), Some(body)).await.0
            }));
        }
    }
    for h in handles {
        assert_eq!(h.await.unwrap(), StatusCode::OK);
    }
    let (_, body) = call(&s.app, "GET", "/api/export", None, None).await;
    assert_eq!(parse_annotations(&body).unwrap().len(), 80);
    let log = std::fs::read_to_string(&s.results).unwrap();
    assert_eq!(log.lines().count(), 80);
    assert_eq!(ResultStore::open(&s.results).unwrap().len(), 80);
}

#[tokio::test]
async fn serves_static_bundle_or_placeholder() {
    let s = setup("rating", 1);
    let (status, body) = call(&s.app, "GET", "/", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.contains("/api"));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>raters</h1>").unwrap();
    let state = AppState::new(s.tasks.clone(), ResultStore::open(&dir.path().join("r.jsonl")).unwrap());
    let app = router(state, Some(dir.path()));
    let (status, body) = call(&app, "GET", "/", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, "<h1>raters</h1>");
    assert_eq!(call(&app, "GET", "/api/tasks", None, None).await.0, StatusCode::OK);
}
