//! Annotation HTTP service.
//!
//! Endpoints:
//!
//! * `GET /api/tasks` lists task ids with submission progress.
//! * `GET /api/task/{id}` returns a task with ranking candidates blinded for the rater.
//! * `POST /api/task/{id}/result` validates and stores a rater's answer.
//! * `GET /api/export` returns every stored record as annotation JSONL.
//! * `/` serves the static UI bundle.
//!
//! The rater is identified by the `x-rater-id` header, a `rater` query
//! parameter, or a `rater_id` field in the submitted body.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use interfere_core::annotation::{
    blind_order, blind_task, validate_submission, AnnotationError, AnnotationTask, FieldError, ResultStore, TaskFile,
    TaskKind, TaskPayload, BLIND_LABELS,
};
use interfere_core::metrics::AnnotationRecord;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tower_http::services::ServeDir;

pub const RATER_HEADER: &str = "x-rater-id";

const PLACEHOLDER_INDEX: &str = "<!doctype html><title>annotation</title>\
<p>The annotation UI bundle is not installed. The JSON API is available under <code>/api</code>.</p>";

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error("static directory {0} does not exist")]
    MissingStatic(PathBuf),
    #[error("server i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub struct AppState {
    tasks: TaskFile,
    store: Mutex<ResultStore>,
}

impl AppState {
    pub fn new(tasks: TaskFile, store: ResultStore) -> Arc<Self> {
        Arc::new(Self {
            tasks,
            store: Mutex::new(store),
        })
    }

    pub fn open(tasks: &Path, results: &Path) -> Result<Arc<Self>, ServerError> {
        Ok(Self::new(TaskFile::load(tasks)?, ResultStore::open(results)?))
    }

    fn store(&self) -> std::sync::MutexGuard<'_, ResultStore> {
        self.store.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }
}

/// Builds the service. Without `static_dir` a placeholder page is served at `/`.
pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/tasks", get(list_tasks))
        .route("/api/task/{id}", get(get_task))
        .route("/api/task/{id}/result", post(post_result))
        .route("/api/export", get(export))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER_INDEX) })),
    }
}

/// Serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr, static_dir: Option<PathBuf>) -> Result<(), ServerError> {
    if let Some(dir) = &static_dir {
        if !dir.is_dir() {
            return Err(ServerError::MissingStatic(dir.clone()));
        }
    }
    let app = router(state, static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "annotation service listening");
    axum::serve(listener, app).await?;
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
struct RaterQuery {
    rater: Option<String>,
}

fn rater_from(headers: &HeaderMap, query: &RaterQuery) -> Option<String> {
    headers
        .get(RATER_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .or_else(|| query.rater.clone())
        .map(|r| r.trim().to_string())
        .filter(|r| !r.is_empty())
}

fn field_errors(status: StatusCode, errors: Vec<FieldError>) -> Response {
    (status, Json(json!({ "errors": errors }))).into_response()
}

fn not_found(id: &str) -> Response {
    (StatusCode::NOT_FOUND, Json(json!({ "error": format!("unknown task '{id}'") }))).into_response()
}

#[derive(Debug, Serialize)]
struct TaskSummary<'a> {
    id: &'a str,
    kind: TaskKind,
    submissions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    done: Option<bool>,
}

async fn list_tasks(State(state): State<Arc<AppState>>, headers: HeaderMap, Query(q): Query<RaterQuery>) -> Response {
    let rater = rater_from(&headers, &q);
    let store = state.store();
    let progress = store.progress(&state.tasks);
    let tasks: Vec<TaskSummary> = state
        .tasks
        .tasks
        .iter()
        .map(|t| TaskSummary {
            id: &t.id,
            kind: t.kind(),
            submissions: progress.submitted.get(&t.id).map_or(0, Vec::len),
            done: rater.as_deref().map(|r| store.get(&t.id, r).is_some()),
        })
        .collect();
    let completed = rater
        .as_deref()
        .map(|r| tasks.iter().filter(|t| store.get(t.id, r).is_some()).count());
    Json(json!({
        "schema": state.tasks.schema,
        "kind": state.tasks.kind,
        "total": tasks.len(),
        "completed": completed,
        "tasks": tasks,
        "progress": progress,
    }))
    .into_response()
}

/// Re-expresses a stored record in the blind shape the rater submitted.
fn blind_answer(task: &AnnotationTask, order: &[usize], record: &AnnotationRecord) -> Value {
    match (record, &task.payload) {
        (AnnotationRecord::Rating(r), _) => json!({ "q1": r.q1, "q2": r.q2, "q3": r.q3 }),
        (AnnotationRecord::Ranking(r), TaskPayload::Ranking(p)) => {
            let ranks: serde_json::Map<String, Value> = BLIND_LABELS
                .iter()
                .zip(order)
                .filter_map(|(label, &k)| r.ranks.get(&p.candidates[k].system).map(|v| (label.to_string(), json!(v))))
                .collect();
            json!({ "ranks": ranks })
        }
        _ => Value::Null,
    }
}

async fn get_task(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    Query(q): Query<RaterQuery>,
) -> Response {
    let Some(task) = state.tasks.get(&id) else {
        return not_found(&id);
    };
    let rater = rater_from(&headers, &q);
    if task.kind() == TaskKind::Ranking && rater.is_none() {
        return field_errors(
            StatusCode::BAD_REQUEST,
            vec![FieldError::new("rater_id", "ranking tasks need a rater id")],
        );
    }
    let rater = rater.unwrap_or_default();
    let blind = blind_task(task, state.tasks.seed, &rater);
    let previous = state.store().get(&id, &rater).map(|e| {
        let order = e.order.clone().unwrap_or_else(|| blind_order(state.tasks.seed, &id, &rater));
        blind_answer(task, &order, &e.record)
    });
    Json(json!({ "task": blind, "previous": previous })).into_response()
}

async fn post_result(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    Query(q): Query<RaterQuery>,
    body: Bytes,
) -> Response {
    let Some(task) = state.tasks.get(&id) else {
        return not_found(&id);
    };
    let body: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => {
            return (StatusCode::BAD_REQUEST, Json(json!({ "error": format!("malformed JSON: {e}") }))).into_response()
        }
    };
    let rater = rater_from(&headers, &q)
        .or_else(|| body.get("rater_id").and_then(Value::as_str).map(|s| s.trim().to_string()))
        .unwrap_or_default();
    let record = match validate_submission(task, state.tasks.seed, &rater, &body) {
        Ok(r) => r,
        Err(AnnotationError::Invalid(errors)) => return field_errors(StatusCode::UNPROCESSABLE_ENTITY, errors),
        Err(e) => return (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    };
    let order = (task.kind() == TaskKind::Ranking).then(|| blind_order(state.tasks.seed, &id, &rater));
    match state.store().submit(&id, &rater, record, order) {
        Ok(outcome) => Json(json!({ "task_id": id, "rater_id": rater, "outcome": outcome })).into_response(),
        Err(e) => {
            tracing::error!(error = %e, "failed to persist submission");
            (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": e.to_string() }))).into_response()
        }
    }
}

async fn export(State(state): State<Arc<AppState>>) -> Response {
    let body = state.store().export_jsonl();
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}
