//! HTTP API over an [`AnnotationStore`].
//!
//! | method | path | body / query |
//! |---|---|---|
//! | GET | `/api/tasks` | `?status=pending&limit=N` |
//! | GET | `/api/tasks/{id}` | |
//! | POST | `/api/tasks/{id}/verdict` | `{"verdict": "correct"\|"incorrect", "annotator": "..."}` |
//! | GET | `/api/progress` | |
//! | POST | `/api/export` | `{"kind": "selector"\|"judgments"}` |
//!
//! Every response carries `schema_version`. Errors are
//! `{"schema_version", "error": {"kind", "message"}}` with 404 for unknown
//! tasks and 422 for invalid input.

use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use granule_core::annotation::{
    AnnotationStore, AnnotationTask, ExportKind, TaskStatus, SCHEMA_VERSION,
};
use granule_core::evaluator::Verdict;
use granule_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

pub const DEFAULT_PORT: u16 = 8080;
pub const PORT_ENV: &str = "GRANULE_PORT";
pub const DEFAULT_LIMIT: usize = 20;
pub const MAX_LIMIT: usize = 1000;

type Shared = Arc<Mutex<AnnotationStore>>;

pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn validation(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            kind: "validation",
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, kind) = match &e {
            Error::UnknownTask(_) => (StatusCode::NOT_FOUND, "not_found"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError {
            status,
            kind,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "schema_version": SCHEMA_VERSION,
            "error": {"kind": self.kind, "message": self.message},
        });
        (self.status, Json(body)).into_response()
    }
}

#[derive(Serialize)]
struct TaskEnvelope {
    schema_version: u32,
    task: AnnotationTask,
}

#[derive(Serialize)]
struct TaskList {
    schema_version: u32,
    count: usize,
    tasks: Vec<AnnotationTask>,
}

#[derive(Deserialize)]
struct ListQuery {
    status: Option<String>,
    limit: Option<String>,
}

fn lock(state: &Shared) -> std::sync::MutexGuard<'_, AnnotationStore> {
    // a panic mid-request cannot leave the store half-written: state only
    // changes after the log append succeeds
    state.lock().unwrap_or_else(|p| p.into_inner())
}

async fn list_tasks(State(state): State<Shared>, Query(q): Query<ListQuery>) -> Result<Json<TaskList>, ApiError> {
    let status = match q.status.as_deref() {
        None | Some("all") => None,
        Some(s) => Some(
            s.parse::<TaskStatus>()
                .map_err(|_| ApiError::validation(format!("status must be pending, labeled or all, got {s:?}")))?,
        ),
    };
    let limit = match q.limit {
        None => DEFAULT_LIMIT,
        Some(l) => l
            .parse::<usize>()
            .ok()
            .filter(|&n| (1..=MAX_LIMIT).contains(&n))
            .ok_or_else(|| ApiError::validation(format!("limit must be an integer in 1..={MAX_LIMIT}, got {l:?}")))?,
    };
    let store = lock(&state);
    let tasks: Vec<AnnotationTask> = store.list(status, limit).into_iter().cloned().collect();
    Ok(Json(TaskList {
        schema_version: SCHEMA_VERSION,
        count: tasks.len(),
        tasks,
    }))
}

async fn get_task(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<TaskEnvelope>, ApiError> {
    let task = lock(&state).get(&id)?.clone();
    Ok(Json(TaskEnvelope {
        schema_version: SCHEMA_VERSION,
        task,
    }))
}

fn parse_body(body: &str) -> Result<Value, ApiError> {
    serde_json::from_str(body).map_err(|e| ApiError::validation(format!("body is not JSON: {e}")))
}

async fn post_verdict(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: String,
) -> Result<Json<TaskEnvelope>, ApiError> {
    let body = parse_body(&body)?;
    let verdict = match body.get("verdict").and_then(Value::as_str) {
        Some("correct") => Verdict::Correct,
        Some("incorrect") => Verdict::Incorrect,
        other => {
            return Err(ApiError::validation(format!(
                "verdict must be \"correct\" or \"incorrect\", got {}",
                other.map_or("nothing".to_string(), |s| format!("{s:?}"))
            )))
        }
    };
    let annotator = match body.get("annotator") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(ApiError::validation("annotator must be a string")),
    };
    let task = tokio::task::spawn_blocking(move || lock(&state).submit(&id, verdict, annotator).cloned())
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            kind: "internal",
            message: e.to_string(),
        })??;
    Ok(Json(TaskEnvelope {
        schema_version: SCHEMA_VERSION,
        task,
    }))
}

async fn progress(State(state): State<Shared>) -> impl IntoResponse {
    Json(lock(&state).progress())
}

async fn export(State(state): State<Shared>, body: String) -> Result<impl IntoResponse, ApiError> {
    let body = parse_body(&body)?;
    let kind = match body.get("kind").and_then(Value::as_str) {
        Some("selector") => ExportKind::Selector,
        Some("judgments") => ExportKind::Judgments,
        _ => return Err(ApiError::validation("kind must be \"selector\" or \"judgments\"")),
    };
    let out = tokio::task::spawn_blocking(move || lock(&state).export(kind))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            kind: "internal",
            message: e.to_string(),
        })??;
    Ok(Json(out))
}

pub fn router(store: AnnotationStore) -> Router {
    let state: Shared = Arc::new(Mutex::new(store));
    Router::new()
        .route("/api/tasks", get(list_tasks))
        .route("/api/tasks/{id}", get(get_task))
        .route("/api/tasks/{id}/verdict", post(post_verdict))
        .route("/api/progress", get(progress))
        .route("/api/export", post(export))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Port from the environment, falling back to [`DEFAULT_PORT`].
pub fn port_from_env() -> Result<u16, Error> {
    match std::env::var(PORT_ENV) {
        Err(_) => Ok(DEFAULT_PORT),
        Ok(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("{PORT_ENV} must be a port number, got {v:?}"))),
    }
}

pub async fn serve(store: AnnotationStore, host: &str, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    eprintln!(
        "{}",
        json!({"event": "listening", "address": listener.local_addr()?.to_string()})
    );
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
