use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::service::{Service, ServiceError};
use crate::reqmodel::ReqError;

impl ServiceError {
    pub fn status_code(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSetup(_) | ServiceError::UnknownRequirement(_) | ServiceError::UnknownRun(_) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::AlreadyRunning { .. } | ServiceError::LoopInProgress(_) => StatusCode::CONFLICT,
            ServiceError::Malformed(_) | ServiceError::App(_) | ServiceError::NeverVerified(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ServiceError::AmbiguousRequirement(_) | ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.to_string() });
        if let ServiceError::Malformed(ReqError::MalformedBlock { line, reason }) = &self {
            body["line"] = json!(line);
            body["reason"] = json!(reason);
        }
        if let ServiceError::AlreadyRunning { run_id, .. } = &self {
            body["run_id"] = json!(run_id);
        }
        (self.status_code(), Json(body)).into_response()
    }
}

type ApiResult = Result<Response, ServiceError>;

#[derive(Deserialize)]
struct NewSetup {
    app_ref: String,
    requirements: String,
}

#[derive(Deserialize, Default)]
struct VerifyBody {
    #[serde(default)]
    requirement_ids: Option<Vec<String>>,
    #[serde(default)]
    parallelism: Option<usize>,
}

#[derive(Deserialize)]
struct PageQuery {
    page: Option<usize>,
    page_size: Option<usize>,
}

async fn list_setups(State(svc): State<Arc<Service>>) -> ApiResult {
    let setups: Vec<_> = svc.list_setups().into_iter().map(|r| r.setup).collect();
    Ok(Json(json!({ "setups": setups })).into_response())
}

async fn create_setup(State(svc): State<Arc<Service>>, Json(body): Json<NewSetup>) -> ApiResult {
    let rec = svc.create_setup(&body.app_ref, &body.requirements)?;
    Ok((StatusCode::CREATED, Json(rec)).into_response())
}

async fn requirements(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult {
    let reqs = svc.requirements(&id)?;
    Ok(Json(json!({ "setup_id": id, "requirements": reqs })).into_response())
}

async fn verify(State(svc): State<Arc<Service>>, Path(id): Path<String>, body: Option<Json<VerifyBody>>) -> ApiResult {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    let run_ids = svc.start_verification(&id, body.requirement_ids.as_deref(), body.parallelism)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "setup_id": id, "run_ids": run_ids }))).into_response())
}

async fn run(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult {
    let mut run = svc.run(&id)?;
    let steps = run.trajectory.len();
    run.trajectory.clear();
    let mut body = serde_json::to_value(&run).expect("run serializes");
    body["steps"] = json!(steps);
    Ok(Json(body).into_response())
}

async fn trajectory(State(svc): State<Arc<Service>>, Path(id): Path<String>, Query(q): Query<PageQuery>) -> ApiResult {
    let page = svc.trajectory(&id, q.page.unwrap_or(1), q.page_size.unwrap_or(50).min(500))?;
    Ok(Json(page).into_response())
}

async fn status(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult {
    Ok(Json(svc.run_status(&id)?).into_response())
}

async fn mcp(State(svc): State<Arc<Service>>, body: String) -> Response {
    match crate::mcpserver::handle_text(&svc, &body) {
        Some(reply) => ([(axum::http::header::CONTENT_TYPE, "application/json")], reply).into_response(),
        None => StatusCode::ACCEPTED.into_response(),
    }
}

/// HTTP routes for the web UI plus the tool server at `/mcp`.
pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/api/setups", get(list_setups).post(create_setup))
        .route("/api/setups/{id}/requirements", get(requirements))
        .route("/api/setups/{id}/verify", post(verify))
        .route("/api/runs/{id}", get(run))
        .route("/api/runs/{id}/trajectory", get(trajectory))
        .route("/api/runs/{id}/status", get(status))
        .route("/mcp", post(mcp))
        .with_state(svc)
}

