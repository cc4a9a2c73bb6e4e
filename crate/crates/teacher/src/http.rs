//! JSON-over-HTTP routes.

use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use crate::error::Error;
use crate::service::TeacherService;

type Shared = Arc<TeacherService>;

impl IntoResponse for Error {
    fn into_response(self) -> Response {
        let status = match &self {
            Error::UnknownCandidate(_) | Error::NotPending(_) | Error::EmptyStore => StatusCode::CONFLICT,
            Error::NoSuchFrame { .. } => StatusCode::NOT_FOUND,
            Error::BadRequest(_) => StatusCode::BAD_REQUEST,
            Error::Core(e) if e.is_precondition() => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

/// Runs a blocking service call off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> crate::Result<T> + Send + 'static,
) -> Result<T, Error> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Error::Io(std::io::Error::other(e)))?
}

#[derive(Deserialize)]
struct RankingBody {
    session_id: String,
    ordering: Vec<String>,
}

#[derive(Deserialize)]
struct GenerateBody {
    n: usize,
    #[serde(default)]
    seed: u64,
}

async fn list_candidates(State(s): State<Shared>) -> Response {
    Json(s.store().list()).into_response()
}

async fn candidate_frame(State(s): State<Shared>, UrlPath((id, k)): UrlPath<(String, usize)>) -> Response {
    match blocking(move || s.store().frame_png(&id, k)).await {
        Ok(png) => ([(header::CONTENT_TYPE, "image/png")], png).into_response(),
        Err(Error::UnknownCandidate(id)) => {
            (StatusCode::NOT_FOUND, Json(json!({ "error": format!("unknown candidate {id}") }))).into_response()
        }
        Err(e) => e.into_response(),
    }
}

async fn post_ranking(State(s): State<Shared>, Json(body): Json<RankingBody>) -> Response {
    match blocking(move || s.store().ingest_ranking(&body.session_id, body.ordering)).await {
        Ok(record) => (StatusCode::CREATED, Json(record)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn post_retrain(State(s): State<Shared>) -> Response {
    match blocking(move || s.retrain()).await {
        Ok(report) => Json(report).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn post_generate(State(s): State<Shared>, Json(body): Json<GenerateBody>) -> Response {
    match blocking(move || s.generate(body.n, body.seed)).await {
        Ok(rows) => (StatusCode::CREATED, Json(rows)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_status(State(s): State<Shared>) -> Response {
    Json(s.status()).into_response()
}

/// API routes, plus static files for any other path when `static_dir` is set.
pub fn router(service: Shared, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/candidates", get(list_candidates))
        .route("/api/candidates/generate", post(post_generate))
        .route("/api/candidates/{id}/frame/{k}", get(candidate_frame))
        .route("/api/rankings", post(post_ranking))
        .route("/api/retrain", post(post_retrain))
        .route("/api/status", get(get_status))
        .with_state(service);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves `router` on `listener` until the task is dropped.
pub async fn serve(listener: TcpListener, router: Router) -> std::io::Result<()> {
    axum::serve(listener, router).await
}
