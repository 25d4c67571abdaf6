use std::future::Future;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Redirect, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use facevq_core::domain::QualityLevel;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tower::ServiceExt;
use tower_http::services::ServeFile;

use crate::config::CreateStudyRequest;
use crate::error::ServiceError;
use crate::state::RatingSubmission;
use crate::store::Store;

type AppState = Arc<Store>;

pub struct ApiError(ServiceError);

impl<E: Into<ServiceError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

fn status_for(e: &ServiceError) -> StatusCode {
    use ServiceError::*;
    match e {
        StudyNotFound(_) | SubjectNotFound(_) | UnknownVideo(_) | UnknownBatch(_) | NoTrainingSet => {
            StatusCode::NOT_FOUND
        }
        DuplicateStudy(_) | DuplicateSubject(_) | StudyClosed(_) | WrongStatus { .. }
        | TestExhausted(_) | OutOfOrder { .. } | WrongBatch { .. } | Blocked(_)
        | RevisionForbidden { .. } | BatchIncomplete { .. } => StatusCode::CONFLICT,
        InvalidStudy(_) | InvalidId(_) | WrongCount { .. } | WrongTestSet(_) | Score(_)
        | WrongSessionKind { .. } => StatusCode::BAD_REQUEST,
        PlaybackIncomplete(_) => StatusCode::UNPROCESSABLE_ENTITY,
        CorruptLog(_) | Io(_) | Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.0);
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        let mut body = json!({ "error": self.0.code(), "message": self.0.to_string() });
        match &self.0 {
            ServiceError::Blocked(reason) => body["reason"] = json!(reason),
            ServiceError::BatchIncomplete { pending, .. } => body["pending"] = json!(pending),
            _ => {}
        }
        (status, Json(body)).into_response()
    }
}

fn bad_json(e: JsonRejection) -> Response {
    let body = json!({ "error": "invalid_request", "message": e.body_text() });
    (StatusCode::BAD_REQUEST, Json(body)).into_response()
}

type ApiResult<T> = Result<T, ApiError>;

/// Store calls may fsync, so keep them off the async workers.
async fn blocking<T, F>(store: AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Store) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(e)))?
        .map_err(ApiError)
}

async fn create_study(
    State(store): State<AppState>,
    body: Result<Json<CreateStudyRequest>, JsonRejection>,
) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return bad_json(e),
    };
    match blocking(store, move |s| s.create_study(req)).await {
        Ok(summary) => (StatusCode::CREATED, Json(summary)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_study(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(store.summary(&id)?).into_response())
}

async fn close_study(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let summary = blocking(store, move |s| s.close_study(&id)).await?;
    Ok(Json(summary).into_response())
}

#[derive(Deserialize)]
struct RegisterBody {
    subject_id: String,
}

async fn register(
    State(store): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<RegisterBody>, JsonRejection>,
) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return bad_json(e),
    };
    match blocking(store, move |s| s.register_subject(&id, &body.subject_id)).await {
        Ok(r) => (StatusCode::CREATED, Json(r.profile)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_subject(
    State(store): State<AppState>,
    Path((id, sid)): Path<(String, String)>,
) -> ApiResult<Response> {
    Ok(Json(store.subject(&id, &sid)?).into_response())
}

#[derive(Serialize)]
struct TrainingEntry {
    video_id: String,
    media_url: String,
    level: QualityLevel,
    criteria: String,
}

async fn training(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let entries: Vec<TrainingEntry> = store
        .training(&id)?
        .into_iter()
        .map(|e| TrainingEntry {
            media_url: format!("/media/{}", e.video_id),
            video_id: e.video_id,
            level: e.level,
            criteria: e.criteria,
        })
        .collect();
    Ok(Json(entries).into_response())
}

async fn acknowledge_training(
    State(store): State<AppState>,
    Path((id, sid)): Path<(String, String)>,
) -> ApiResult<Response> {
    let r = blocking(store, move |s| s.acknowledge_training(&id, &sid)).await?;
    Ok(Json(r.profile).into_response())
}

#[derive(Deserialize)]
struct TestBody {
    ratings: Vec<RatingSubmission>,
}

async fn submit_test(
    State(store): State<AppState>,
    Path((id, sid)): Path<(String, String)>,
    body: Result<Json<TestBody>, JsonRejection>,
) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return bad_json(e),
    };
    match blocking(store, move |s| s.submit_test(&id, &sid, &body.ratings)).await {
        Ok(r) => Json(r).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn next_item(
    State(store): State<AppState>,
    Path((id, sid)): Path<(String, String)>,
) -> ApiResult<Response> {
    Ok(Json(store.next_item(&id, &sid)?).into_response())
}

async fn submit_rating(
    State(store): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<RatingSubmission>, JsonRejection>,
) -> Response {
    let Json(sub) = match body {
        Ok(b) => b,
        Err(e) => return bad_json(e),
    };
    match blocking(store, move |s| s.submit_rating(&id, &sub)).await {
        Ok(ack) => Json(ack).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn screen(
    State(store): State<AppState>,
    Path((id, b)): Path<(String, u32)>,
) -> ApiResult<Response> {
    let r = blocking(store, move |s| s.screen_batch(&id, b)).await?;
    Ok(Json(r).into_response())
}

async fn export(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = store.export(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], bytes).into_response())
}

async fn media(
    State(store): State<AppState>,
    Path(video_id): Path<String>,
    req: Request,
) -> ApiResult<Response> {
    let record = store
        .find_video(&video_id)
        .ok_or_else(|| ServiceError::UnknownVideo(video_id.clone()))?;
    if let Some(path) = record.local_media_path() {
        let served = ServeFile::new(path)
            .oneshot(req)
            .await
            .map_err(|e| ServiceError::Io(std::io::Error::other(e)))?;
        return Ok(served.map(Body::new).into_response());
    }
    let uri = record.media_uri.as_str();
    if uri.starts_with("http://") || uri.starts_with("https://") {
        return Ok(Redirect::temporary(uri).into_response());
    }
    Err(ServiceError::UnknownVideo(video_id).into())
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/studies", post(create_study))
        .route("/studies/{id}", get(get_study))
        .route("/studies/{id}/close", post(close_study))
        .route("/studies/{id}/subjects", post(register))
        .route("/studies/{id}/subjects/{sid}", get(get_subject))
        .route("/studies/{id}/training", get(training))
        .route("/studies/{id}/subjects/{sid}/training", post(acknowledge_training))
        .route("/studies/{id}/subjects/{sid}/test", post(submit_test))
        .route("/studies/{id}/subjects/{sid}/next", get(next_item))
        .route("/studies/{id}/ratings", post(submit_rating))
        .route("/studies/{id}/batches/{b}/screen", post(screen))
        .route("/studies/{id}/export", get(export))
        .route("/media/{video_id}", get(media))
        .with_state(store)
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    store: Arc<Store>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "listening");
    axum::serve(listener, router(store))
        .with_graceful_shutdown(shutdown)
        .await
}
