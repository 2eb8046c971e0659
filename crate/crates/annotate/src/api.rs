use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::HeaderMap;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;

use crate::error::{ServiceError, ServiceResult};
use crate::service::{AgreementView, AnnotationService, NextPost, Principal, WriteAck};

type AppState = Arc<AnnotationService>;

/// HTTP routes over a service; static files from `static_dir` when given.
pub fn router(service: Arc<AnnotationService>, static_dir: Option<&std::path::Path>) -> Router {
    let api = Router::new()
        .route("/api/scheme", get(scheme))
        .route("/api/samples/{id}/next", get(next))
        .route("/api/samples/{id}/labels", post(labels))
        .route("/api/samples/{id}/resolutions", post(resolutions))
        .route("/api/samples/{id}/agreement", get(agreement))
        .route("/api/samples/{id}/export.csv", get(export))
        .with_state(service);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn principal(service: &AnnotationService, headers: &HeaderMap) -> ServiceResult<Principal> {
    let token = headers
        .get(AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or(ServiceError::Unauthorized)?;
    service.authenticate(token.trim())
}

async fn scheme(State(s): State<AppState>, headers: HeaderMap) -> ServiceResult<impl IntoResponse> {
    principal(&s, &headers)?;
    Ok(Json(s.scheme().clone()))
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: Option<String>,
}

async fn next(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<NextQuery>,
    headers: HeaderMap,
) -> ServiceResult<Json<NextPost>> {
    let who = principal(&s, &headers)?;
    let annotator = s.acting_annotator(&who, q.annotator.as_deref())?;
    Ok(Json(s.next(&id, &annotator)?))
}

#[derive(Deserialize)]
struct LabelBody {
    post_id: String,
    class_id: String,
    #[serde(default)]
    annotator: Option<String>,
}

/// Blocking journal writes run off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ServiceResult<T> + Send + 'static) -> ServiceResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Corrupt(format!("writer task failed: {e}")))?
}

async fn labels(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(body): Json<LabelBody>,
) -> ServiceResult<Json<WriteAck>> {
    let who = principal(&s, &headers)?;
    let annotator = s.acting_annotator(&who, body.annotator.as_deref())?;
    let ack = blocking(move || s.submit(&id, &annotator, &body.post_id, &body.class_id)).await?;
    Ok(Json(ack))
}

#[derive(Deserialize)]
struct ResolutionBody {
    post_id: String,
    class_id: String,
}

async fn resolutions(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(body): Json<ResolutionBody>,
) -> ServiceResult<Json<WriteAck>> {
    let by = match principal(&s, &headers)? {
        Principal::Annotator(a) => a,
        Principal::Admin => "admin".to_owned(),
    };
    let ack = blocking(move || s.resolve(&id, &by, &body.post_id, &body.class_id)).await?;
    Ok(Json(ack))
}

async fn agreement(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ServiceResult<Json<AgreementView>> {
    principal(&s, &headers)?;
    Ok(Json(s.agreement(&id)?))
}

async fn export(State(s): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> ServiceResult<impl IntoResponse> {
    if principal(&s, &headers)? != Principal::Admin {
        return Err(ServiceError::Forbidden("export needs an admin token".into()));
    }
    Ok(([(CONTENT_TYPE, "text/csv; charset=utf-8")], s.export(&id)?))
}
