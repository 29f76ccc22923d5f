//! `/v1` HTTP routes over a [`SessionStore`].
//!
//! | method | path | body | answer |
//! |---|---|---|---|
//! | POST | `/v1/sessions` | screenshot bytes | 201, session view |
//! | GET | `/v1/sessions/{id}` | | session view |
//! | GET, PUT | `/v1/sessions/{id}/layout` | `{revision, layout}` | layout / session view |
//! | GET, PUT | `/v1/sessions/{id}/tree` | `{revision, tree}` | tree / session view |
//! | POST | `/v1/sessions/{id}/nodes/{node}/regenerate` | `{revision, instruction?}` | session view |
//! | GET | `/v1/sessions/{id}/html` | | `text/html` |
//! | GET | `/v1/sessions/{id}/metrics` | | metrics or `null` |
//! | GET | `/v1/sessions/{id}/report` | | run report |
//! | GET | `/v1/sessions/{id}/screenshot` | | `image/png` |
//!
//! Errors are `{"error": ..}` with 404 for unknown sessions and nodes, 409
//! plus `current_revision` for stale revisions, 422 for rejected payloads and
//! 502 for backend failures.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use crate::session::{parse_layout_body, parse_regenerate_body, parse_tree_body, SessionError, SessionStore};

/// Upload ceiling for screenshots.
pub const MAX_BODY_BYTES: usize = 32 * 1024 * 1024;

pub struct ApiError(SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let message = self.0.to_string();
        match self.0 {
            SessionError::UnknownSession(_) | SessionError::UnknownNode(_) => {
                (StatusCode::NOT_FOUND, Json(json!({ "error": message }))).into_response()
            }
            SessionError::Conflict { current, .. } => (
                StatusCode::CONFLICT,
                Json(json!({ "error": message, "current_revision": current })),
            )
                .into_response(),
            SessionError::Invalid(_) => (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "error": message }))).into_response(),
            SessionError::Backend(_) => (StatusCode::BAD_GATEWAY, Json(json!({ "error": message }))).into_response(),
            SessionError::Pipeline(_) | SessionError::Storage { .. } => {
                log::error!("{message}");
                (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": message }))).into_response()
            }
        }
    }
}

type Store = State<Arc<SessionStore>>;

/// Runs store work off the async executor.
async fn blocking<T: Send + 'static>(
    store: Arc<SessionStore>,
    f: impl FnOnce(&SessionStore) -> Result<T, SessionError> + Send + 'static,
) -> Result<T, ApiError> {
    match tokio::task::spawn_blocking(move || f(&store)).await {
        Ok(r) => r.map_err(ApiError),
        Err(e) => Err(ApiError(SessionError::Storage {
            path: Default::default(),
            message: format!("worker failed: {e}"),
        })),
    }
}

fn json_text(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create))
        .route("/v1/sessions/{id}", get(view))
        .route("/v1/sessions/{id}/layout", get(get_layout).put(put_layout))
        .route("/v1/sessions/{id}/tree", get(get_tree).put(put_tree))
        .route("/v1/sessions/{id}/nodes/{node}/regenerate", post(regenerate))
        .route("/v1/sessions/{id}/html", get(html))
        .route("/v1/sessions/{id}/metrics", get(metrics))
        .route("/v1/sessions/{id}/report", get(report))
        .route("/v1/sessions/{id}/screenshot", get(screenshot))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(store)
}

async fn create(State(store): Store, body: Bytes) -> Result<Response, ApiError> {
    let view = blocking(store, move |s| s.create(&body)).await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn view(State(store): Store, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(blocking(store, move |s| s.view(&id)).await?).into_response())
}

async fn get_layout(State(store): Store, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(blocking(store, move |s| s.layout(&id)).await?).into_response())
}

async fn put_layout(State(store): Store, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let view = blocking(store, move |s| {
        s.dir(&id)?;
        s.put_layout(&id, parse_layout_body(&body)?)
    })
    .await?;
    Ok(Json(view).into_response())
}

async fn get_tree(State(store): Store, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(blocking(store, move |s| s.tree(&id)).await?).into_response())
}

async fn put_tree(State(store): Store, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let view = blocking(store, move |s| {
        s.dir(&id)?;
        s.put_tree(&id, parse_tree_body(&body)?)
    })
    .await?;
    Ok(Json(view).into_response())
}

async fn regenerate(
    State(store): Store,
    Path((id, node)): Path<(String, String)>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let view = blocking(store, move |s| {
        s.dir(&id)?;
        s.regenerate(&id, &node, parse_regenerate_body(&body)?)
    })
    .await?;
    Ok(Json(view).into_response())
}

async fn html(State(store): Store, Path(id): Path<String>) -> Result<Response, ApiError> {
    let body = blocking(store, move |s| s.html(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "text/html; charset=utf-8")], body).into_response())
}

async fn metrics(State(store): Store, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(json_text(blocking(store, move |s| s.metrics(&id)).await?))
}

async fn report(State(store): Store, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(json_text(blocking(store, move |s| s.report(&id)).await?))
}

async fn screenshot(State(store): Store, Path(id): Path<String>) -> Result<Response, ApiError> {
    let png = blocking(store, move |s| s.screenshot(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}
