use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clipse_core::index::validate_record_path;
use clipse_core::search::{self, RankedResult};
use clipse_core::Embedding;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::assets;
use crate::state::{AppState, LoadState};

/// Upper bound for `page_size`.
pub const MAX_PAGE_SIZE: usize = 10_000;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/search", get(search_handler))
        .route("/api/health", get(health_handler))
        .route("/api/shard/search", post(shard_search_handler))
        .route("/images/{*path}", get(image_handler))
        .route("/", get(index_page))
        .fallback(get(asset_handler))
        .with_state(state)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: String,
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub elapsed_ms: f64,
    pub results: Vec<RankedResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded: Option<Vec<usize>>,
}

/// Body of `POST /api/shard/search`: a coordinator asking this instance for
/// its local top-k of an already embedded query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShardSearchRequest {
    pub embedding: Vec<f32>,
    pub k: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShardSearchResponse {
    pub results: Vec<RankedResult>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn not_ready(state: &AppState) -> Response {
    match state.inner.load.get() {
        Some(LoadState::Failed(m)) => (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({ "status": "error", "message": m })),
        )
            .into_response(),
        _ => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "status": "loading" })),
        )
            .into_response(),
    }
}

fn positive_param(
    params: &HashMap<String, String>,
    name: &str,
    max: usize,
) -> Result<Option<usize>, String> {
    let Some(raw) = params.get(name) else {
        return Ok(None);
    };
    match raw.trim().parse::<usize>() {
        Ok(v) if (1..=max).contains(&v) => Ok(Some(v)),
        Ok(v) if max == usize::MAX => Err(format!("{name}={v} must be at least 1")),
        Ok(v) => Err(format!("{name}={v} is out of range 1..={max}")),
        Err(_) => Err(format!("{name}='{raw}' is not a positive integer")),
    }
}

async fn search_handler(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let start = Instant::now();
    if state.backend().is_none() {
        return not_ready(&state);
    }
    let Some(query) = params.get("q").cloned() else {
        return error(StatusCode::BAD_REQUEST, "missing query parameter q");
    };
    let parsed = (|| {
        Ok::<_, String>((
            positive_param(&params, "page", usize::MAX)?.unwrap_or(1),
            positive_param(&params, "page_size", MAX_PAGE_SIZE)?
                .unwrap_or(state.inner.default_page_size),
            positive_param(&params, "k", usize::MAX)?,
        ))
    })();
    let (page, page_size, k) = match parsed {
        Ok(v) => v,
        Err(message) => return error(StatusCode::BAD_REQUEST, message),
    };

    let worker = state.clone();
    let q = query.clone();
    let ranked = tokio::task::spawn_blocking(move || {
        let backend = worker.backend().expect("checked above");
        let embedding = worker
            .provider()
            .embed_text(&q)
            .map_err(|e| e.to_string())?;
        backend.rank(&embedding, k)
    })
    .await;

    let ranking = match ranked {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => return error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    let page_view = match search::paginate(&ranking.results, page, page_size) {
        Ok(p) => p,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    Json(SearchResponse {
        query,
        total: page_view.total,
        page: page_view.page,
        page_size: page_view.page_size,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        results: page_view.results,
        degraded: ranking.degraded,
    })
    .into_response()
}

async fn health_handler(State(state): State<AppState>) -> Response {
    match state.backend() {
        Some(backend) => Json(json!({
            "status": "ok",
            "records": backend.record_count(),
            "model_id": backend.model().model_id,
            "dimension": backend.model().dimension,
        }))
        .into_response(),
        None => not_ready(&state),
    }
}

async fn shard_search_handler(
    State(state): State<AppState>,
    Json(request): Json<ShardSearchRequest>,
) -> Response {
    if state.backend().is_none() {
        return not_ready(&state);
    }
    if request.k == 0 {
        return error(StatusCode::BAD_REQUEST, "k must be at least 1");
    }
    let embedding = match Embedding::new(request.embedding) {
        Ok(e) => e,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let k = request.k;
    let worker = state.clone();
    let ranked = tokio::task::spawn_blocking(move || {
        worker
            .backend()
            .expect("checked above")
            .rank(&embedding, Some(k))
    })
    .await;
    match ranked {
        Ok(Ok(r)) => Json(ShardSearchResponse { results: r.results }).into_response(),
        Ok(Err(e)) => error(StatusCode::BAD_REQUEST, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

pub fn content_type_for(path: &str) -> &'static str {
    let ext = Path::new(path)
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

async fn image_handler(State(state): State<AppState>, UrlPath(path): UrlPath<String>) -> Response {
    // Only indexed paths are served; nothing else under images_root is reachable.
    let Some(backend) = state.backend() else {
        return not_ready(&state);
    };
    if validate_record_path(&path).is_err() || !backend.serves_image(&path) {
        return StatusCode::NOT_FOUND.into_response();
    }
    match tokio::fs::read(state.inner.images_root.join(&path)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type_for(&path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn serve_asset(state: &AppState, name: &str) -> Response {
    if let Some(root) = &state.inner.web_root {
        if validate_record_path(name).is_err() {
            return StatusCode::NOT_FOUND.into_response();
        }
        return match tokio::fs::read(root.join(name)).await {
            Ok(bytes) => ([(header::CONTENT_TYPE, content_type_for(name))], bytes).into_response(),
            Err(_) => StatusCode::NOT_FOUND.into_response(),
        };
    }
    match assets::builtin(name) {
        Some(body) => ([(header::CONTENT_TYPE, content_type_for(name))], body).into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn index_page(State(state): State<AppState>) -> Response {
    serve_asset(&state, "index.html").await
}

async fn asset_handler(State(state): State<AppState>, uri: axum::http::Uri) -> Response {
    let name = uri.path().trim_start_matches('/');
    serve_asset(&state, name).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_types() {
        assert_eq!(content_type_for("a/B.PNG"), "image/png");
        assert_eq!(content_type_for("x.jpeg"), "image/jpeg");
        assert_eq!(content_type_for("app.js"), "text/javascript; charset=utf-8");
        assert_eq!(content_type_for("noext"), "application/octet-stream");
    }

    #[test]
    fn param_parsing() {
        let mut p = HashMap::new();
        assert_eq!(positive_param(&p, "page", 10).unwrap(), None);
        p.insert("page".to_string(), "3".to_string());
        assert_eq!(positive_param(&p, "page", 10).unwrap(), Some(3));
        for bad in ["0", "-1", "abc", "2.5", "11", ""] {
            p.insert("page".to_string(), bad.to_string());
            assert!(positive_param(&p, "page", 10).is_err(), "{bad}");
        }
    }
}
