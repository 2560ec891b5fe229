//! HTTP surface of a campaign.
//!
//! | method | path                              | body / reply                            |
//! |--------|-----------------------------------|-----------------------------------------|
//! | GET    | `/api/campaign`                   | campaign info                           |
//! | GET    | `/api/pairs/next?annotator=ID`    | next pair with left/right image ids     |
//! | POST   | `/api/judgments`                  | `{annotator_id, pair_id, choice}`       |
//! | GET    | `/api/progress`                   | per-annotator and per-pair counts       |
//! | POST   | `/api/export`                     | majority-vote labels and counts         |
//! | GET    | `/api/images/{id}`                | PNG bytes                               |
//!
//! Errors reply with `{"error": <code>, "message": <text>}`.

use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use blurrank::datasets::Manifest;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::campaign::{
    Ack, Campaign, CampaignError, CampaignInfo, Export, NextPair, Progress, ScreenChoice,
};

pub struct AppState {
    campaign: RwLock<Campaign>,
    images: Option<Manifest>,
}

impl AppState {
    pub fn new(campaign: Campaign, images: Option<Manifest>) -> Arc<Self> {
        Arc::new(Self {
            campaign: RwLock::new(campaign),
            images,
        })
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Campaign> {
        self.campaign.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Campaign> {
        self.campaign.write().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

#[derive(Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl From<CampaignError> for ApiError {
    fn from(e: CampaignError) -> Self {
        let (status, code) = match &e {
            CampaignError::UnknownPair(_) => (StatusCode::NOT_FOUND, "unknown_pair"),
            CampaignError::NotServed { .. } => (StatusCode::CONFLICT, "pair_not_served"),
            CampaignError::Invalid(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            CampaignError::Log { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "log_write_failed"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    pub annotator: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub annotator_id: String,
    pub pair_id: u32,
    pub choice: ScreenChoice,
}

/// Builds the API router; `ui_dir`, when given, is served for all other paths.
pub fn router(state: Arc<AppState>, ui_dir: Option<&FsPath>) -> Router {
    let api = Router::new()
        .route("/api/campaign", get(campaign_info))
        .route("/api/pairs/next", get(next_pair))
        .route("/api/judgments", post(submit))
        .route("/api/progress", get(progress))
        .route("/api/export", post(export))
        .route("/api/images/{id}", get(image))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(PathBuf::from(dir))),
        None => api,
    }
}

async fn campaign_info(State(state): State<Arc<AppState>>) -> Json<CampaignInfo> {
    Json(state.read().info())
}

async fn next_pair(
    State(state): State<Arc<AppState>>,
    Query(q): Query<NextQuery>,
) -> ApiResult<NextPair> {
    let annotator = q.annotator.filter(|a| !a.is_empty()).ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "missing_annotator",
            "query parameter `annotator` is required",
        )
    })?;
    Ok(Json(state.write().next_pair(&annotator)?))
}

async fn submit(
    State(state): State<Arc<AppState>>,
    body: Result<Json<SubmitRequest>, JsonRejection>,
) -> ApiResult<Ack> {
    let Json(req) =
        body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))?;
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64);
    Ok(Json(state.write().submit(
        &req.annotator_id,
        req.pair_id,
        req.choice,
        now,
    )?))
}

async fn progress(State(state): State<Arc<AppState>>) -> Json<Progress> {
    Json(state.read().progress())
}

async fn export(State(state): State<Arc<AppState>>) -> Json<Export> {
    Json(state.read().export())
}

async fn image(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let not_found = || {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_image",
            format!("no image `{id}`"),
        )
    };
    let manifest = state.images.as_ref().ok_or_else(not_found)?;
    let record = manifest.image(&id).ok_or_else(not_found)?;
    let path = manifest.image_path(record);
    let bytes = tokio::fs::read(&path).await.map_err(|e| {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "image_read_failed",
            format!("{}: {e}", path.display()),
        )
    })?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

/// Serves `app` on `listener` until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
