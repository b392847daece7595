//! HTTP+JSON review service: serves pending drafts and their frame/gaze
//! assets, accepts edits, approvals and Likert ratings, and records every
//! change as an event in the dataset store.

pub mod error;
pub mod tasks;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use vista_core::keyframe::AssetSlot;
use vista_core::overlay::{frame_png, overlay_png};
use vista_core::store::Store;

pub use error::ReviewError;
pub use tasks::{
    ExportedCaption, RatingOutcome, ReviewPolicy, ReviewTask, TaskPage, TaskSummary, DEFAULT_PAGE_SIZE, MAX_PAGE_SIZE,
};

pub const ENV_TOKEN: &str = "VISTA_REVIEW_TOKEN";

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Shared bearer token; requests are unauthenticated when unset.
    pub token: Option<String>,
    pub policy: ReviewPolicy,
}

impl ServiceConfig {
    pub fn from_env() -> Self {
        let token = std::env::var(ENV_TOKEN).ok().filter(|t| !t.is_empty());
        Self { token, policy: ReviewPolicy::default() }
    }
}

/// Shared handle: concurrent readers, one writer at a time.
#[derive(Clone)]
pub struct ReviewState {
    store: Arc<RwLock<Store>>,
    config: Arc<ServiceConfig>,
}

impl ReviewState {
    pub fn new(store: Store, config: ServiceConfig) -> Self {
        Self { store: Arc::new(RwLock::new(store)), config: Arc::new(config) }
    }

    pub fn store(&self) -> &Arc<RwLock<Store>> {
        &self.store
    }

    fn read<T>(&self, f: impl FnOnce(&Store, &ReviewPolicy) -> T) -> T {
        let guard = self.store.read().unwrap_or_else(|p| p.into_inner());
        f(&guard, &self.config.policy)
    }

    fn write<T>(&self, f: impl FnOnce(&mut Store, &ReviewPolicy) -> T) -> T {
        let mut guard = self.store.write().unwrap_or_else(|p| p.into_inner());
        f(&mut guard, &self.config.policy)
    }
}

pub fn router(state: ReviewState) -> Router {
    Router::new()
        .route("/tasks", get(list_tasks))
        .route("/tasks/{id}", get(get_task))
        .route("/tasks/{id}/assets/{slot}", get(get_asset))
        .route("/tasks/{id}/claim", post(claim_task))
        .route("/tasks/{id}/edit", post(edit_task))
        .route("/tasks/{id}/approve", post(approve_task))
        .route("/tasks/{id}/rating", post(rate_task))
        .route("/export/refined", get(export_refined))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

fn tokens_match(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

async fn require_token(State(state): State<ReviewState>, headers: HeaderMap, req: Request, next: Next) -> Response {
    if let Some(expected) = &state.config.token {
        let presented = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim);
        if !presented.is_some_and(|p| tokens_match(p.as_bytes(), expected.as_bytes())) {
            return ReviewError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ReviewError> {
    serde_json::from_slice(body).map_err(|e| ReviewError::BadRequest(format!("invalid request body: {e}")))
}

fn parse_usize(params: &HashMap<String, String>, key: &str, default: usize) -> Result<usize, ReviewError> {
    match params.get(key).map(|s| s.trim()).filter(|s| !s.is_empty()) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| ReviewError::BadRequest(format!("{key} must be a non-negative integer"))),
    }
}

async fn list_tasks(
    State(state): State<ReviewState>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<TaskPage>, ReviewError> {
    let filter = tasks::parse_status_filter(params.get("status").map(String::as_str))?;
    let page = parse_usize(&params, "page", 1)?;
    let page_size = parse_usize(&params, "page_size", DEFAULT_PAGE_SIZE)?;
    state.read(|s, _| tasks::list_tasks(s, filter, page, page_size)).map(Json)
}

async fn get_task(State(state): State<ReviewState>, Path(id): Path<String>) -> Result<Json<ReviewTask>, ReviewError> {
    state.read(|s, p| tasks::get_task(s, &id, p)).map(Json)
}

async fn get_asset(
    State(state): State<ReviewState>,
    Path((id, slot)): Path<(String, String)>,
) -> Result<Response, ReviewError> {
    let slot = AssetSlot::parse(&slot).ok_or_else(|| {
        ReviewError::BadRequest(format!("unknown slot '{slot}'; expected rgb_t, gaze_t, rgb_t1 or gaze_t1"))
    })?;
    let (frame, gaze) = state.read(|s, _| {
        let r = s.manifest().record(&id).ok_or_else(|| ReviewError::NotFound(id.clone()))?;
        let frame_slot = match slot {
            AssetSlot::GazeT => AssetSlot::RgbT,
            AssetSlot::GazeT1 => AssetSlot::RgbT1,
            other => other,
        };
        let frame = s.asset_path(&r.pair.asset(frame_slot).path);
        let gaze = slot.is_gaze().then(|| s.asset_path(&r.pair.asset(slot).path));
        Ok::<_, ReviewError>((frame, gaze))
    })?;
    let png = tokio::task::spawn_blocking(move || match gaze {
        Some(g) => overlay_png(&frame, &g),
        None => frame_png(&frame),
    })
    .await
    .map_err(|e| ReviewError::Internal(format!("asset rendering aborted: {e}")))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Deserialize)]
struct ActorBody {
    actor_id: String,
}

#[derive(Deserialize)]
struct EditBody {
    actor_id: String,
    text: String,
}

#[derive(Deserialize)]
struct RatingBody {
    evaluator_id: String,
    quality: i64,
    informativeness: i64,
    correctness: i64,
}

fn require_actor(actor: &str) -> Result<(), ReviewError> {
    if actor.trim().is_empty() {
        return Err(ReviewError::BadRequest("actor id must not be empty".to_string()));
    }
    Ok(())
}

async fn claim_task(
    State(state): State<ReviewState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<ReviewTask>, ReviewError> {
    let b: ActorBody = parse_body(&body)?;
    require_actor(&b.actor_id)?;
    state.write(|s, p| tasks::claim_task(s, &id, &b.actor_id, p)).map(Json)
}

async fn edit_task(
    State(state): State<ReviewState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<ReviewTask>, ReviewError> {
    let b: EditBody = parse_body(&body)?;
    require_actor(&b.actor_id)?;
    state.write(|s, p| tasks::submit_edit(s, &id, &b.text, &b.actor_id, p)).map(Json)
}

async fn approve_task(
    State(state): State<ReviewState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<ReviewTask>, ReviewError> {
    let b: ActorBody = parse_body(&body)?;
    require_actor(&b.actor_id)?;
    state.write(|s, p| tasks::approve_task(s, &id, &b.actor_id, p)).map(Json)
}

async fn rate_task(
    State(state): State<ReviewState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<RatingOutcome>), ReviewError> {
    let b: RatingBody = parse_body(&body)?;
    require_actor(&b.evaluator_id)?;
    let values = (b.quality, b.informativeness, b.correctness);
    let outcome = state.write(|s, p| tasks::submit_rating(s, &id, &b.evaluator_id, values, p))?;
    let status = if outcome.replaced.is_some() { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(outcome)))
}

async fn export_refined(State(state): State<ReviewState>) -> Json<Vec<ExportedCaption>> {
    Json(state.read(|s, _| tasks::export_refined(s)))
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: ReviewState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Runs [`serve`] on a fresh multi-threaded runtime.
pub fn serve_blocking(addr: SocketAddr, state: ReviewState) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()?.block_on(serve(addr, state))
}
