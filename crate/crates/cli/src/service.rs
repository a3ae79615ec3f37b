//! Local annotation service under `/api/v1`.
//!
//! Every mutating route maps to one [`AnnotationStore`] call. The store sits
//! behind a mutex, which serializes mutations; handlers run it on the
//! blocking pool since bank computation and file I/O are synchronous.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use anyhow::Context;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use maskbench_core::bank::{Degeneracy, MethodDescriptor, Polarity};
use maskbench_core::mask::{overlay, EditKind, MaskError, Polygon};
use maskbench_core::store::{
    load_manifest, AnnotationRecord, AnnotationStatus, AnnotationStore, Draft, OpenMode, StoreError,
};

use crate::{ServeArgs, UsageError};

pub const API_PREFIX: &str = "/api/v1";

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let (status, kind) = match &e {
            StoreError::UnknownImage(_) => (StatusCode::NOT_FOUND, "unknown_image"),
            StoreError::CandidateOutOfRange(_) => (StatusCode::UNPROCESSABLE_ENTITY, "candidate_out_of_range"),
            StoreError::InvariantViolation(_) => (StatusCode::CONFLICT, "invariant_violation"),
            StoreError::ReadOnly => (StatusCode::FORBIDDEN, "read_only"),
            StoreError::LockHeld(_) => (StatusCode::CONFLICT, "lock_held"),
            StoreError::Mask(MaskError::DegeneratePolygon(_)) => (StatusCode::BAD_REQUEST, "degenerate_polygon"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        ApiError::new(status, kind, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.kind,
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<AnnotationStore>>,
}

impl AppState {
    pub fn new(store: AnnotationStore) -> Self {
        Self {
            store: Arc::new(Mutex::new(store)),
        }
    }

    /// Run `f` with the store on the blocking pool.
    async fn with_store<T, F>(&self, f: F) -> ApiResult<T>
    where
        T: Send + 'static,
        F: FnOnce(&mut AnnotationStore) -> ApiResult<T> + Send + 'static,
    {
        let store = self.store.clone();
        tokio::task::spawn_blocking(move || {
            let mut guard = store.lock().unwrap_or_else(|p| p.into_inner());
            f(&mut guard)
        })
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
    }
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

fn image_url(id: &str, tail: &str) -> String {
    format!("{API_PREFIX}/images/{id}{tail}")
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ImageSummary {
    pub image_id: String,
    pub status: AnnotationStatus,
}

#[derive(Debug, Deserialize)]
struct PolarityQuery {
    #[serde(default)]
    polarity: Polarity,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BankEntryView {
    pub index: usize,
    pub method: MethodDescriptor,
    pub degenerate: Option<Degeneracy>,
    pub url: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BankView {
    pub image_id: String,
    pub polarity: Polarity,
    pub width: usize,
    pub height: usize,
    pub candidates: Vec<BankEntryView>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionBody {
    pub candidate: usize,
    #[serde(default)]
    pub polarity: Polarity,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PatchBody {
    pub kind: EditKind,
    pub vertices: Vec<[f64; 2]>,
}

/// Working state after a selection or patch.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct DraftView {
    pub image_id: String,
    pub polarity: Polarity,
    pub selected_candidate: u8,
    pub method: Option<MethodDescriptor>,
    pub edit_count: usize,
    pub foreground: usize,
    pub mask_url: String,
    pub overlay_url: String,
}

impl DraftView {
    fn new(image_id: &str, d: &Draft) -> Self {
        Self {
            image_id: image_id.to_string(),
            polarity: d.polarity,
            selected_candidate: d.selected_candidate,
            method: d.method.clone(),
            edit_count: d.edits.len(),
            foreground: d.mask.count_foreground(),
            mask_url: image_url(image_id, "/mask"),
            overlay_url: image_url(image_id, "/overlay"),
        }
    }
}

async fn list_images(State(st): State<AppState>) -> ApiResult<Json<Vec<ImageSummary>>> {
    st.with_store(|s| {
        Ok(Json(
            s.list()
                .into_iter()
                .map(|(image_id, status)| ImageSummary { image_id, status })
                .collect(),
        ))
    })
    .await
}

async fn get_image(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    st.with_store(move |s| Ok(png(s.load_image(&id)?.to_png_bytes()))).await
}

async fn get_bank(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<PolarityQuery>,
) -> ApiResult<Json<BankView>> {
    st.with_store(move |s| {
        let bank = s.bank(&id, q.polarity)?;
        let candidates = bank
            .candidates()
            .iter()
            .enumerate()
            .map(|(i, c)| BankEntryView {
                index: i + 1,
                method: c.method.clone(),
                degenerate: c.degenerate,
                url: image_url(&id, &format!("/bank/{}?polarity={}", i + 1, q.polarity)),
            })
            .collect();
        Ok(Json(BankView {
            image_id: id,
            polarity: q.polarity,
            width: bank.width,
            height: bank.height,
            candidates,
        }))
    })
    .await
}

async fn get_candidate(
    State(st): State<AppState>,
    Path((id, k)): Path<(String, usize)>,
    Query(q): Query<PolarityQuery>,
) -> ApiResult<Response> {
    st.with_store(move |s| {
        let bank = s.bank(&id, q.polarity)?;
        let cand = bank.get(k).ok_or_else(|| {
            ApiError::new(StatusCode::NOT_FOUND, "candidate_out_of_range", format!("candidate {k} not in 1..=16"))
        })?;
        Ok(png(cand.mask.to_png_bytes()))
    })
    .await
}

async fn post_selection(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<SelectionBody>, JsonRejection>,
) -> ApiResult<Json<DraftView>> {
    let Json(body) = body?;
    st.with_store(move |s| {
        let d = s.select(&id, body.candidate, body.polarity)?;
        Ok(Json(DraftView::new(&id, d)))
    })
    .await
}

async fn post_patch(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<PatchBody>, JsonRejection>,
) -> ApiResult<Json<DraftView>> {
    let Json(body) = body?;
    let polygon = Polygon::new(body.vertices)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "degenerate_polygon", e.to_string()))?;
    st.with_store(move |s| {
        let d = s.patch(&id, body.kind, polygon)?;
        Ok(Json(DraftView::new(&id, d)))
    })
    .await
}

async fn get_mask(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    st.with_store(move |s| match s.current_mask(&id)? {
        Some(m) => Ok(png(m.to_binary().to_png_bytes())),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "no_mask", format!("`{id}` has no mask yet"))),
    })
    .await
}

async fn get_overlay(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    st.with_store(move |s| {
        let img = s.load_image(&id)?;
        let shown = match s.current_mask(&id)? {
            Some(m) => overlay(&img, &m).map_err(StoreError::from)?,
            None => img,
        };
        Ok(png(shown.to_png_bytes()))
    })
    .await
}

async fn post_commit(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<AnnotationRecord>> {
    st.with_store(move |s| Ok(Json(s.commit(&id)?))).await
}

async fn post_skip(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<AnnotationRecord>> {
    st.with_store(move |s| Ok(Json(s.skip(&id)?))).await
}

async fn get_annotation(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<AnnotationRecord>> {
    st.with_store(move |s| Ok(Json(s.reload_annotation(&id)?.0))).await
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/images", get(list_images))
        .route("/images/{id}", get(get_image))
        .route("/images/{id}/bank", get(get_bank))
        .route("/images/{id}/bank/{k}", get(get_candidate))
        .route("/images/{id}/selection", post(post_selection))
        .route("/images/{id}/patch", post(post_patch))
        .route("/images/{id}/mask", get(get_mask))
        .route("/images/{id}/overlay", get(get_overlay))
        .route("/images/{id}/commit", post(post_commit))
        .route("/images/{id}/skip", post(post_skip))
        .route("/images/{id}/annotation", get(get_annotation));
    Router::new()
        .nest(API_PREFIX, api)
        .fallback(not_found)
        .with_state(state)
}

pub fn check_listen_address(addr: SocketAddr, allow_remote: bool) -> Result<(), UsageError> {
    if !addr.ip().is_loopback() && !allow_remote {
        return Err(UsageError(format!(
            "refusing to listen on non-loopback address {addr} without --allow-remote"
        )));
    }
    Ok(())
}

pub fn open_store(args: &ServeArgs) -> anyhow::Result<AnnotationStore> {
    let manifest = load_manifest(&args.manifest)?;
    let mode = if args.read_only {
        OpenMode::ReadOnly
    } else {
        OpenMode::ReadWrite
    };
    Ok(AnnotationStore::open(manifest, &args.annotations, mode, args.seed)?)
}

pub async fn serve(listener: TcpListener, store: AnnotationStore) -> std::io::Result<()> {
    axum::serve(listener, router(AppState::new(store)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

pub fn run_blocking(args: &ServeArgs) -> anyhow::Result<()> {
    check_listen_address(args.listen, args.allow_remote)?;
    let store = open_store(args)?;
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(async {
        let listener = TcpListener::bind(args.listen)
            .await
            .with_context(|| format!("binding {}", args.listen))?;
        eprintln!(
            "serving {} images from {} on http://{}{API_PREFIX}",
            store.manifest().len(),
            store.manifest().name,
            listener.local_addr()?
        );
        serve(listener, store).await.context("serving")
    })
}
