//! HTTP API for driving the interactive loop by hand.
//!
//! Endpoints (JSON bodies, masks as `{height, width, row_ptr, col_idx}`):
//!
//! - `POST /sessions` creates a session from a base64 PNG or a dataset image
//! - `POST /sessions/{id}/prompts` appends a click, box or text prompt
//! - `POST /sessions/{id}/undo` removes the last prompt
//! - `GET /sessions/{id}` returns the full state
//! - `GET /sessions/{id}/image` returns the session image as PNG
//! - `DELETE /sessions/{id}` ends the session
//! - `GET /datasets`, `GET /datasets/{name}` list the served datasets

mod error;
mod session;
mod store;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use imis_core::maskcore::{BBox, ImageGrid, Source};
use imis_core::proposer::{Polarity, Prompt, Segmenter};
use imis_core::storage::{decode_image, discover, encode_png, CsrMask, Dataset, Split};
use imis_core::taxonomy::{normalize_name, CATALOG};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use session::{GtFallback, LiveSession, PredictionPayload, SessionState, Step};
pub use store::{SessionStore, Snapshot};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Largest accepted request body; larger uploads get 413.
    pub max_upload_bytes: usize,
    /// Largest accepted image, in pixels; larger images get 413.
    pub max_pixels: usize,
    pub idle_timeout: Duration,
    /// Datasets that sessions may reference by name.
    pub data_dir: Option<PathBuf>,
    /// Static UI bundle served at `/`.
    pub static_dir: Option<PathBuf>,
    pub snapshot_dir: Option<PathBuf>,
    /// Allowed CORS origin; any origin when `None`.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_upload_bytes: 32 << 20,
            max_pixels: 4096 * 4096,
            idle_timeout: Duration::from_secs(30 * 60),
            data_dir: None,
            static_dir: None,
            snapshot_dir: None,
            cors_origin: None,
        }
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    pub store: SessionStore,
    pub segmenter: Arc<dyn Segmenter>,
    pub datasets: BTreeMap<String, Dataset>,
}

impl AppState {
    /// Loads the datasets under `data_dir` and restores snapshots.
    pub fn new(config: ServiceConfig, segmenter: Arc<dyn Segmenter>) -> imis_core::Result<Self> {
        let datasets = match &config.data_dir {
            Some(dir) => discover(dir)?
                .into_iter()
                .map(|d| (d.name().to_owned(), d))
                .collect(),
            None => BTreeMap::new(),
        };
        let store = SessionStore::new(config.idle_timeout, config.snapshot_dir.clone());
        let restored = store.restore_all(segmenter.as_ref());
        if restored > 0 {
            tracing::info!(restored, "sessions restored from snapshots");
        }
        Ok(Self {
            config,
            store,
            segmenter,
            datasets,
        })
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Base64-encoded PNG.
    #[serde(default)]
    pub image: Option<String>,
    /// Dataset name and image id, instead of an upload.
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default)]
    pub image_id: Option<String>,
    /// Ground truth for live Dice: an explicit mask, or the index of a
    /// ground-truth mask of the dataset image.
    #[serde(default)]
    pub gt: Option<CsrMask>,
    #[serde(default)]
    pub gt_index: Option<usize>,
    #[serde(default)]
    pub gt_category: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub height: usize,
    pub width: usize,
    pub has_gt: bool,
}

fn default_polarity() -> Polarity {
    Polarity::Positive
}

/// Prompt as sent by clients. Text prompts name a category or give its id.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PromptRequest {
    Click {
        row: usize,
        col: usize,
        #[serde(default = "default_polarity")]
        polarity: Polarity,
    },
    Box {
        row_min: usize,
        col_min: usize,
        row_max: usize,
        col_max: usize,
    },
    Text {
        #[serde(default)]
        category: Option<String>,
        #[serde(default)]
        category_id: Option<u32>,
    },
}

fn catalog_categories() -> BTreeMap<String, u32> {
    CATALOG
        .iter()
        .zip(1u32..)
        .map(|(t, id)| (t.name.to_owned(), id))
        .collect()
}

fn resolve(req: PromptRequest, categories: &BTreeMap<String, u32>) -> Result<Prompt, ApiError> {
    Ok(match req {
        PromptRequest::Click { row, col, polarity } => Prompt::Click { row, col, polarity },
        PromptRequest::Box {
            row_min,
            col_min,
            row_max,
            col_max,
        } => Prompt::Box(
            BBox::new(row_min, col_min, row_max, col_max)
                .map_err(|e| ApiError::unprocessable(e.to_string()))?,
        ),
        PromptRequest::Text {
            category_id: Some(id),
            category: None,
        } => Prompt::Text { category_id: id },
        PromptRequest::Text {
            category: Some(name),
            category_id: None,
        } => {
            let id = categories
                .get(&normalize_name(&name))
                .ok_or_else(|| ApiError::unprocessable(format!("unknown category {name:?}")))?;
            Prompt::Text { category_id: *id }
        }
        PromptRequest::Text { .. } => {
            return Err(ApiError::unprocessable(
                "a text prompt needs exactly one of category, category_id",
            ))
        }
    })
}

type Shared = Arc<AppState>;

fn lookup(state: &AppState, id: &str) -> Result<Arc<tokio::sync::Mutex<LiveSession>>, ApiError> {
    state
        .store
        .get(id)
        .ok_or_else(|| ApiError::not_found(format!("session {id}")))
}

fn build_session(state: &AppState, req: CreateSession) -> Result<LiveSession, ApiError> {
    let id = state.store.next_id();
    let seed = req.seed.unwrap_or(0);
    let mut categories = catalog_categories();
    let (image, mut gt, mut gt_category) = match (&req.image, &req.dataset, &req.image_id) {
        (Some(b64), None, None) => {
            let bytes = STANDARD
                .decode(b64.trim())
                .map_err(|e| ApiError::bad_request(format!("image is not base64: {e}")))?;
            let image = decode_image(&bytes).map_err(|e| ApiError::bad_request(e.to_string()))?;
            (image, None, None)
        }
        (None, Some(name), Some(image_id)) => {
            let ds = state
                .datasets
                .get(name)
                .ok_or_else(|| ApiError::not_found(format!("dataset {name}")))?;
            let rec = ds
                .record(image_id)
                .ok_or_else(|| ApiError::not_found(format!("image {image_id}")))?;
            let image = ds.load_image(rec)?;
            categories = ds
                .manifest
                .categories
                .iter()
                .map(|(&id, n)| (n.clone(), id))
                .collect();
            let (gt, cat) = match req.gt_index {
                Some(k) => {
                    let masks = ds.load_masks(rec)?.labeled_masks()?;
                    let m = masks
                        .into_iter()
                        .filter(|m| m.source == Source::GroundTruth)
                        .nth(k)
                        .ok_or_else(|| ApiError::not_found(format!("ground-truth mask {k}")))?;
                    (Some(m.mask), Some(m.category_id))
                }
                None => (None, None),
            };
            (image, gt, cat)
        }
        _ => {
            return Err(ApiError::bad_request(
                "give either image, or dataset and image_id",
            ))
        }
    };
    let (h, w) = image.dims();
    if h * w > state.config.max_pixels {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("{h}x{w} image exceeds {} pixels", state.config.max_pixels),
        ));
    }
    if let Some(csr) = &req.gt {
        if gt.is_some() {
            return Err(ApiError::bad_request("give at most one of gt, gt_index"));
        }
        let mask = csr
            .decode()
            .map_err(|e| ApiError::unprocessable(e.to_string()))?;
        if mask.dims() != (h, w) {
            return Err(ApiError::unprocessable(format!(
                "ground truth is {:?}, image is {:?}",
                mask.dims(),
                (h, w)
            )));
        }
        gt = Some(mask);
    }
    if let Some(name) = &req.gt_category {
        gt_category = Some(
            *categories
                .get(&normalize_name(name))
                .ok_or_else(|| ApiError::unprocessable(format!("unknown category {name:?}")))?,
        );
    }
    let mut s = LiveSession::new(id, image, seed);
    s.gt = gt;
    s.gt_category = gt_category;
    s.categories = categories;
    Ok(s)
}

fn persist(state: &AppState, s: &LiveSession) {
    if let Err(e) = state.store.persist(s) {
        tracing::warn!(id = %s.id, error = %e, "snapshot not written");
    }
}

async fn create_session(
    State(state): State<Shared>,
    Json(req): Json<CreateSession>,
) -> Result<impl IntoResponse, ApiError> {
    state.store.expire(Instant::now());
    let st = state.clone();
    let session = tokio::task::spawn_blocking(move || build_session(&st, req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    persist(&state, &session);
    let body = Created {
        id: session.id.clone(),
        height: session.image.height(),
        width: session.image.width(),
        has_gt: session.gt.is_some(),
    };
    state.store.insert(session);
    Ok((StatusCode::CREATED, Json(body)))
}

/// Runs `f` on the session on a blocking thread while holding its lock.
async fn with_session<T: Send + 'static>(
    state: &Shared,
    id: &str,
    f: impl FnOnce(&mut LiveSession, &dyn Segmenter) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let session = lookup(state, id)?;
    let mut guard = session.lock_owned().await;
    let st = state.clone();
    tokio::task::spawn_blocking(move || {
        let out = f(&mut guard, st.segmenter.as_ref())?;
        persist(&st, &guard);
        Ok(out)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn add_prompt(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<PromptRequest>,
) -> Result<Json<PredictionPayload>, ApiError> {
    with_session(&state, &id, move |s, seg| {
        let prompt = resolve(req, &s.categories)?;
        s.add(prompt, seg)?;
        Ok(Json(s.payload()))
    })
    .await
}

async fn undo(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<PredictionPayload>, ApiError> {
    with_session(&state, &id, |s, seg| {
        if !s.undo(seg)? {
            return Err(ApiError::new(StatusCode::CONFLICT, "history is empty"));
        }
        Ok(Json(s.payload()))
    })
    .await
}

async fn get_state(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<SessionState>, ApiError> {
    let session = lookup(&state, &id)?;
    let s = session.lock().await;
    Ok(Json(s.state()))
}

async fn get_image(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    let session = lookup(&state, &id)?;
    let image: ImageGrid = session.lock().await.image.clone();
    let png = tokio::task::spawn_blocking(move || encode_png(&image))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png))
}

async fn delete_session(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    if state.store.remove(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::not_found(format!("session {id}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub modality: String,
    pub categories: BTreeMap<u32, String>,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSummary {
    pub id: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDetail {
    #[serde(flatten)]
    pub summary: DatasetSummary,
    pub image_ids: Vec<ImageSummary>,
}

fn summary(d: &Dataset) -> DatasetSummary {
    DatasetSummary {
        name: d.manifest.name.clone(),
        modality: d.manifest.modality.clone(),
        categories: d.manifest.categories.clone(),
        images: d.manifest.images.len(),
    }
}

async fn list_datasets(State(state): State<Shared>) -> Json<Vec<DatasetSummary>> {
    Json(state.datasets.values().map(summary).collect())
}

async fn get_dataset(
    State(state): State<Shared>,
    Path(name): Path<String>,
) -> Result<Json<DatasetDetail>, ApiError> {
    let d = state
        .datasets
        .get(&name)
        .ok_or_else(|| ApiError::not_found(format!("dataset {name}")))?;
    Ok(Json(DatasetDetail {
        summary: summary(d),
        image_ids: d
            .manifest
            .images
            .iter()
            .map(|r| ImageSummary {
                id: r.id.clone(),
                split: r.split,
            })
            .collect(),
    }))
}

pub fn router(state: Shared) -> Router {
    let cors = match &state.config.cors_origin {
        Some(origin) => match HeaderValue::from_str(origin) {
            Ok(v) => CorsLayer::new().allow_origin(AllowOrigin::exact(v)),
            Err(_) => CorsLayer::new(),
        },
        None => CorsLayer::new().allow_origin(AllowOrigin::any()),
    }
    .allow_methods(tower_http::cors::Any)
    .allow_headers(tower_http::cors::Any);
    let mut app = Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_state).delete(delete_session))
        .route("/sessions/{id}/prompts", post(add_prompt))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/image", get(get_image))
        .route("/datasets", get(list_datasets))
        .route("/datasets/{name}", get(get_dataset));
    if let Some(dir) = &state.config.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app.layer(DefaultBodyLimit::max(state.config.max_upload_bytes))
        .layer(cors)
        .with_state(state)
}

/// Serves until the task is cancelled, expiring idle sessions periodically.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let state = Arc::new(state);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let sweeper = state.clone();
    let period =
        (state.config.idle_timeout / 4).clamp(Duration::from_secs(1), Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let n = sweeper.store.expire(Instant::now());
            if n > 0 {
                tracing::info!(expired = n, "idle sessions removed");
            }
        }
    });
    axum::serve(listener, router(state)).await
}
