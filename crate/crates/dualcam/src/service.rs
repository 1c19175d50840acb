//! Review service: JSON API over the manifest plus a static mount for the
//! browser UI.
//!
//! Mutations run on the blocking pool behind one mutex, so the manifest has
//! a single writer. Asset bytes are read from disk outside the lock.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, put};
use axum::{Json, Router};
use dualcam_core::flowalign::residual_map;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::annotation::{apply_annotation, apply_verdict, load_annotation, AnnotationError, AnnotationSet, FieldIssue, Verdict};
use crate::codec::{encode_png, load_png};
use crate::manifest::{Manifest, ManifestEntry, Stage, VerdictRecord};
use crate::pipeline::{entry_dir, stage_report, StageReport};

pub struct AppState {
    manifest: Mutex<Manifest>,
}

pub type Shared = Arc<AppState>;

impl AppState {
    pub fn open(root: &Path) -> Result<Shared, crate::manifest::ManifestError> {
        Ok(Arc::new(AppState {
            manifest: Mutex::new(Manifest::open(root)?),
        }))
    }

    fn with<T>(&self, f: impl FnOnce(&mut Manifest) -> T) -> T {
        let mut m = self.manifest.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut m)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub details: Vec<FieldIssue>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                details: Vec::new(),
            },
        }
    }

    fn detail(mut self, field: &str, message: impl Into<String>) -> Self {
        self.body.details.push(FieldIssue {
            field: field.into(),
            message: message.into(),
        });
        self
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        let msg = e.to_string();
        match e {
            AnnotationError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", msg),
            AnnotationError::Conflict { current, .. } => ApiError::new(StatusCode::CONFLICT, "stale_revision", msg)
                .detail("revision", format!("current revision is {current}")),
            AnnotationError::WrongStage { stage, .. } => {
                ApiError::new(StatusCode::CONFLICT, "stage_order", msg).detail("stage", stage)
            }
            AnnotationError::Invalid(issues) => {
                let mut err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", msg);
                err.body.details = issues;
                err
            }
            AnnotationError::Storage(_) => ApiError::internal(msg),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PairSummary {
    pub id: String,
    pub stage: Stage,
    pub occlusion_score: Option<f64>,
    pub has_annotation: bool,
    pub verdict: Option<VerdictRecord>,
    pub revision: u64,
}

#[derive(Debug, Deserialize)]
struct ListQuery {
    stage: Option<String>,
}

async fn list_pairs(State(s): State<Shared>, Query(q): Query<ListQuery>) -> ApiResult<Json<Vec<PairSummary>>> {
    let filter = match q.stage.as_deref() {
        None | Some("") => None,
        Some(name) => Some(Stage::parse(name).ok_or_else(|| {
            ApiError::new(StatusCode::BAD_REQUEST, "bad_request", format!("unknown stage {name:?}"))
                .detail("stage", "expected ACQUIRED, CALIBRATED, ANNOTATED, ACCEPTED or REJECTED")
        })?),
    };
    let list = s.with(|m| {
        m.entries()
            .filter(|e| filter.is_none_or(|f| e.stage == f))
            .map(|e| PairSummary {
                id: e.id.clone(),
                stage: e.stage,
                occlusion_score: e.occlusion_score,
                has_annotation: e.has_annotation(),
                verdict: e.verdict.clone(),
                revision: e.revision,
            })
            .collect()
    });
    Ok(Json(list))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PairDetail {
    pub entry: ManifestEntry,
    pub annotation: Option<AnnotationSet>,
}

fn lookup(s: &AppState, id: &str) -> ApiResult<(ManifestEntry, PathBuf)> {
    s.with(|m| {
        m.get(id)
            .cloned()
            .map(|e| (e, m.root().to_path_buf()))
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown entry {id}")))
    })
}

async fn get_pair(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<PairDetail>> {
    blocking(move || {
        let (entry, _) = lookup(&s, &id)?;
        let annotation = s.with(|m| load_annotation(m, &entry))?;
        Ok(Json(PairDetail { entry, annotation }))
    })
    .await
}

fn stored_path(root: &Path, stored: &Option<String>) -> Option<PathBuf> {
    stored.as_ref().map(|p| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            root.join(p)
        }
    })
}

fn unavailable(e: &ManifestEntry, role: &str) -> ApiError {
    let hint = match role {
        "mask" => "annotate the entry first",
        _ => "calibrate the entry first",
    };
    ApiError::new(
        StatusCode::CONFLICT,
        "asset_unavailable",
        format!("{role} is not available for {} at stage {}", e.id, e.stage.as_str()),
    )
    .detail("stage", format!("{}: {hint}", e.stage.as_str()))
}

fn residual_bytes(root: &Path, e: &ManifestEntry) -> ApiResult<Vec<u8>> {
    let cache = entry_dir(root, &e.id).join("residual.png");
    if let Ok(bytes) = std::fs::read(&cache) {
        return Ok(bytes);
    }
    let (Some(w), Some(g)) = (stored_path(root, &e.paths.wide_cal), stored_path(root, &e.paths.gt_cal)) else {
        return Err(unavailable(e, "residual"));
    };
    let w = load_png(&w).map_err(ApiError::internal)?;
    let g = load_png(&g).map_err(ApiError::internal)?;
    let r = residual_map(&w, &g, 1.0).map_err(ApiError::internal)?;
    let bytes = encode_png(&r).map_err(ApiError::internal)?;
    // concurrent requests may race here; rename keeps the cache whole
    let tmp = cache.with_extension(format!("{}.tmp", std::process::id()));
    if std::fs::write(&tmp, &bytes).is_ok() {
        let _ = std::fs::rename(&tmp, &cache);
    }
    Ok(bytes)
}

async fn get_asset(State(s): State<Shared>, UrlPath((id, role)): UrlPath<(String, String)>) -> ApiResult<Response> {
    let (entry, root) = lookup(&s, &id)?;
    let bytes = blocking(move || {
        let p = &entry.paths;
        let path = match role.as_str() {
            "wide" => stored_path(&root, &Some(p.wide.clone())),
            "tele" => stored_path(&root, &Some(p.tele.clone())),
            "gt" => stored_path(&root, &Some(p.gt_raw.clone())),
            "wide_cal" => stored_path(&root, &p.wide_cal),
            "tele_cal" => stored_path(&root, &p.tele_cal),
            "gt_cal" => stored_path(&root, &p.gt_cal),
            "mask" => stored_path(&root, &p.mask),
            "residual" => return residual_bytes(&root, &entry),
            other => {
                return Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown asset role {other:?}"))
                    .detail("role", "expected wide, tele, gt, wide_cal, tele_cal, gt_cal, mask or residual"))
            }
        };
        let path = path.ok_or_else(|| unavailable(&entry, &role))?;
        std::fs::read(&path).map_err(|_| unavailable(&entry, &role))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn put_annotation(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AnnotationSet>, JsonRejection>,
) -> ApiResult<Json<ManifestEntry>> {
    let Json(set) = body?;
    blocking(move || Ok(Json(s.with(|m| apply_annotation(m, &id, &set))?))).await
}

async fn put_verdict(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<Verdict>, JsonRejection>,
) -> ApiResult<Json<ManifestEntry>> {
    let Json(v) = body?;
    blocking(move || Ok(Json(s.with(|m| apply_verdict(m, &id, &v))?))).await
}

async fn get_stats(State(s): State<Shared>) -> Json<StageReport> {
    Json(s.with(|m| stage_report(m)))
}

/// API routes, with `static_dir` (if given) mounted at `/`.
pub fn router(state: Shared, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/pairs", get(list_pairs))
        .route("/api/pairs/{id}", get(get_pair))
        .route("/api/pairs/{id}/asset/{role}", get(get_asset))
        .route("/api/pairs/{id}/annotation", put(put_annotation))
        .route("/api/pairs/{id}/verdict", put(put_verdict))
        .route("/api/stats", get(get_stats))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves on an already bound listener until the process is stopped.
pub async fn serve_listener(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}

pub async fn serve(root: &Path, port: u16, static_dir: Option<&Path>) -> anyhow::Result<()> {
    let state = AppState::open(root)?;
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    tracing::info!("review service on http://{}", listener.local_addr()?);
    serve_listener(listener, router(state, static_dir)).await?;
    Ok(())
}
