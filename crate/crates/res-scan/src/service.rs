//! HTTP service under `/v1`.
//!
//! Bank and reservoir are shared read-only. Each client session, keyed by
//! the `x-session-id` header (`default` when absent), keeps the last
//! prompts and result per frame. Frames above the pixel budget are
//! detected in a background job and polled at `/v1/jobs/{id}`.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use res_scan_core::bank::{FeatureBank, PatchSpec};
use res_scan_core::categorize::{categorize_results, Algorithm, CategorizeRequest};
use res_scan_core::detect::{
    detect_raw, render_grid_png, render_heatmap_png, DetectConfig, DetectionResult,
};
use res_scan_core::gpr::{BScanFrame, GroundTruthRegion, Preprocess};
use res_scan_core::reservoir::{Fingerprint, ReservoirConfig, ReservoirWeights};
use res_scan_core::segment::PromptSet;

pub const SESSION_HEADER: &str = "x-session-id";
pub const FINGERPRINT_HEADER: &str = "x-reservoir-fingerprint";
pub const DEFAULT_PIXEL_BUDGET: usize = 1 << 20;

pub struct ServiceConfig {
    pub frames: Vec<BScanFrame>,
    pub bank: FeatureBank,
    pub weights: ReservoirWeights,
    pub preprocess: Preprocess,
    pub detect: DetectConfig,
    /// Frames with more pixels than this are detected as background jobs.
    pub pixel_budget: usize,
    pub truths: Option<Vec<GroundTruthRegion>>,
}

#[derive(Default)]
struct Session {
    prompts: HashMap<String, PromptSet>,
    results: BTreeMap<String, Arc<DetectionResult>>,
}

enum Job {
    Pending,
    Done(Arc<DetectionResult>),
    Failed(String),
}

struct Shared {
    frames: BTreeMap<String, BScanFrame>,
    prepared: HashMap<String, BScanFrame>,
    bank: FeatureBank,
    weights: ReservoirWeights,
    preprocess: Preprocess,
    detect: DetectConfig,
    pixel_budget: usize,
    truths: Option<Vec<GroundTruthRegion>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    jobs: Mutex<HashMap<u64, Job>>,
    next_job: AtomicU64,
}

impl Shared {
    fn session(&self, headers: &HeaderMap) -> Arc<Mutex<Session>> {
        let id = headers
            .get(SESSION_HEADER)
            .and_then(|v| v.to_str().ok())
            .filter(|s| !s.is_empty())
            .unwrap_or("default")
            .to_owned();
        self.sessions.lock().unwrap().entry(id).or_default().clone()
    }

    fn frame(&self, id: &str) -> Result<&BScanFrame, ApiError> {
        self.frames
            .get(id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown frame {id:?}")))
    }

    fn fingerprint(&self) -> Fingerprint {
        self.weights.fingerprint()
    }
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

/// Validates the model and preprocesses every frame once.
pub fn build_state(config: ServiceConfig) -> anyhow::Result<AppState> {
    if config.bank.fingerprint() != config.weights.fingerprint() {
        anyhow::bail!(
            "refusing to start: bank fingerprint {} does not match reservoir {}",
            config.bank.fingerprint(),
            config.weights.fingerprint()
        );
    }
    if config.detect.beta.is_none() && config.bank.beta().is_none() {
        anyhow::bail!("refusing to start: bank has no calibrated threshold");
    }
    let mut frames = BTreeMap::new();
    let mut prepared = HashMap::new();
    for f in config.frames {
        if frames.contains_key(&f.id) {
            anyhow::bail!("duplicate frame id {:?}", f.id);
        }
        prepared.insert(f.id.clone(), config.preprocess.apply(&f)?);
        frames.insert(f.id.clone(), f);
    }
    Ok(AppState(Arc::new(Shared {
        frames,
        prepared,
        bank: config.bank,
        weights: config.weights,
        preprocess: config.preprocess,
        detect: config.detect,
        pixel_budget: config.pixel_budget,
        truths: config.truths,
        sessions: Mutex::new(HashMap::new()),
        jobs: Mutex::new(HashMap::new()),
        next_job: AtomicU64::new(1),
    })))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/frames", get(list_frames))
        .route("/v1/frames/{id}/image.png", get(frame_image))
        .route("/v1/frames/{id}/detect", post(detect_frame))
        .route("/v1/frames/{id}/heatmap.png", get(heatmap))
        .route("/v1/jobs/{id}", get(job_status))
        .route("/v1/categorize", post(categorize))
        .with_state(state)
}

pub async fn serve(config: ServiceConfig, bind: &str) -> anyhow::Result<()> {
    let app = router(build_state(config)?);
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn bad_request(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::BAD_REQUEST, e.to_string())
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

fn json_text(status: StatusCode, body: String, fp: Fingerprint) -> Response {
    let mut resp = (status, [(header::CONTENT_TYPE, "application/json")], body).into_response();
    resp.headers_mut()
        .insert(FINGERPRINT_HEADER, HeaderValue::from_str(&fp.to_hex()).expect("hex"));
    resp
}

fn png(bytes: Vec<u8>, fp: Fingerprint) -> Response {
    let mut resp = ([(header::CONTENT_TYPE, "image/png")], bytes).into_response();
    resp.headers_mut()
        .insert(FINGERPRINT_HEADER, HeaderValue::from_str(&fp.to_hex()).expect("hex"));
    resp
}

#[derive(Serialize)]
struct ConfigView<'a> {
    reservoir: ReservoirConfig,
    patch: PatchSpec,
    beta: Option<f64>,
    preprocess: &'a Preprocess,
    detect: &'a DetectConfig,
    pixel_budget: usize,
}

impl Shared {
    fn config_view(&self) -> ConfigView<'_> {
        ConfigView {
            reservoir: ReservoirConfig {
                n: self.weights.n(),
                rho: self.weights.rho(),
                input_scale: self.weights.input_scale(),
                lambda: self.bank.lambda(),
                seed: self.weights.seed(),
            },
            patch: self.bank.spec(),
            beta: self.detect.beta.or(self.bank.beta()),
            preprocess: &self.preprocess,
            detect: &self.detect,
            pixel_budget: self.pixel_budget,
        }
    }
}

async fn health(State(AppState(s)): State<AppState>) -> Response {
    let body = serde_json::json!({
        "status": "ok",
        "fingerprint": s.fingerprint(),
        "bank_entries": s.bank.len(),
        "frames": s.frames.len(),
        "config": s.config_view(),
    });
    json_text(StatusCode::OK, crate::commands::to_json(&body), s.fingerprint())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameInfo {
    pub id: String,
    pub width: usize,
    pub height: usize,
}

async fn list_frames(State(AppState(s)): State<AppState>) -> Response {
    let frames: Vec<FrameInfo> = s
        .frames
        .values()
        .map(|f| FrameInfo {
            id: f.id.clone(),
            width: f.width(),
            height: f.height(),
        })
        .collect();
    let body = serde_json::json!({
        "fingerprint": s.fingerprint(),
        "config": s.config_view(),
        "frames": frames,
    });
    json_text(StatusCode::OK, crate::commands::to_json(&body), s.fingerprint())
}

async fn frame_image(
    State(AppState(s)): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let frame = s.frame(&id)?;
    let bytes = render_grid_png(&frame.grid).map_err(ApiError::internal)?;
    Ok(png(bytes, s.fingerprint()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JobTicket {
    pub job_id: u64,
    pub status: String,
    pub poll: String,
}

async fn detect_frame(
    State(AppState(s)): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> Result<Response, ApiError> {
    let prompts: PromptSet = serde_json::from_slice(&body).map_err(ApiError::bad_request)?;
    let frame = s.frame(&id)?;
    prompts
        .validate(frame.width(), frame.height())
        .map_err(ApiError::bad_request)?;
    let session = s.session(&headers);
    session.lock().unwrap().prompts.insert(id.clone(), prompts.clone());

    let run = {
        let s = s.clone();
        let id = id.clone();
        move || {
            let frame = &s.frames[&id];
            detect_raw(frame, &s.preprocess, &prompts, &s.bank, &s.weights, &s.detect, None)
        }
    };

    if frame.width() * frame.height() > s.pixel_budget {
        let job_id = s.next_job.fetch_add(1, Ordering::Relaxed);
        s.jobs.lock().unwrap().insert(job_id, Job::Pending);
        let shared = s.clone();
        tokio::task::spawn_blocking(move || {
            let state = match run() {
                Ok(r) => {
                    let r = Arc::new(r);
                    session.lock().unwrap().results.insert(id, r.clone());
                    Job::Done(r)
                }
                Err(e) => Job::Failed(e.to_string()),
            };
            shared.jobs.lock().unwrap().insert(job_id, state);
        });
        let ticket = JobTicket {
            job_id,
            status: "pending".into(),
            poll: format!("/v1/jobs/{job_id}"),
        };
        let mut resp = json_text(StatusCode::ACCEPTED, crate::commands::to_json(&ticket), s.fingerprint());
        resp.headers_mut()
            .insert(header::LOCATION, HeaderValue::from_str(&ticket.poll).expect("ascii"));
        return Ok(resp);
    }

    let result = tokio::task::spawn_blocking(run)
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::bad_request)?;
    let text = result.to_json();
    session.lock().unwrap().results.insert(id, Arc::new(result));
    Ok(json_text(StatusCode::OK, text, s.fingerprint()))
}

async fn job_status(
    State(AppState(s)): State<AppState>,
    Path(id): Path<u64>,
) -> Result<Response, ApiError> {
    let jobs = s.jobs.lock().unwrap();
    match jobs.get(&id) {
        None => Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown job {id}"))),
        Some(Job::Pending) => {
            let ticket = JobTicket {
                job_id: id,
                status: "pending".into(),
                poll: format!("/v1/jobs/{id}"),
            };
            Ok(json_text(StatusCode::ACCEPTED, crate::commands::to_json(&ticket), s.fingerprint()))
        }
        Some(Job::Done(r)) => Ok(json_text(StatusCode::OK, r.to_json(), s.fingerprint())),
        Some(Job::Failed(msg)) => Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg.clone())),
    }
}

async fn heatmap(
    State(AppState(s)): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    s.frame(&id)?;
    let result = s
        .session(&headers)
        .lock()
        .unwrap()
        .results
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no detection for frame {id:?} yet")))?;
    let map = result
        .heatmap
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "last detection had no candidate"))?;
    let bytes = render_heatmap_png(map, result.width, result.height).map_err(ApiError::internal)?;
    Ok(png(bytes, s.fingerprint()))
}

fn default_algorithm() -> String {
    "ac".into()
}

fn default_k() -> usize {
    5
}

fn yes() -> bool {
    true
}

/// Body of `POST /v1/categorize`. Clusters the session's latest results,
/// optionally restricted to `frame_ids`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategorizeBody {
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default = "yes")]
    pub primary_only: bool,
    #[serde(default)]
    pub frame_ids: Option<Vec<String>>,
}

async fn categorize(
    State(AppState(s)): State<AppState>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> Result<Response, ApiError> {
    let req: CategorizeBody = serde_json::from_slice(&body).map_err(ApiError::bad_request)?;
    let algorithm: Algorithm = req.algorithm.parse().map_err(ApiError::bad_request)?;
    let results: Vec<DetectionResult> = {
        let session = s.session(&headers);
        let session = session.lock().unwrap();
        match &req.frame_ids {
            Some(ids) => ids
                .iter()
                .map(|id| {
                    session.results.get(id).map(|r| (**r).clone()).ok_or_else(|| {
                        ApiError::new(StatusCode::NOT_FOUND, format!("no detection for frame {id:?}"))
                    })
                })
                .collect::<Result<_, _>>()?,
            None => session.results.values().map(|r| (**r).clone()).collect(),
        }
    };
    let request = CategorizeRequest {
        algorithm,
        k: req.k,
        seed: req.seed,
        standardize: req.standardize,
        primary_only: req.primary_only,
    };
    let shared = s.clone();
    let report = tokio::task::spawn_blocking(move || {
        categorize_results(
            &results,
            &shared.prepared,
            &shared.weights,
            shared.bank.lambda(),
            &request,
            shared.truths.as_deref(),
        )
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(ApiError::bad_request)?;
    Ok(json_text(StatusCode::OK, report.to_json(), s.fingerprint()))
}
