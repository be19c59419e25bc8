//! Local HTTP API for the annotation UI.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use linemark_core::frame::SequenceError;
use linemark_core::io::encode_png;
use linemark_core::pipeline::{parse_coords, run_sequence};
use linemark_core::{Pixel, PipelineConfig, Roi};

use crate::jobs::{JobBoard, JobState};
use crate::store::{ReviewFlag, Store, StoreError, Verdict};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::UnknownSequence(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub struct AppState {
    store: Store,
    jobs: Arc<JobBoard>,
    config: PipelineConfig,
    run_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(store: Store, config: PipelineConfig) -> Result<Self, StoreError> {
        let jobs = JobBoard::load(store.jobs_path())?;
        Ok(Self {
            store,
            jobs: Arc::new(jobs),
            config,
            run_locks: Mutex::new(HashMap::new()),
        })
    }

    fn run_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.run_locks
            .lock()
            .expect("lock table")
            .entry(id.to_string())
            .or_default()
            .clone()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/sequences", get(list_sequences))
        .route("/api/sequences/{id}/frames/{n}", get(get_frame))
        .route("/api/sequences/{id}/roi", get(get_roi).post(post_roi))
        .route("/api/sequences/{id}/run", axum::routing::post(start_run))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/sequences/{id}/annotations/{n}", get(get_annotation))
        .route("/api/sequences/{id}/annotations/{n}/overlay", get(get_overlay))
        .route("/api/sequences/{id}/flags/{n}", get(get_flag).put(put_flag))
        .with_state(state)
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn list_sequences(State(app): State<Arc<AppState>>) -> ApiResult<Response> {
    Ok(Json(app.store.list()?).into_response())
}

async fn get_frame(State(app): State<Arc<AppState>>, Path((id, n)): Path<(String, usize)>) -> ApiResult<Response> {
    let seq = app.store.sequence(&id)?;
    let frame = match seq.frame(n) {
        Ok(f) => f,
        Err(SequenceError::IndexOutOfRange { .. }) => {
            return Err(ApiError::not_found(format!("frame {n} not in sequence `{id}`")))
        }
        Err(e) => return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    };
    let bytes = encode_png(&frame).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(png(bytes))
}

async fn get_roi(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Roi>> {
    app.store.sequence(&id)?;
    app.store
        .roi(&id)?
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no ROI stored for sequence `{id}`")))
}

async fn post_roi(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Roi>> {
    let seq = app.store.sequence(&id)?;
    let roi: Roi = serde_json::from_slice(&body).map_err(|e| ApiError::unprocessable(format!("malformed ROI: {e}")))?;
    roi.validate(seq.dims()).map_err(|v| ApiError::unprocessable(v.to_string()))?;
    app.store.save_roi(&id, &roi)?;
    Ok(Json(roi))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JobCreated {
    pub job_id: String,
}

async fn start_run(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let seq = app.store.sequence(&id)?;
    let roi = app
        .store
        .roi(&id)?
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, format!("no ROI stored for sequence `{id}`")))?;
    roi.validate(seq.dims()).map_err(|v| ApiError::unprocessable(v.to_string()))?;
    let job = app.jobs.create(&id, seq.frame_count());
    let job_id = job.job_id.clone();

    let task_app = app.clone();
    tokio::spawn(async move {
        let lock = task_app.run_lock(&id);
        let _guard = lock.lock().await;
        task_app.jobs.transition(&job_id, JobState::Running, None);
        let jobs = task_app.jobs.clone();
        let root = task_app.store.root().to_path_buf();
        let config = task_app.config;
        let progress_id = job_id.clone();
        let outcome = tokio::task::spawn_blocking(move || {
            run_sequence(&seq, &roi, &config, &root, &|n| jobs.progress(&progress_id, n))
        })
        .await;
        match outcome {
            Ok(Ok(_)) => task_app.jobs.transition(&job_id, JobState::Done, None),
            Ok(Err(e)) => task_app.jobs.transition(&job_id, JobState::Failed, Some(e.to_string())),
            Err(e) => task_app.jobs.transition(&job_id, JobState::Failed, Some(e.to_string())),
        }
    });
    Ok((StatusCode::ACCEPTED, Json(JobCreated { job_id: job.job_id })).into_response())
}

async fn get_job(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    app.jobs
        .get(&id)
        .map(|j| Json(j).into_response())
        .ok_or_else(|| ApiError::not_found(format!("unknown job `{id}`")))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Annotation {
    pub present: bool,
    pub pixels: Vec<Pixel>,
}

async fn get_annotation(State(app): State<Arc<AppState>>, Path((id, n)): Path<(String, usize)>) -> ApiResult<Json<Annotation>> {
    app.store.sequence(&id)?;
    let path = app.store.layout(&id).coord_file(n);
    let text = std::fs::read_to_string(&path).map_err(|_| ApiError::not_found(format!("frame {n} of `{id}` is not annotated")))?;
    let pixels = parse_coords(&text).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("{}: {e}", path.display())))?;
    Ok(Json(Annotation {
        present: !pixels.is_empty(),
        pixels,
    }))
}

async fn get_overlay(State(app): State<Arc<AppState>>, Path((id, n)): Path<(String, usize)>) -> ApiResult<Response> {
    app.store.sequence(&id)?;
    let path = app.store.layout(&id).overlay(n);
    let bytes = std::fs::read(&path).map_err(|_| ApiError::not_found(format!("no overlay for frame {n} of `{id}`")))?;
    Ok(png(bytes))
}

async fn get_flag(State(app): State<Arc<AppState>>, Path((id, n)): Path<(String, usize)>) -> ApiResult<Json<ReviewFlag>> {
    app.store.sequence(&id)?;
    app.store
        .flags(&id)?
        .remove(&n)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("frame {n} of `{id}` has no flag")))
}

#[derive(Debug, Deserialize)]
struct FlagBody {
    frame_index: Option<usize>,
    verdict: Verdict,
    #[serde(default)]
    note: Option<String>,
}

async fn put_flag(
    State(app): State<Arc<AppState>>,
    Path((id, n)): Path<(String, usize)>,
    body: Bytes,
) -> ApiResult<Json<ReviewFlag>> {
    let seq = app.store.sequence(&id)?;
    if n >= seq.frame_count() {
        return Err(ApiError::not_found(format!("frame {n} not in sequence `{id}`")));
    }
    let body: FlagBody = serde_json::from_slice(&body).map_err(|e| ApiError::unprocessable(format!("malformed flag: {e}")))?;
    if body.frame_index.is_some_and(|i| i != n) {
        return Err(ApiError::unprocessable("frame_index in body does not match the URL"));
    }
    let flag = ReviewFlag {
        frame_index: n,
        verdict: body.verdict,
        note: body.note,
    };
    app.store.save_flag(&id, flag.clone())?;
    Ok(Json(flag))
}

/// Serves on an already bound listener until the process is stopped.
pub async fn serve(state: Arc<AppState>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
