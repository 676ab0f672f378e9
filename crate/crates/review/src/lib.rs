//! HTTP backend of the review loop: browse frames and mask overlays, start
//! labeling runs and corrective reseeds, poll run progress.
//!
//! | method | path | response |
//! |---|---|---|
//! | GET | `/sessions` | JSON list of session manifests with their run ids |
//! | GET | `/sessions/{id}/frames/{k}` | PV frame, PNG |
//! | GET | `/sessions/{id}/runs/{run}` | run flags and seed history, JSON |
//! | GET | `/sessions/{id}/runs/{run}/masks/{k}` | mask, PNG (0/255) |
//! | GET | `/sessions/{id}/runs/{run}/overlay/{k}` | PV blended with the mask, PNG |
//! | POST | `/sessions/{id}/label` | `{"config": {...}}` → `{"run_id"}` |
//! | POST | `/sessions/{id}/runs/{run}/reseed` | `{"frame_index", "points": [{"x","y"}]}` → `{"run_id"}` |
//! | GET | `/runs/{run}/status` | `{"state", "frames_done", "fps", ...}` |
//!
//! Errors are JSON `{"error", "detail", "field"?}` with status 404 for
//! unknown ids, 400 for malformed bodies and 409 for conflicting reseeds.

pub mod body;
pub mod error;
pub mod jobs;

use std::io::Cursor;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use image::{DynamicImage, ImageFormat};
use log::{info, warn};
use serde::Serialize;

use seedtrack_core::pipeline::{label_session_with_progress, reseed_with_progress, LabelRun};
use seedtrack_core::render::overlay;
use seedtrack_core::store::{validate_session_id, FrameFlag, SeedPrompt, SessionManifest};
use seedtrack_core::{BackendRegistry, LabelRunConfig, Mask, SeedOrigin, Session, SessionStore};

pub use error::ApiError;
pub use jobs::{RunState, RunStatus};

pub const DEFAULT_PORT: u16 = 38401;

pub struct AppState {
    store: SessionStore,
    registry: BackendRegistry,
    jobs: jobs::Jobs,
}

type Shared = Arc<AppState>;
type ApiResult<T> = Result<T, ApiError>;

pub fn router(store: SessionStore, registry: BackendRegistry) -> Router {
    let state = Arc::new(AppState {
        store,
        registry,
        jobs: jobs::Jobs::default(),
    });
    Router::new()
        .route("/sessions", get(list_sessions))
        .route("/sessions/{id}/frames/{k}", get(frame))
        .route("/sessions/{id}/label", post(label))
        .route("/sessions/{id}/runs/{run}", get(run_info))
        .route("/sessions/{id}/runs/{run}/masks/{k}", get(mask))
        .route("/sessions/{id}/runs/{run}/overlay/{k}", get(overlay_frame))
        .route("/sessions/{id}/runs/{run}/reseed", post(reseed))
        .route("/runs/{run}/status", get(status))
        .with_state(state)
}

/// Serves until the listener fails or the process is interrupted.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "InternalError", e.to_string()))?
}

fn png(img: DynamicImage) -> ApiResult<Response> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "EncodeError", e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], buf.into_inner()).into_response())
}

fn open_session(store: &SessionStore, id: &str) -> ApiResult<Session> {
    if validate_session_id(id).is_err() || !store.session_dir(id).join("manifest.toml").is_file() {
        return Err(ApiError::not_found(format!("no session `{id}`")));
    }
    Ok(store.open(id)?)
}

fn check_frame(session: &Session, k: usize) -> ApiResult<()> {
    if k >= session.frame_count() {
        return Err(ApiError::not_found(format!(
            "frame {k} outside {}-frame session `{}`",
            session.frame_count(),
            session.id()
        )));
    }
    Ok(())
}

/// A run must be complete before its masks can be read or reseeded.
fn check_run(state: &AppState, session: &Session, run: &str) -> ApiResult<()> {
    match state.jobs.state_of(session.id(), run) {
        Some(RunState::Queued | RunState::Running) => {
            return Err(ApiError::conflict(format!("run `{run}` is still in progress")))
        }
        Some(RunState::Failed) => return Err(ApiError::not_found(format!("run `{run}` failed"))),
        _ => {}
    }
    if validate_session_id(run).is_err() || !session.runs().iter().any(|r| r == run) {
        return Err(ApiError::not_found(format!("no run `{run}` in session `{}`", session.id())));
    }
    Ok(())
}

fn load_mask(session: &Session, run: &str, k: usize) -> ApiResult<Mask> {
    let path = session.run_dir(run).join(seedtrack_core::store::frame_file(k, "png"));
    Ok(Mask::load_png(&path)?)
}

#[derive(Serialize)]
struct SessionEntry {
    #[serde(flatten)]
    manifest: SessionManifest,
    runs: Vec<String>,
}

async fn list_sessions(State(st): State<Shared>) -> ApiResult<Json<Vec<SessionEntry>>> {
    blocking(move || {
        let mut out = Vec::new();
        for m in st.store.list()? {
            let runs = st.store.open(&m.session_id).map(|s| s.runs()).unwrap_or_default();
            out.push(SessionEntry { manifest: m, runs });
        }
        out.sort_by(|a, b| a.manifest.session_id.cmp(&b.manifest.session_id));
        Ok(Json(out))
    })
    .await
}

async fn frame(State(st): State<Shared>, Path((id, k)): Path<(String, usize)>) -> ApiResult<Response> {
    blocking(move || {
        let s = open_session(&st.store, &id)?;
        check_frame(&s, k)?;
        png(DynamicImage::ImageRgb8(s.pv(k)?))
    })
    .await
}

#[derive(Serialize)]
struct RunInfo {
    run_id: String,
    session_id: String,
    frame_count: usize,
    flags: Vec<FrameFlag>,
    seed_history: Vec<SeedPrompt>,
    segmenter: String,
    tracker: String,
}

async fn run_info(
    State(st): State<Shared>,
    Path((id, run)): Path<(String, String)>,
) -> ApiResult<Json<RunInfo>> {
    blocking(move || {
        let s = open_session(&st.store, &id)?;
        check_run(&st, &s, &run)?;
        let ann = s.load_annotations(&run)?;
        Ok(Json(RunInfo {
            run_id: run,
            session_id: id,
            frame_count: ann.frame_count(),
            flags: ann.flags,
            seed_history: ann.seed_history,
            segmenter: ann.backend_info.segmenter,
            tracker: ann.backend_info.tracker,
        }))
    })
    .await
}

async fn mask(
    State(st): State<Shared>,
    Path((id, run, k)): Path<(String, String, usize)>,
) -> ApiResult<Response> {
    blocking(move || {
        let s = open_session(&st.store, &id)?;
        check_frame(&s, k)?;
        check_run(&st, &s, &run)?;
        png(DynamicImage::ImageLuma8(load_mask(&s, &run, k)?.to_gray_image()))
    })
    .await
}

async fn overlay_frame(
    State(st): State<Shared>,
    Path((id, run, k)): Path<(String, String, usize)>,
) -> ApiResult<Response> {
    blocking(move || {
        let s = open_session(&st.store, &id)?;
        check_frame(&s, k)?;
        check_run(&st, &s, &run)?;
        let m = load_mask(&s, &run, k)?;
        png(DynamicImage::ImageRgb8(overlay(&s.pv(k)?, &m)?))
    })
    .await
}

#[derive(Serialize)]
struct Started {
    run_id: String,
    state: RunState,
}

fn accepted(run_id: String) -> (StatusCode, Json<Started>) {
    (
        StatusCode::ACCEPTED,
        Json(Started {
            run_id,
            state: RunState::Queued,
        }),
    )
}

enum Work {
    Label(LabelRunConfig),
    Reseed {
        base: String,
        seeds: Vec<SeedPrompt>,
    },
}

/// Runs a job off the request path, one at a time per session.
fn launch(st: Shared, session: Session, run_id: String, gate: Arc<std::sync::Mutex<()>>, work: Work) {
    tokio::task::spawn_blocking(move || {
        let _turn = gate.lock().unwrap_or_else(|e| e.into_inner());
        st.jobs.start(&run_id);
        let mut progress = |n: usize| st.jobs.progress(&run_id, n);
        let result = (|| -> seedtrack_core::Result<LabelRun> {
            let run = match &work {
                Work::Label(config) => {
                    let mut b = st.registry.build(&config.segmenter, &config.tracker)?;
                    label_session_with_progress(&session, config, &mut b, &mut progress)?
                }
                Work::Reseed { base, seeds } => {
                    let ann = session.load_annotations(base)?;
                    let config = LabelRunConfig::from_backend_info(&ann.backend_info);
                    let mut b = st.registry.build(&config.segmenter, &config.tracker)?;
                    reseed_with_progress(&session, &ann, seeds, &config, &mut b, &mut progress)?
                }
            };
            run.save(&session, &run_id)?;
            Ok(run)
        })();
        match result {
            Ok(run) => {
                info!("{run_id} done: {} frames at {:.2} fps", run.report.frames, run.report.fps());
                st.jobs.finish(&run_id, run.report.fps());
            }
            Err(e) => {
                warn!("{run_id} failed: {e}");
                st.jobs.fail(&run_id, format!("{}: {e}", e.class()));
            }
        }
    });
}

async fn label(State(st): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let config = body::label_request(&body, &st.registry)?;
    blocking(move || {
        let s = open_session(&st.store, &id)?;
        if s.seeds().is_empty() {
            return Err(seedtrack_core::Error::MissingSeed.into());
        }
        let (run_id, gate) = st
            .jobs
            .enqueue(&st.store, &s, None)
            .expect("label runs are never exclusive");
        launch(st.clone(), s, run_id.clone(), gate, Work::Label(config));
        Ok(accepted(run_id).into_response())
    })
    .await
}

async fn reseed(
    State(st): State<Shared>,
    Path((id, run)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Response> {
    let req = body::reseed_request(&body)?;
    blocking(move || {
        let s = open_session(&st.store, &id)?;
        check_run(&st, &s, &run)?;
        if req.frame_index >= s.frame_count() {
            return Err(ApiError::bad_field(
                "frame_index",
                format!("frame {} outside {}-frame session", req.frame_index, s.frame_count()),
            ));
        }
        let mut seeds = Vec::with_capacity(req.points.len());
        for (i, &(x, y)) in req.points.iter().enumerate() {
            let seed = SeedPrompt::new(req.frame_index, x, y, SeedOrigin::ReviewClick);
            seed.check_bounds(s.resolution())
                .map_err(|e| ApiError::from(e).at(format!("points[{i}]")))?;
            seeds.push(seed);
        }
        let (run_id, gate) = st
            .jobs
            .enqueue(&st.store, &s, Some(&run))
            .ok_or_else(|| ApiError::conflict(format!("a reseed of `{run}` is already in progress")))?;
        launch(st.clone(), s, run_id.clone(), gate, Work::Reseed { base: run, seeds });
        Ok(accepted(run_id).into_response())
    })
    .await
}

async fn status(State(st): State<Shared>, Path(run): Path<String>) -> ApiResult<Json<RunStatus>> {
    blocking(move || {
        st.jobs
            .status(&st.store, &run)
            .map(Json)
            .ok_or_else(|| ApiError::not_found(format!("no run `{run}`")))
    })
    .await
}
