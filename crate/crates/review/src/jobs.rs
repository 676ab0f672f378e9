//! In-memory registry of labeling runs started through the service.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use serde::Serialize;

use seedtrack_core::pipeline::load_report;
use seedtrack_core::store::Session;
use seedtrack_core::SessionStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStatus {
    pub run_id: String,
    pub session_id: String,
    pub state: RunState,
    pub frames_done: usize,
    pub frame_count: usize,
    /// Throughput; the run report's value once done, null when unknown.
    pub fps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_run: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Job {
    status: RunStatus,
    started: Option<Instant>,
}

#[derive(Default)]
struct Table {
    jobs: HashMap<String, Job>,
    session_locks: HashMap<String, Arc<Mutex<()>>>,
}

#[derive(Default)]
pub struct Jobs {
    table: Mutex<Table>,
}

fn run_number(id: &str) -> Option<u64> {
    id.strip_prefix("run-")?.parse().ok()
}

/// Highest `run-NNNN` number on disk across every session of the store.
fn max_stored_run(root: &Path) -> u64 {
    let Ok(sessions) = std::fs::read_dir(root) else {
        return 0;
    };
    sessions
        .flatten()
        .filter_map(|s| std::fs::read_dir(s.path().join("ann")).ok())
        .flat_map(|runs| runs.flatten())
        .filter_map(|r| r.file_name().to_str().and_then(run_number))
        .max()
        .unwrap_or(0)
}

impl Jobs {
    fn lock(&self) -> MutexGuard<'_, Table> {
        self.table.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Registers a queued run with an id unique across the whole store, so
    /// `/runs/{run}/status` needs no session qualifier.
    ///
    /// With `exclusive_base`, refuses (returns `None`) while another reseed
    /// of that base run is queued or running.
    pub fn enqueue(
        &self,
        store: &SessionStore,
        session: &Session,
        base_run: Option<&str>,
    ) -> Option<(String, Arc<Mutex<()>>)> {
        let mut t = self.lock();
        if let Some(base) = base_run {
            let busy = t.jobs.values().any(|j| {
                j.status.base_run.as_deref() == Some(base)
                    && j.status.session_id == session.id()
                    && matches!(j.status.state, RunState::Queued | RunState::Running)
            });
            if busy {
                return None;
            }
        }
        let next = t
            .jobs
            .keys()
            .filter_map(|k| run_number(k))
            .chain([max_stored_run(store.root())])
            .max()
            .unwrap_or(0)
            + 1;
        let run_id = format!("run-{next:04}");
        t.jobs.insert(
            run_id.clone(),
            Job {
                status: RunStatus {
                    run_id: run_id.clone(),
                    session_id: session.id().to_string(),
                    state: RunState::Queued,
                    frames_done: 0,
                    frame_count: session.frame_count(),
                    fps: Some(0.0),
                    base_run: base_run.map(str::to_string),
                    error: None,
                },
                started: None,
            },
        );
        let gate = t
            .session_locks
            .entry(session.id().to_string())
            .or_default()
            .clone();
        Some((run_id, gate))
    }

    fn update(&self, run_id: &str, f: impl FnOnce(&mut Job)) {
        if let Some(job) = self.lock().jobs.get_mut(run_id) {
            f(job);
        }
    }

    pub fn start(&self, run_id: &str) {
        self.update(run_id, |j| {
            j.status.state = RunState::Running;
            j.started = Some(Instant::now());
        });
    }

    pub fn progress(&self, run_id: &str, frames_done: usize) {
        self.update(run_id, |j| {
            j.status.frames_done = frames_done;
            if let Some(t) = j.started {
                let s = t.elapsed().as_secs_f64();
                j.status.fps = (s > 0.0).then(|| frames_done as f64 / s);
            }
        });
    }

    pub fn finish(&self, run_id: &str, fps: f64) {
        self.update(run_id, |j| {
            j.status.state = RunState::Done;
            j.status.frames_done = j.status.frame_count;
            j.status.fps = fps.is_finite().then_some(fps);
        });
    }

    pub fn fail(&self, run_id: &str, error: String) {
        self.update(run_id, |j| {
            j.status.state = RunState::Failed;
            j.status.error = Some(error);
        });
    }

    /// Status of a run started here, or of a completed run found on disk.
    pub fn status(&self, store: &SessionStore, run_id: &str) -> Option<RunStatus> {
        if let Some(j) = self.lock().jobs.get(run_id) {
            return Some(j.status.clone());
        }
        let mut sessions = store.list().ok()?;
        sessions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        sessions.into_iter().find_map(|m| {
            let session = store.open(&m.session_id).ok()?;
            if !session.runs().iter().any(|r| r == run_id) {
                return None;
            }
            let fps = load_report(&session, run_id).ok().map(|r| r.fps());
            Some(RunStatus {
                run_id: run_id.to_string(),
                session_id: m.session_id.clone(),
                state: RunState::Done,
                frames_done: m.frame_count,
                frame_count: m.frame_count,
                fps: fps.filter(|f| f.is_finite()),
                base_run: None,
                error: None,
            })
        })
    }

    /// State of a run of `session_id` known to this service, if any.
    pub fn state_of(&self, session_id: &str, run_id: &str) -> Option<RunState> {
        self.lock()
            .jobs
            .get(run_id)
            .filter(|j| j.status.session_id == session_id)
            .map(|j| j.status.state)
    }
}
