//! Seed → proposals → tracker initialization → forward propagation, and the
//! corrective reseed loop.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::segment::{select_best, BackendSpec, Backends, PromptableSegmenter};
use crate::store::annotation::OBJECT_ID;
use crate::store::{write_atomic, AnnotationSet, BackendInfo, FrameFlag, SeedPrompt, Session};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRunConfig {
    pub segmenter: BackendSpec,
    pub tracker: BackendSpec,
    /// Defaults to the first seed's frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_frame: Option<usize>,
    /// Last frame to label (inclusive); later frames get empty masks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_frame: Option<usize>,
}

impl Default for LabelRunConfig {
    fn default() -> Self {
        LabelRunConfig {
            segmenter: BackendSpec::named("chroma-flood"),
            tracker: BackendSpec::named("overlap"),
            start_frame: None,
            stop_frame: None,
        }
    }
}

impl LabelRunConfig {
    /// Short hex digest of the canonical JSON form of the config.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical)[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn backend_info(&self) -> BackendInfo {
        BackendInfo {
            segmenter: self.segmenter.name.clone(),
            tracker: self.tracker.name.clone(),
            config_digest: self.digest(),
            segmenter_params: self.segmenter.params.clone(),
            tracker_params: self.tracker.params.clone(),
            stop_frame: self.stop_frame,
        }
    }

    /// Rebuilds the config a run was produced with (the start frame is not
    /// recorded; reseeding does not use it).
    pub fn from_backend_info(info: &BackendInfo) -> Self {
        LabelRunConfig {
            segmenter: BackendSpec {
                name: info.segmenter.clone(),
                params: info.segmenter_params.clone(),
            },
            tracker: BackendSpec {
                name: info.tracker.clone(),
                params: info.tracker_params.clone(),
            },
            start_frame: None,
            stop_frame: info.stop_frame,
        }
    }

    /// Labeled frame range `[start, stop]` for a session.
    fn range(&self, session: &Session, seed: &SeedPrompt) -> Result<(usize, usize)> {
        let n = session.frame_count();
        let start = self.start_frame.unwrap_or(seed.frame_index);
        if start >= n {
            return Err(Error::InvalidConfig(format!(
                "start frame {start} beyond {n}-frame session"
            )));
        }
        if start != seed.frame_index {
            return Err(Error::InvalidConfig(format!(
                "start frame {start} differs from the seed frame {}",
                seed.frame_index
            )));
        }
        let stop = self.stop_frame.unwrap_or(n - 1);
        if stop < start || stop >= n {
            return Err(Error::InvalidConfig(format!(
                "stop frame {stop} outside [{start}, {}]",
                n - 1
            )));
        }
        Ok((start, stop))
    }
}

/// Frame counts and throughput of a labeling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub frames: usize,
    pub tracked: usize,
    pub empty: usize,
    pub reseeded: usize,
    pub duration_s: f64,
}

impl RunReport {
    pub fn fps(&self) -> f64 {
        if self.duration_s > 0.0 {
            self.frames as f64 / self.duration_s
        } else {
            f64::INFINITY
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn from_toml(text: &str) -> Result<RunReport> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("run report: {e}")))
    }
}

pub fn run_report(annotations: &AnnotationSet, duration_s: f64) -> RunReport {
    RunReport {
        frames: annotations.frame_count(),
        tracked: annotations.flag_count(FrameFlag::Tracked),
        empty: annotations.flag_count(FrameFlag::Empty),
        reseeded: annotations.flag_count(FrameFlag::Reseeded),
        duration_s,
    }
}

#[derive(Debug, Clone)]
pub struct LabelRun {
    pub annotations: AnnotationSet,
    pub report: RunReport,
}

impl LabelRun {
    /// Writes the run directory, then the timing report under `reports/`.
    pub fn save(&self, session: &Session, run_id: &str) -> Result<PathBuf> {
        let dir = session.save_annotations(run_id, &self.annotations)?;
        let path = session.report_path(run_id);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::storage(parent, e))?;
        }
        write_atomic(&path, self.report.to_toml().as_bytes())?;
        Ok(dir)
    }
}

pub fn load_report(session: &Session, run_id: &str) -> Result<RunReport> {
    let path = session.report_path(run_id);
    let text = fs::read_to_string(&path).map_err(|e| Error::storage(&path, e))?;
    RunReport::from_toml(&text)
}

fn best_mask(
    segmenter: &mut dyn PromptableSegmenter,
    image: &image::RgbImage,
    seed: &SeedPrompt,
) -> Result<(Mask, f64)> {
    let proposals = segmenter.propose(image, seed)?;
    let best = select_best(&proposals)?;
    Ok((best.mask.clone(), best.score))
}

fn flag_for(mask: &Mask, nonempty: FrameFlag) -> FrameFlag {
    if mask.is_empty() {
        FrameFlag::Empty
    } else {
        nonempty
    }
}

pub fn label_session(session: &Session, config: &LabelRunConfig, backends: &mut Backends) -> Result<LabelRun> {
    label_session_with_progress(session, config, backends, &mut |_| {})
}

/// Labels every frame of `session`. `progress` receives the number of frames
/// whose mask is final.
pub fn label_session_with_progress(
    session: &Session,
    config: &LabelRunConfig,
    backends: &mut Backends,
    progress: &mut dyn FnMut(usize),
) -> Result<LabelRun> {
    let clock = Instant::now();
    let seed = *session.seeds().first().ok_or(Error::MissingSeed)?;
    let (start, stop) = config.range(session, &seed)?;
    let res = session.resolution();
    let n = session.frame_count();

    let mut masks = vec![Mask::empty(res.width, res.height); start];
    let mut flags = vec![FrameFlag::Empty; start];
    progress(start);

    let image = session.pv(start)?;
    let (init, score) = best_mask(backends.segmenter.as_mut(), &image, &seed)?;
    if init.is_empty() {
        return Err(Error::InitializationFailure(format!(
            "best proposal for seed ({}, {}) on frame {start} is empty (score {score:.3}); \
             place the seed inside the object, away from its boundary",
            seed.x, seed.y
        )));
    }
    let mut state = backends.tracker.initialize(&image, &init, start)?;
    masks.push(init);
    flags.push(FrameFlag::Tracked);
    progress(masks.len());

    for k in start + 1..=stop {
        let image = session.pv(k)?;
        let (next, mask) = backends.tracker.propagate(state, &image)?;
        state = next;
        flags.push(flag_for(&mask, FrameFlag::Tracked));
        masks.push(mask);
        progress(masks.len());
    }
    masks.resize(n, Mask::empty(res.width, res.height));
    flags.resize(n, FrameFlag::Empty);
    progress(n);

    let annotations = AnnotationSet {
        session_id: session.id().to_string(),
        object_id: OBJECT_ID,
        masks,
        flags,
        backend_info: config.backend_info(),
        seed_history: vec![seed],
    };
    let report = run_report(&annotations, clock.elapsed().as_secs_f64());
    Ok(LabelRun {
        annotations,
        report,
    })
}

/// Adds corrective seeds on one frame and re-propagates from there.
///
/// The mask at the seed frame becomes the union of the existing mask and the
/// best proposal of every extra seed; the tracker restarts from that union.
/// Earlier frames are left untouched.
pub fn reseed(
    session: &Session,
    annotations: &AnnotationSet,
    extra_seeds: &[SeedPrompt],
    config: &LabelRunConfig,
    backends: &mut Backends,
) -> Result<LabelRun> {
    reseed_with_progress(session, annotations, extra_seeds, config, backends, &mut |_| {})
}

pub fn reseed_with_progress(
    session: &Session,
    annotations: &AnnotationSet,
    extra_seeds: &[SeedPrompt],
    config: &LabelRunConfig,
    backends: &mut Backends,
    progress: &mut dyn FnMut(usize),
) -> Result<LabelRun> {
    let clock = Instant::now();
    let n = session.frame_count();
    let res = session.resolution();
    annotations.check_against(res, n)?;
    if annotations.session_id != session.id() {
        return Err(Error::InvalidInput(format!(
            "annotations belong to session `{}`",
            annotations.session_id
        )));
    }
    let first = extra_seeds
        .first()
        .ok_or_else(|| Error::InvalidInput("reseed needs at least one seed".into()))?;
    let k = first.frame_index;
    if k >= n {
        return Err(Error::InvalidInput(format!("reseed frame {k} beyond {n}-frame session")));
    }
    for s in extra_seeds {
        if s.frame_index != k {
            return Err(Error::InvalidInput("all reseed points must be on one frame".into()));
        }
        s.check_bounds(res)?;
    }
    let stop = config.stop_frame.unwrap_or(n - 1).min(n - 1);

    let image = session.pv(k)?;
    let mut union = annotations.masks[k].clone();
    let mut added = 0;
    for s in extra_seeds {
        let (m, _) = best_mask(backends.segmenter.as_mut(), &image, s)?;
        if !m.is_empty() {
            union = union.union(&m)?;
            added += 1;
        }
    }
    if added == 0 {
        return Err(Error::ReseedFailure(format!(
            "every proposal for the {} seed(s) on frame {k} is empty",
            extra_seeds.len()
        )));
    }

    let mut masks = annotations.masks[..k].to_vec();
    let mut flags = annotations.flags[..k].to_vec();
    progress(k);
    let mut state = backends.tracker.initialize(&image, &union, k)?;
    masks.push(union);
    flags.push(FrameFlag::Reseeded);
    progress(masks.len());
    for j in k + 1..=stop {
        let image = session.pv(j)?;
        let (next, mask) = backends.tracker.propagate(state, &image)?;
        state = next;
        flags.push(flag_for(&mask, FrameFlag::Reseeded));
        masks.push(mask);
        progress(masks.len());
    }
    masks.resize(n, Mask::empty(res.width, res.height));
    flags.resize(n, FrameFlag::Empty);
    progress(n);

    let mut seed_history = annotations.seed_history.clone();
    seed_history.extend_from_slice(extra_seeds);
    let out = AnnotationSet {
        session_id: annotations.session_id.clone(),
        object_id: OBJECT_ID,
        masks,
        flags,
        backend_info: config.backend_info(),
        seed_history,
    };
    let report = run_report(&out, clock.elapsed().as_secs_f64());
    Ok(LabelRun {
        annotations: out,
        report,
    })
}
