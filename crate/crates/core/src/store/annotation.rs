//! Annotation runs: one binary mask per session frame plus a run manifest.
//!
//! Layout of a run directory: `000000.png ...` (8-bit, 0/255) and `run.toml`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{frame_file, write_atomic, Resolution, SeedPrompt};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::segment::BackendParams;

pub const RUN_MANIFEST: &str = "run.toml";
pub const OBJECT_ID: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameFlag {
    Tracked,
    Empty,
    Reseeded,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub segmenter: String,
    pub tracker: String,
    pub config_digest: String,
    #[serde(default, skip_serializing_if = "BackendParams::is_empty")]
    pub segmenter_params: BackendParams,
    #[serde(default, skip_serializing_if = "BackendParams::is_empty")]
    pub tracker_params: BackendParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_frame: Option<usize>,
}

/// Per-frame masks of the single tracked object.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub session_id: String,
    pub object_id: u32,
    pub masks: Vec<Mask>,
    pub flags: Vec<FrameFlag>,
    pub backend_info: BackendInfo,
    pub seed_history: Vec<SeedPrompt>,
}

#[derive(Serialize, Deserialize)]
struct RunManifest {
    session_id: String,
    object_id: u32,
    resolution: Resolution,
    frame_count: usize,
    backend_info: BackendInfo,
    flags: Vec<FrameFlag>,
    seed_history: Vec<SeedPrompt>,
}

impl AnnotationSet {
    pub fn frame_count(&self) -> usize {
        self.masks.len()
    }

    pub fn resolution(&self) -> Option<Resolution> {
        self.masks
            .first()
            .map(|m| Resolution::new(m.width(), m.height()))
    }

    pub fn flag_count(&self, flag: FrameFlag) -> usize {
        self.flags.iter().filter(|f| **f == flag).count()
    }

    /// Validates the single-object and per-frame invariants against a session shape.
    pub fn check_against(&self, res: Resolution, frame_count: usize) -> Result<()> {
        if self.object_id != OBJECT_ID {
            return Err(Error::InvalidInput(format!(
                "object id {} (only single-object runs are supported)",
                self.object_id
            )));
        }
        if self.masks.len() != frame_count || self.flags.len() != frame_count {
            return Err(Error::InvalidInput(format!(
                "{} masks / {} flags for {frame_count} frames",
                self.masks.len(),
                self.flags.len()
            )));
        }
        for m in &self.masks {
            if m.dimensions() != res.pair() {
                return Err(Error::ResolutionMismatch {
                    expected: res.pair(),
                    got: m.dimensions(),
                });
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let res = self
            .resolution()
            .ok_or_else(|| Error::InvalidInput("annotation set has no frames".into()))?;
        self.check_against(res, self.masks.len())?;
        fs::create_dir_all(dir).map_err(|e| Error::storage(dir, e))?;
        for (i, m) in self.masks.iter().enumerate() {
            m.save_png(&dir.join(frame_file(i, "png")))?;
        }
        let manifest = RunManifest {
            session_id: self.session_id.clone(),
            object_id: self.object_id,
            resolution: res,
            frame_count: self.masks.len(),
            backend_info: self.backend_info.clone(),
            flags: self.flags.clone(),
            seed_history: self.seed_history.clone(),
        };
        let path = dir.join(RUN_MANIFEST);
        let text = toml::to_string(&manifest).map_err(|e| Error::storage(&path, e))?;
        write_atomic(&path, text.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<AnnotationSet> {
        let path = dir.join(RUN_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::corrupt(&path, e))?;
        let manifest: RunManifest = toml::from_str(&text).map_err(|e| Error::corrupt(&path, e))?;
        let mut masks = Vec::with_capacity(manifest.frame_count);
        for i in 0..manifest.frame_count {
            let p = dir.join(frame_file(i, "png"));
            if !p.is_file() {
                return Err(Error::corrupt(&p, "missing mask file"));
            }
            masks.push(Mask::load_png(&p)?);
        }
        let set = AnnotationSet {
            session_id: manifest.session_id,
            object_id: manifest.object_id,
            masks,
            flags: manifest.flags,
            backend_info: manifest.backend_info,
            seed_history: manifest.seed_history,
        };
        set.check_against(manifest.resolution, manifest.frame_count)
            .map_err(|e| Error::corrupt(dir, e))?;
        Ok(set)
    }

    pub fn mask_map(&self) -> BTreeMap<usize, Mask> {
        self.masks.iter().cloned().enumerate().collect()
    }
}

/// Reads every `NNNNNN.png` mask in a directory, keyed by frame index.
///
/// Works for annotation runs as well as sparse rater directories that only
/// cover a subset of frames.
pub fn load_mask_dir(dir: &Path) -> Result<BTreeMap<usize, Mask>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::storage(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().is_none_or(|e| e != "png") {
            continue;
        }
        let Some(index) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<usize>().ok())
        else {
            continue;
        };
        out.insert(index, Mask::load_png(&path)?);
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no mask files in {}",
            dir.display()
        )));
    }
    Ok(out)
}
