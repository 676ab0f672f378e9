//! Promptable segmenters and single-object trackers.
//!
//! Backends are trait objects selected by name through a
//! [`BackendRegistry`]. Two deterministic reference backends ship with the
//! crate ([`ChromaFloodSegmenter`], [`OverlapTracker`]); foundation-model
//! backends are reached out-of-process through [`adapter`].

pub mod adapter;
mod flood;
mod overlap;
mod registry;

use std::any::Any;

use image::RgbImage;

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::store::{Resolution, SeedPrompt};

pub use flood::{ChromaFloodSegmenter, DEFAULT_TOLERANCES};
pub use overlap::{OverlapTracker, DEFAULT_LOSS_THRESHOLD, DEFAULT_SIGMA_SPAN};
pub use registry::{BackendParams, BackendRegistry, BackendSpec, Backends, BuildContext};

/// Number of proposals every segmenter returns for a point prompt.
pub const PROPOSAL_COUNT: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct MaskProposal {
    pub mask: Mask,
    pub score: f64,
}

impl MaskProposal {
    /// Clamps the score to `[0, 1]`; empty masks always score 0.
    pub fn new(mask: Mask, score: f64) -> Self {
        let score = if mask.is_empty() || score.is_nan() {
            0.0
        } else {
            score.clamp(0.0, 1.0)
        };
        MaskProposal { mask, score }
    }
}

/// Index of the highest-scoring proposal; ties go to the lowest index.
pub fn best_index(proposals: &[MaskProposal]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in proposals.iter().enumerate() {
        match best {
            Some(b) if proposals[b].score >= p.score => {}
            _ => best = Some(i),
        }
    }
    best.ok_or(Error::NoProposal)
}

/// The proposal that initializes tracking. An empty best mask is returned
/// as-is; callers treat it as an initialization failure.
pub fn select_best(proposals: &[MaskProposal]) -> Result<&MaskProposal> {
    best_index(proposals).map(|i| &proposals[i])
}

pub fn check_prompt(image: &RgbImage, prompt: &SeedPrompt) -> Result<()> {
    prompt.check_bounds(Resolution::new(image.width(), image.height()))
}

pub trait PromptableSegmenter: Send {
    fn name(&self) -> &str;

    /// Exactly three candidate masks for a single foreground point. A nonempty
    /// proposal contains the prompt pixel.
    fn propose(&mut self, image: &RgbImage, prompt: &SeedPrompt)
        -> Result<[MaskProposal; PROPOSAL_COUNT]>;
}

/// State threaded through a tracking run.
pub struct TrackerState {
    /// Last nonempty object mask.
    pub last_mask: Mask,
    /// Index of the frame `last_mask` was produced for (or last propagated to).
    pub frame_cursor: usize,
    /// Backend-private data.
    pub opaque: Option<Box<dyn Any + Send>>,
}

impl std::fmt::Debug for TrackerState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrackerState")
            .field("last_mask", &self.last_mask)
            .field("frame_cursor", &self.frame_cursor)
            .finish_non_exhaustive()
    }
}

pub trait Tracker: Send {
    fn name(&self) -> &str;

    fn initialize(&mut self, image: &RgbImage, mask: &Mask, frame_index: usize)
        -> Result<TrackerState>;

    /// Mask of the tracked object in the next frame. Loss is an empty mask,
    /// never an error.
    fn propagate(&mut self, state: TrackerState, image: &RgbImage) -> Result<(TrackerState, Mask)>;
}

pub(crate) fn check_init(image: &RgbImage, mask: &Mask) -> Result<()> {
    if mask.dimensions() != image.dimensions() {
        return Err(Error::ResolutionMismatch {
            expected: image.dimensions(),
            got: mask.dimensions(),
        });
    }
    if mask.is_empty() {
        return Err(Error::InitializationFailure("initial mask is empty".into()));
    }
    Ok(())
}
