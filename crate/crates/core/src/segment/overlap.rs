use image::RgbImage;

use super::{check_init, TrackerState, Tracker};
use crate::error::{Error, Result};
use crate::eval::dice;
use crate::mask::Mask;

pub const DEFAULT_LOSS_THRESHOLD: f64 = 0.1;
pub const DEFAULT_SIGMA_SPAN: f64 = 2.0;

/// Colour model and last position of one connected segment of the object.
#[derive(Debug, Clone)]
struct Segment {
    mask: Mask,
    lo: [f64; 3],
    hi: [f64; 3],
}

impl Segment {
    fn fit(image: &RgbImage, mask: Mask, span: f64) -> Segment {
        let n = mask.count() as f64;
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for (x, y) in mask.pixels() {
            let p = image.get_pixel(x, y);
            for c in 0..3 {
                let v = p[c] as f64;
                sum[c] += v;
                sq[c] += v * v;
            }
        }
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for c in 0..3 {
            let mean = sum[c] / n;
            let var = (sq[c] / n - mean * mean).max(0.0);
            let sd = var.sqrt();
            lo[c] = mean - span * sd;
            hi[c] = mean + span * sd;
        }
        Segment { mask, lo, hi }
    }

    fn band(&self, image: &RgbImage) -> Mask {
        Mask::from_fn(image.width(), image.height(), |x, y| {
            let p = image.get_pixel(x, y);
            (0..3).all(|c| {
                let v = p[c] as f64;
                v >= self.lo[c] - 1e-9 && v <= self.hi[c] + 1e-9
            })
        })
    }
}

/// Reference tracker: colour thresholding plus overlap matching.
///
/// The initial mask is split into its 4-connected segments. For every new
/// frame and every segment, the frame is thresholded by the segment's colour
/// statistics (per-channel mean ± `sigma_span`·stddev over the segment's
/// pixels in the previous frame), and the connected component with the
/// highest Dice against the segment's previous mask is kept if that Dice
/// reaches `loss_threshold`. The output is the union of the kept components,
/// so a single-segment object always yields one component or nothing.
#[derive(Debug, Clone)]
pub struct OverlapTracker {
    loss_threshold: f64,
    sigma_span: f64,
}

impl Default for OverlapTracker {
    fn default() -> Self {
        OverlapTracker {
            loss_threshold: DEFAULT_LOSS_THRESHOLD,
            sigma_span: DEFAULT_SIGMA_SPAN,
        }
    }
}

impl OverlapTracker {
    pub fn new(loss_threshold: f64, sigma_span: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&loss_threshold) {
            return Err(Error::InvalidConfig(format!(
                "loss threshold {loss_threshold} outside [0, 1]"
            )));
        }
        if !(sigma_span.is_finite() && sigma_span >= 0.0) {
            return Err(Error::InvalidConfig(format!("sigma span {sigma_span} must be >= 0")));
        }
        Ok(OverlapTracker {
            loss_threshold,
            sigma_span,
        })
    }
}

impl Tracker for OverlapTracker {
    fn name(&self) -> &str {
        "overlap"
    }

    fn initialize(&mut self, image: &RgbImage, mask: &Mask, frame_index: usize) -> Result<TrackerState> {
        check_init(image, mask)?;
        let segments: Vec<Segment> = mask
            .components()
            .into_iter()
            .map(|c| Segment::fit(image, c, self.sigma_span))
            .collect();
        Ok(TrackerState {
            last_mask: mask.clone(),
            frame_cursor: frame_index,
            opaque: Some(Box::new(segments)),
        })
    }

    fn propagate(&mut self, mut state: TrackerState, image: &RgbImage) -> Result<(TrackerState, Mask)> {
        if state.last_mask.dimensions() != image.dimensions() {
            return Err(Error::ResolutionMismatch {
                expected: state.last_mask.dimensions(),
                got: image.dimensions(),
            });
        }
        let segments = state
            .opaque
            .take()
            .and_then(|b| b.downcast::<Vec<Segment>>().ok())
            .ok_or_else(|| Error::Backend("tracker state was not created by OverlapTracker".into()))?;

        let mut out = Mask::empty(image.width(), image.height());
        let mut next = Vec::with_capacity(segments.len());
        for seg in *segments {
            let mut best: Option<(f64, Mask)> = None;
            for comp in seg.band(image).components() {
                let d = dice(&comp, &seg.mask)?;
                if best.as_ref().is_none_or(|(bd, _)| d > *bd) {
                    best = Some((d, comp));
                }
            }
            match best {
                Some((d, comp)) if d >= self.loss_threshold => {
                    out = out.union(&comp)?;
                    next.push(Segment::fit(image, comp, self.sigma_span));
                }
                // lost: keep the old model so the segment can be re-acquired
                _ => next.push(seg),
            }
        }

        if !out.is_empty() {
            state.last_mask = out.clone();
        }
        state.frame_cursor += 1;
        state.opaque = Some(Box::new(next));
        Ok((state, out))
    }
}
