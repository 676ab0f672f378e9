use image::RgbImage;

use super::{check_prompt, MaskProposal, PromptableSegmenter, PROPOSAL_COUNT};
use crate::error::{Error, Result};
use crate::mask::{flood, Mask};
use crate::store::SeedPrompt;

/// Per-channel tolerances (8-bit units) of the three proposals, ascending.
pub const DEFAULT_TOLERANCES: [u8; PROPOSAL_COUNT] = [8, 24, 48];

/// Score given to the widest proposal, which has no wider neighbour to be
/// compared with.
const WIDEST_SCORE: f64 = 0.99;

/// Reference segmenter: 4-connected flood fill in RGB space from the seed.
///
/// A pixel joins proposal `i` when it is connected to the seed through pixels
/// whose every channel lies within `tolerances[i]` of the seed colour. Because
/// the admitted set only grows with tolerance, proposals are nested. Each
/// proposal is rated by its IoU with the next wider one, so a blob that does
/// not grow with tolerance rates high.
#[derive(Debug, Clone)]
pub struct ChromaFloodSegmenter {
    tolerances: [u8; PROPOSAL_COUNT],
}

impl Default for ChromaFloodSegmenter {
    fn default() -> Self {
        ChromaFloodSegmenter {
            tolerances: DEFAULT_TOLERANCES,
        }
    }
}

impl ChromaFloodSegmenter {
    pub fn new(tolerances: [u8; PROPOSAL_COUNT]) -> Result<Self> {
        if tolerances.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidConfig(format!(
                "tolerances must be ascending, got {tolerances:?}"
            )));
        }
        Ok(ChromaFloodSegmenter { tolerances })
    }

    pub fn tolerances(&self) -> [u8; PROPOSAL_COUNT] {
        self.tolerances
    }

    pub fn max_tolerance(&self) -> u8 {
        self.tolerances[PROPOSAL_COUNT - 1]
    }

    pub fn fill(image: &RgbImage, seed: (u32, u32), tolerance: u8) -> Mask {
        let origin = *image.get_pixel(seed.0, seed.1);
        flood(image.width(), image.height(), seed, |x, y| {
            let p = image.get_pixel(x, y);
            (0..3).all(|c| p[c].abs_diff(origin[c]) <= tolerance)
        })
    }
}

impl PromptableSegmenter for ChromaFloodSegmenter {
    fn name(&self) -> &str {
        "chroma-flood"
    }

    fn propose(
        &mut self,
        image: &RgbImage,
        prompt: &SeedPrompt,
    ) -> Result<[MaskProposal; PROPOSAL_COUNT]> {
        check_prompt(image, prompt)?;
        let masks: [Mask; PROPOSAL_COUNT] = self
            .tolerances
            .map(|t| Self::fill(image, (prompt.x, prompt.y), t));
        let mut scores = [WIDEST_SCORE; PROPOSAL_COUNT];
        for i in 0..PROPOSAL_COUNT - 1 {
            scores[i] = masks[i].iou(&masks[i + 1])?;
        }
        let mut i = 0;
        Ok(masks.map(|m| {
            let p = MaskProposal::new(m, scores[i]);
            i += 1;
            p
        }))
    }
}
