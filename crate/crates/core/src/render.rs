use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::mask::Mask;

pub const OVERLAY_ALPHA: f64 = 0.45;
pub const OVERLAY_TINT: [u8; 3] = [0, 255, 0];

/// Blends `tint` over the masked pixels at [`OVERLAY_ALPHA`]. Unmasked pixels
/// are copied unchanged, so an empty mask returns the frame as-is.
pub fn overlay(frame: &RgbImage, mask: &Mask) -> Result<RgbImage> {
    if frame.dimensions() != mask.dimensions() {
        return Err(Error::ResolutionMismatch {
            expected: frame.dimensions(),
            got: mask.dimensions(),
        });
    }
    let mut out = frame.clone();
    for (x, y) in mask.pixels() {
        let p = out.get_pixel_mut(x, y);
        *p = Rgb(std::array::from_fn(|c| {
            let v = (1.0 - OVERLAY_ALPHA) * p[c] as f64 + OVERLAY_ALPHA * OVERLAY_TINT[c] as f64;
            v.round() as u8
        }));
    }
    Ok(out)
}
