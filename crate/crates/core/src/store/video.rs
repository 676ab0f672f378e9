//! Video export as an uncompressed YUV4MPEG2 (`.y4m`) stream.
//!
//! Frames are converted to 4:4:4 BT.601 limited range. The pipeline never
//! reads this file back; it exists for viewing and for external tools.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::RgbImage;

use super::{AnnotationSet, Session};
use crate::error::{Error, Result};
use crate::render::overlay;

/// Frame rate as a rational `num:den`, exact for integral rates and
/// millihertz-precise otherwise.
pub fn fps_ratio(fps: f64) -> Result<(u64, u64)> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::InvalidInput(format!("fps must be positive, got {fps}")));
    }
    if fps.fract() == 0.0 {
        return Ok((fps as u64, 1));
    }
    let num = (fps * 1000.0).round() as u64;
    if num == 0 {
        return Err(Error::InvalidInput(format!("fps {fps} too small")));
    }
    Ok((num, 1000))
}

fn rgb_to_yuv(r: u8, g: u8, b: u8) -> [u8; 3] {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let y = 16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0;
    let u = 128.0 + (-37.797 * r - 74.203 * g + 112.0 * b) / 255.0;
    let v = 128.0 + (112.0 * r - 93.786 * g - 18.214 * b) / 255.0;
    [y, u, v].map(|c| c.round().clamp(0.0, 255.0) as u8)
}

fn write_frame(out: &mut impl Write, img: &RgbImage) -> std::io::Result<()> {
    let n = (img.width() * img.height()) as usize;
    let mut planes = vec![0u8; n * 3];
    for (i, p) in img.pixels().enumerate() {
        let [y, u, v] = rgb_to_yuv(p[0], p[1], p[2]);
        planes[i] = y;
        planes[n + i] = u;
        planes[2 * n + i] = v;
    }
    out.write_all(b"FRAME\n")?;
    out.write_all(&planes)
}

impl Session {
    /// Writes all PV frames in index order, optionally with a run's masks overlaid.
    pub fn export_video(
        &self,
        target: &Path,
        fps: f64,
        overlay_run: Option<&AnnotationSet>,
    ) -> Result<()> {
        let (num, den) = fps_ratio(fps)?;
        if let Some(ann) = overlay_run {
            ann.check_against(self.resolution(), self.frame_count())?;
        }
        let export_err = |e: std::io::Error| Error::Export(format!("{}: {e}", target.display()));
        let file = File::create(target).map_err(export_err)?;
        let mut out = BufWriter::new(file);
        let res = self.resolution();
        writeln!(
            out,
            "YUV4MPEG2 W{} H{} F{num}:{den} Ip A1:1 C444",
            res.width, res.height
        )
        .map_err(export_err)?;
        for i in 0..self.frame_count() {
            let mut pv = self.pv(i)?;
            if let Some(ann) = overlay_run {
                pv = overlay(&pv, &ann.masks[i])?;
            }
            write_frame(&mut out, &pv).map_err(export_err)?;
        }
        out.flush().map_err(export_err)
    }
}
