//! Run-length encoded mask export.
//!
//! Text format, one line per frame after a header:
//!
//! ```text
//! RLE1 <width> <height> <frames>
//! <frame-index> <run> <run> ...
//! ```
//!
//! Runs cover the frame in row-major order and alternate background and
//! foreground, starting with background (a leading 0 when the first pixel is
//! foreground). Runs sum to `width * height`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::store::AnnotationSet;

pub const RLE_MAGIC: &str = "RLE1";

pub fn encode(mask: &Mask) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &b in mask.bits() {
        if b == current {
            len += 1;
        } else {
            runs.push(len);
            current = b;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn decode(width: u32, height: u32, runs: &[u32]) -> Result<Mask> {
    let total = width as u64 * height as u64;
    let sum: u64 = runs.iter().map(|r| *r as u64).sum();
    if sum != total {
        return Err(Error::InvalidInput(format!(
            "runs cover {sum} pixels, mask has {total}"
        )));
    }
    let mut bits = Vec::with_capacity(total as usize);
    for (i, &r) in runs.iter().enumerate() {
        bits.extend(std::iter::repeat_n(i % 2 == 1, r as usize));
    }
    Ok(Mask::from_bits(width, height, bits))
}

pub fn write(annotations: &AnnotationSet, mut out: impl Write) -> Result<()> {
    let res = annotations
        .resolution()
        .ok_or_else(|| Error::InvalidInput("annotation set has no frames".into()))?;
    let io = |e: std::io::Error| Error::Export(e.to_string());
    writeln!(out, "{RLE_MAGIC} {} {} {}", res.width, res.height, annotations.frame_count())
        .map_err(io)?;
    for (i, m) in annotations.masks.iter().enumerate() {
        let runs: Vec<String> = encode(m).iter().map(u32::to_string).collect();
        writeln!(out, "{i} {}", runs.join(" ")).map_err(io)?;
    }
    Ok(())
}

/// Parses an RLE file back into `(frame index, mask)` pairs.
pub fn read(input: impl BufRead) -> Result<Vec<(usize, Mask)>> {
    let bad = |what: &str| Error::InvalidInput(format!("rle: {what}"));
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad("missing header"))?
        .map_err(|e| bad(&e.to_string()))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 4 || h[0] != RLE_MAGIC {
        return Err(bad("bad header"));
    }
    let num = |s: &str| s.parse::<u64>().map_err(|_| bad("bad number"));
    let (w, hgt, n) = (num(h[1])? as u32, num(h[2])? as u32, num(h[3])? as usize);
    let mut out = Vec::with_capacity(n);
    for line in lines {
        let line = line.map_err(|e| bad(&e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let idx = num(fields.next().ok_or_else(|| bad("empty line"))?)? as usize;
        let runs: Vec<u32> = fields.map(|f| num(f).map(|v| v as u32)).collect::<Result<_>>()?;
        out.push((idx, decode(w, hgt, &runs)?));
    }
    if out.len() != n {
        return Err(bad("frame count mismatch"));
    }
    Ok(out)
}
