//! Binary object masks.
//!
//! A [`Mask`] is a dense row-major bitmap. On disk it is an 8-bit grayscale
//! PNG with 0 for background and 255 for the object.

use std::collections::VecDeque;
use std::path::Path;

use image::{GrayImage, Luma};

use crate::error::{Error, Result};

pub const OBJECT_VALUE: u8 = 255;

#[derive(Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("count", &self.count())
            .finish()
    }
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Mask {
            width,
            height,
            bits,
        }
    }

    /// Builds a mask from row-major bits. Panics if the length is wrong.
    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize);
        Mask {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[self.offset(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.offset(x, y);
        self.bits[i] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.get(x, y)
    }

    fn check_same_size(&self, other: &Mask) -> Result<()> {
        if self.dimensions() != other.dimensions() {
            return Err(Error::ResolutionMismatch {
                expected: self.dimensions(),
                got: other.dimensions(),
            });
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &Mask) -> Result<usize> {
        self.check_same_size(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count())
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.check_same_size(other)?;
        Ok(Mask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a || *b)
                .collect(),
        })
    }

    /// True when every pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dimensions() == other.dimensions()
            && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    /// Intersection over union. Two empty masks have IoU 1.
    pub fn iou(&self, other: &Mask) -> Result<f64> {
        let inter = self.intersection_count(other)?;
        let union = self.count() + other.count() - inter;
        if union == 0 {
            return Ok(1.0);
        }
        Ok(inter as f64 / union as f64)
    }

    /// Iterator over the coordinates of set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }

    /// 4-connected components, ordered by their first pixel in row-major order.
    pub fn components(&self) -> Vec<Mask> {
        let mut seen = vec![false; self.bits.len()];
        let mut out = Vec::new();
        for start in 0..self.bits.len() {
            if !self.bits[start] || seen[start] {
                continue;
            }
            let x = (start % self.width as usize) as u32;
            let y = (start / self.width as usize) as u32;
            let comp = flood(self.width, self.height, (x, y), |px, py| self.get(px, py));
            for (i, b) in comp.bits.iter().enumerate() {
                if *b {
                    seen[i] = true;
                }
            }
            out.push(comp);
        }
        out
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            Luma([if self.get(x, y) { OBJECT_VALUE } else { 0 }])
        })
    }

    /// Any nonzero value counts as object.
    pub fn from_gray_image(img: &GrayImage) -> Mask {
        Mask::from_fn(img.width(), img.height(), |x, y| img.get_pixel(x, y)[0] != 0)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_gray_image()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::storage(path, e))
    }

    pub fn load_png(path: &Path) -> Result<Mask> {
        let img = image::open(path).map_err(|e| Error::storage(path, e))?;
        Ok(Mask::from_gray_image(&img.to_luma8()))
    }
}

/// 4-connected flood fill from `seed` over pixels accepted by `admit`.
/// Returns an empty mask if the seed itself is not admitted.
pub fn flood(
    width: u32,
    height: u32,
    seed: (u32, u32),
    mut admit: impl FnMut(u32, u32) -> bool,
) -> Mask {
    let mut mask = Mask::empty(width, height);
    if seed.0 >= width || seed.1 >= height || !admit(seed.0, seed.1) {
        return mask;
    }
    let mut queue = VecDeque::new();
    mask.set(seed.0, seed.1, true);
    queue.push_back(seed);
    while let Some((x, y)) = queue.pop_front() {
        let mut visit = |nx: u32, ny: u32, mask: &mut Mask| {
            if !mask.get(nx, ny) && admit(nx, ny) {
                mask.set(nx, ny, true);
                queue.push_back((nx, ny));
            }
        };
        if x > 0 {
            visit(x - 1, y, &mut mask);
        }
        if x + 1 < width {
            visit(x + 1, y, &mut mask);
        }
        if y > 0 {
            visit(x, y - 1, &mut mask);
        }
        if y + 1 < height {
            visit(x, y + 1, &mut mask);
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(w: u32, h: u32, x0: u32, y0: u32, bw: u32, bh: u32) -> Mask {
        Mask::from_fn(w, h, |x, y| x >= x0 && x < x0 + bw && y >= y0 && y < y0 + bh)
    }

    #[test]
    fn components_split_diagonal_neighbours() {
        // diagonal contact is not 4-connected
        let m = Mask::from_fn(4, 4, |x, y| (x, y) == (0, 0) || (x, y) == (1, 1));
        let comps = m.components();
        assert_eq!(comps.len(), 2);
        assert!(comps[0].get(0, 0));
        assert!(comps[1].get(1, 1));
    }

    #[test]
    fn components_cover_mask() {
        let a = block(16, 16, 0, 0, 4, 4);
        let b = block(16, 16, 8, 8, 3, 5);
        let m = a.union(&b).unwrap();
        let comps = m.components();
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0], a);
        assert_eq!(comps[1], b);
    }

    #[test]
    fn flood_rejects_unadmitted_seed() {
        let m = flood(4, 4, (1, 1), |_, _| false);
        assert!(m.is_empty());
    }

    #[test]
    fn union_requires_same_size() {
        let a = Mask::empty(4, 4);
        let b = Mask::empty(4, 5);
        assert!(matches!(a.union(&b), Err(Error::ResolutionMismatch { .. })));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let m = Mask::from_fn(13, 7, |x, y| (x * 3 + y) % 5 == 0);
        m.save_png(&path).unwrap();
        assert_eq!(Mask::load_png(&path).unwrap(), m);
        let raw = image::open(&path).unwrap().to_luma8();
        assert!(raw.pixels().all(|p| p[0] == 0 || p[0] == 255));
    }
}
