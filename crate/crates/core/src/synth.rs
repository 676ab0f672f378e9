//! Synthetic sessions with exact ground-truth masks.
//!
//! Objects are painted in list order, later objects on top; each object's
//! ground truth is its raster minus everything painted above it, so truths
//! are pairwise disjoint. Discs are integer-centred with inclusive radius:
//! `(px-cx)² + (py-cy)² <= r²`.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::segment::DEFAULT_TOLERANCES;
use crate::store::annotation::OBJECT_ID;
use crate::store::{
    AnnotationSet, BackendInfo, CaptureSource, FrameFlag, FrameRecord, Resolution, SeedOrigin,
    SeedPrompt, Session, SessionStore,
};

/// Minimum per-channel colour distance between an object and the background
/// for noise-free scenes: three times the widest flood tolerance.
pub const MIN_SEPARATION: u32 = 3 * DEFAULT_TOLERANCES[2] as u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Disc { radius: u32 },
    /// Axis-aligned, `width`×`height`, centred on the object position.
    Rectangle { width: u32, height: u32 },
    /// Two discs of equal radius; the second sits at `offset` from the first.
    TwoBlob { radius: u32, offset: [i64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub color: [u8; 3],
    /// Centre at `appear_frame`.
    pub start: [i64; 2],
    /// Pixels per frame.
    #[serde(default)]
    pub velocity: [i64; 2],
    #[serde(default)]
    pub appear_frame: usize,
    /// First frame without the object.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disappear_frame: Option<usize>,
}

fn default_fps() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub frame_count: usize,
    pub background: [u8; 3],
    pub objects: Vec<SceneObject>,
    /// Uniform per-pixel, per-channel noise in `[-a, a]`.
    #[serde(default)]
    pub noise_amplitude: u8,
    #[serde(default = "default_fps")]
    pub fps: f64,
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<SceneSpec> {
        toml::from_str(text).map_err(|e| Error::SceneSpec(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn resolution(&self) -> Resolution {
        Resolution::new(self.width, self.height)
    }

    /// 640×360, 90 frames, one disc of radius 40 moving (+2, 0) per frame.
    pub fn moving_disc() -> SceneSpec {
        SceneSpec {
            width: 640,
            height: 360,
            frame_count: 90,
            background: [30, 40, 200],
            objects: vec![SceneObject {
                shape: Shape::Disc { radius: 40 },
                color: [220, 40, 30],
                start: [160, 180],
                velocity: [2, 0],
                appear_frame: 0,
                disappear_frame: None,
            }],
            noise_amplitude: 0,
            fps: 30.0,
        }
    }

    /// [`SceneSpec::moving_disc`] plus a stationary green disc of radius 30
    /// at (480, 100) that appears at frame 30.
    pub fn distractor() -> SceneSpec {
        let mut spec = SceneSpec::moving_disc();
        spec.objects.push(SceneObject {
            shape: Shape::Disc { radius: 30 },
            color: [40, 220, 60],
            start: [480, 100],
            velocity: [0, 0],
            appear_frame: 30,
            disappear_frame: None,
        });
        spec
    }

    /// 640×360, 90 frames, one object made of two discs of radius 30, 120 px
    /// apart, moving (+1, 0) per frame. Its seed lands in the left disc.
    pub fn two_blob() -> SceneSpec {
        SceneSpec {
            objects: vec![SceneObject {
                shape: Shape::TwoBlob {
                    radius: 30,
                    offset: [120, 0],
                },
                color: [220, 40, 30],
                start: [200, 180],
                velocity: [1, 0],
                appear_frame: 0,
                disappear_frame: None,
            }],
            ..SceneSpec::moving_disc()
        }
    }

    pub const PRESETS: [&'static str; 3] = ["moving-disc", "distractor", "two-blob"];

    pub fn preset(name: &str) -> Result<SceneSpec> {
        match name {
            "moving-disc" => Ok(SceneSpec::moving_disc()),
            "distractor" => Ok(SceneSpec::distractor()),
            "two-blob" => Ok(SceneSpec::two_blob()),
            _ => Err(Error::SceneSpec(format!(
                "unknown preset `{name}` (available: {})",
                SceneSpec::PRESETS.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::SceneSpec(m));
        if self.width == 0 || self.height == 0 {
            return err("resolution must be positive".into());
        }
        if self.frame_count == 0 {
            return err("frame_count must be positive".into());
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return err("fps must be positive".into());
        }
        if self.objects.is_empty() {
            return err("scene needs at least one object".into());
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.appear_frame >= self.frame_count {
                return err(format!("object {i} appears after the last frame"));
            }
            if let Some(d) = o.disappear_frame {
                if d <= o.appear_frame {
                    return err(format!("object {i} disappears before it appears"));
                }
            }
            if self.noise_amplitude == 0 {
                let sep = (0..3)
                    .map(|c| o.color[c].abs_diff(self.background[c]) as u32)
                    .max()
                    .unwrap_or(0);
                if sep <= MIN_SEPARATION {
                    return err(format!(
                        "object {i} colour differs from background by {sep}, need > {MIN_SEPARATION}"
                    ));
                }
            }
        }
        Ok(())
    }
}

impl SceneObject {
    fn present(&self, frame: usize) -> bool {
        frame >= self.appear_frame && self.disappear_frame.is_none_or(|d| frame < d)
    }

    fn center(&self, frame: usize) -> (i64, i64) {
        let t = frame.saturating_sub(self.appear_frame) as i64;
        (
            self.start[0] + self.velocity[0] * t,
            self.start[1] + self.velocity[1] * t,
        )
    }

    fn raster(&self, frame: usize, w: u32, h: u32) -> Mask {
        if !self.present(frame) {
            return Mask::empty(w, h);
        }
        let (cx, cy) = self.center(frame);
        let disc = |px: i64, py: i64, cx: i64, cy: i64, r: u32| {
            let (dx, dy) = (px - cx, py - cy);
            dx * dx + dy * dy <= (r as i64) * (r as i64)
        };
        Mask::from_fn(w, h, |x, y| {
            let (px, py) = (x as i64, y as i64);
            match self.shape {
                Shape::Disc { radius } => disc(px, py, cx, cy, radius),
                Shape::Rectangle { width, height } => {
                    let x0 = cx - width as i64 / 2;
                    let y0 = cy - height as i64 / 2;
                    px >= x0 && px < x0 + width as i64 && py >= y0 && py < y0 + height as i64
                }
                Shape::TwoBlob { radius, offset } => {
                    disc(px, py, cx, cy, radius)
                        || disc(px, py, cx + offset[0], cy + offset[1], radius)
                }
            }
        })
    }
}

/// Deterministic renderer for a validated spec.
#[derive(Debug, Clone)]
pub struct Scene {
    spec: SceneSpec,
    seed: u64,
}

impl Scene {
    pub fn new(spec: SceneSpec, seed: u64) -> Result<Scene> {
        spec.validate()?;
        let (w, h) = (spec.width, spec.height);
        for (i, o) in spec.objects.iter().enumerate() {
            if o.disappear_frame.is_some() {
                continue;
            }
            for f in o.appear_frame..spec.frame_count {
                if o.raster(f, w, h).is_empty() {
                    return Err(Error::SceneSpec(format!(
                        "object {i} leaves the frame at frame {f} and has no disappear_frame"
                    )));
                }
            }
        }
        Ok(Scene { spec, seed })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    /// Image and per-object ground truth of one frame.
    pub fn frame(&self, f: usize) -> (RgbImage, Vec<Mask>) {
        let (w, h) = (self.spec.width, self.spec.height);
        let rasters: Vec<Mask> = self.spec.objects.iter().map(|o| o.raster(f, w, h)).collect();
        let mut img = RgbImage::from_pixel(w, h, Rgb(self.spec.background));
        for (o, r) in self.spec.objects.iter().zip(&rasters) {
            for (x, y) in r.pixels() {
                img.put_pixel(x, y, Rgb(o.color));
            }
        }
        let mut truth = Vec::with_capacity(rasters.len());
        for i in 0..rasters.len() {
            let above = &rasters[i + 1..];
            truth.push(Mask::from_fn(w, h, |x, y| {
                rasters[i].get(x, y) && !above.iter().any(|m| m.get(x, y))
            }));
        }
        let a = self.spec.noise_amplitude as i16;
        if a > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(f as u64);
            for p in img.pixels_mut() {
                for c in 0..3 {
                    let n: i16 = rng.random_range(-a..=a);
                    p[c] = (p[c] as i16 + n).clamp(0, 255) as u8;
                }
            }
        }
        (img, truth)
    }

    /// Seed at the centroid of object 0 on its first frame. When the centroid
    /// falls outside the object (two-blob shapes), the centroid of the
    /// object's first connected segment is used instead.
    pub fn seed(&self) -> Result<SeedPrompt> {
        let o = &self.spec.objects[0];
        let f = o.appear_frame;
        let (_, truth) = self.frame(f);
        let mask = &truth[0];
        if mask.is_empty() {
            return Err(Error::SceneSpec(format!(
                "object 0 is not visible on its first frame {f}"
            )));
        }
        let inside = |m: &Mask| {
            let n = m.count() as f64;
            let (sx, sy) = m
                .pixels()
                .fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x as f64, sy + y as f64));
            let (cx, cy) = ((sx / n).round() as u32, (sy / n).round() as u32);
            m.contains(cx, cy).then_some((cx, cy))
        };
        let (x, y) = inside(mask)
            .or_else(|| mask.components().first().and_then(inside))
            .or_else(|| mask.pixels().next())
            .expect("nonempty mask");
        Ok(SeedPrompt::new(f, x, y, SeedOrigin::CaptureExplicit))
    }

    fn timestamp_us(&self, f: usize) -> u64 {
        (f as f64 * 1e6 / self.spec.fps).round() as u64
    }
}

/// Writes a finalized session and returns it with one ground-truth set per object.
pub fn generate(
    spec: &SceneSpec,
    seed: u64,
    store: &SessionStore,
    session_id: &str,
) -> Result<(Session, Vec<AnnotationSet>)> {
    let scene = Scene::new(spec.clone(), seed)?;
    let prompt = scene.seed()?;
    let mut writer = store.create_session(session_id, spec.resolution(), CaptureSource::Synthetic)?;
    let mut truth: Vec<Vec<Mask>> = vec![Vec::with_capacity(spec.frame_count); spec.objects.len()];
    for f in 0..spec.frame_count {
        let (img, masks) = scene.frame(f);
        writer.append_frame(&FrameRecord::new(f, scene.timestamp_us(f), img))?;
        for (t, m) in truth.iter_mut().zip(masks) {
            t.push(m);
        }
    }
    writer.add_seed(prompt)?;
    let session = writer.finalize()?;
    let sets = truth
        .into_iter()
        .map(|masks| AnnotationSet {
            session_id: session_id.to_string(),
            object_id: OBJECT_ID,
            flags: masks
                .iter()
                .map(|m| if m.is_empty() { FrameFlag::Empty } else { FrameFlag::Tracked })
                .collect(),
            masks,
            backend_info: BackendInfo {
                segmenter: "synthetic".into(),
                tracker: "ground-truth".into(),
                config_digest: format!("seed-{seed}"),
                ..Default::default()
            },
            seed_history: vec![prompt],
        })
        .collect();
    Ok((session, sets))
}

/// Directory of the ground truth for object `i` inside a session directory.
pub fn truth_dir(session: &Session, object: usize) -> std::path::PathBuf {
    session.dir().join("truth").join(format!("object-{object:02}"))
}

pub fn write_truth(session: &Session, truth: &[AnnotationSet]) -> Result<()> {
    for (i, t) in truth.iter().enumerate() {
        t.save(&truth_dir(session, i))?;
    }
    Ok(())
}
