//! Persistent session storage.
//!
//! One directory per session:
//!
//! ```text
//! <root>/<session_id>/
//!   manifest.toml
//!   pv/000000.png      RGB, lossless
//!   depth/000000.png   16-bit millimeters, optional
//!   pose/000000.txt    16 numbers, row-major camera-to-world, optional
//!   pc/000000.bin      opaque point-cloud blob, optional
//!   ann/<run-id>/      annotation runs (see [`annotation`])
//!   reports/<run-id>.toml
//! ```
//!
//! A session is written through a [`SessionWriter`] and becomes an immutable
//! [`Session`] once finalized.

pub mod annotation;
pub mod video;

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use image::{ImageBuffer, Luma, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use annotation::{load_mask_dir, AnnotationSet, BackendInfo, FrameFlag};

pub type DepthImage = ImageBuffer<Luma<u16>, Vec<u16>>;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const DEFAULT_RESOLUTION: Resolution = Resolution {
    width: 640,
    height: 360,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Resolution {
    pub const fn new(width: u32, height: u32) -> Self {
        Resolution { width, height }
    }

    pub fn pair(self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn center(self) -> (u32, u32) {
        (self.width / 2, self.height / 2)
    }

    pub fn contains(self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }
}

impl std::fmt::Display for Resolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Camera-to-world transform, row-major, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose(pub [f64; 16]);

impl Pose {
    pub fn identity() -> Self {
        let mut m = [0.0; 16];
        for i in 0..4 {
            m[i * 5] = 1.0;
        }
        Pose(m)
    }

    fn to_text(self) -> String {
        let mut s = String::new();
        for row in self.0.chunks(4) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    fn parse(text: &str) -> Option<Pose> {
        let values: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse().ok())
            .collect::<Option<_>>()?;
        let arr: [f64; 16] = values.try_into().ok()?;
        Some(Pose(arr))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp_us: u64,
    pub pv: RgbImage,
    pub depth: Option<DepthImage>,
    pub pose: Option<Pose>,
    pub point_cloud: Option<Vec<u8>>,
}

impl FrameRecord {
    pub fn new(index: usize, timestamp_us: u64, pv: RgbImage) -> Self {
        FrameRecord {
            index,
            timestamp_us,
            pv,
            depth: None,
            pose: None,
            point_cloud: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PromptLabel {
    #[default]
    Foreground,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedOrigin {
    CaptureCenter,
    CaptureExplicit,
    ReviewClick,
}

/// A single positive point prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPrompt {
    pub frame_index: usize,
    pub x: u32,
    pub y: u32,
    #[serde(default)]
    pub label: PromptLabel,
    pub origin: SeedOrigin,
}

impl SeedPrompt {
    pub fn new(frame_index: usize, x: u32, y: u32, origin: SeedOrigin) -> Self {
        SeedPrompt {
            frame_index,
            x,
            y,
            label: PromptLabel::Foreground,
            origin,
        }
    }

    pub fn check_bounds(&self, res: Resolution) -> Result<()> {
        if !res.contains(self.x as i64, self.y as i64) {
            return Err(Error::SeedOutOfBounds {
                x: self.x as i64,
                y: self.y as i64,
                width: res.width,
                height: res.height,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureSource {
    Network,
    Replay,
    Synthetic,
    Import,
}

impl std::str::FromStr for CaptureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "network" => Ok(CaptureSource::Network),
            "replay" => Ok(CaptureSource::Replay),
            "synthetic" => Ok(CaptureSource::Synthetic),
            "import" => Ok(CaptureSource::Import),
            other => Err(Error::InvalidInput(format!("unknown capture source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub session_id: String,
    pub resolution: Resolution,
    pub frame_count: usize,
    pub created_at: DateTime<Utc>,
    pub capture_source: CaptureSource,
    pub finalized: bool,
    pub timestamps_us: Vec<u64>,
    pub seed_prompts: Vec<SeedPrompt>,
}

impl SessionManifest {
    fn read(dir: &Path) -> Result<SessionManifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::corrupt(&path, e))?;
        toml::from_str(&text).map_err(|e| Error::corrupt(&path, e))
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string(self).map_err(|e| Error::storage(&path, e))?;
        write_atomic(&path, text.as_bytes())
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::storage(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::storage(path, e))
}

pub fn frame_file(index: usize, ext: &str) -> String {
    format!("{index:06}.{ext}")
}

/// Root directory holding many sessions.
#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SessionStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_dir(&self, session_id: &str) -> PathBuf {
        self.root.join(session_id)
    }

    pub fn create_session(
        &self,
        session_id: &str,
        resolution: Resolution,
        source: CaptureSource,
    ) -> Result<SessionWriter> {
        validate_session_id(session_id)?;
        if resolution.width == 0 || resolution.height == 0 {
            return Err(Error::InvalidInput(format!(
                "resolution {resolution} must be positive"
            )));
        }
        fs::create_dir_all(&self.root).map_err(|e| Error::storage(&self.root, e))?;
        let dir = self.session_dir(session_id);
        match fs::create_dir(&dir) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::DuplicateSession(session_id.to_string()))
            }
            Err(e) => return Err(Error::storage(&dir, e)),
        }
        fs::create_dir(dir.join("pv")).map_err(|e| Error::storage(&dir, e))?;
        let manifest = SessionManifest {
            session_id: session_id.to_string(),
            resolution,
            frame_count: 0,
            created_at: Utc::now(),
            capture_source: source,
            finalized: false,
            timestamps_us: Vec::new(),
            seed_prompts: Vec::new(),
        };
        manifest.write(&dir)?;
        Ok(SessionWriter { dir, manifest })
    }

    pub fn open(&self, session_id: &str) -> Result<Session> {
        Session::load(self.session_dir(session_id))
    }

    /// Manifests of every finalized session under the root, sorted by id.
    pub fn list(&self) -> Result<Vec<SessionManifest>> {
        let mut out = Vec::new();
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(Error::storage(&self.root, e)),
        };
        for entry in entries.flatten() {
            let dir = entry.path();
            if !dir.join(MANIFEST_FILE).is_file() {
                continue;
            }
            if let Ok(m) = SessionManifest::read(&dir) {
                if m.finalized {
                    out.push(m);
                }
            }
        }
        out.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        Ok(out)
    }
}

pub fn validate_session_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if !ok {
        return Err(Error::InvalidInput(format!("invalid session id `{id}`")));
    }
    Ok(())
}

/// Append-only handle to a session under construction. One writer per session.
#[derive(Debug)]
pub struct SessionWriter {
    dir: PathBuf,
    manifest: SessionManifest,
}

impl SessionWriter {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &SessionManifest {
        &self.manifest
    }

    pub fn frame_count(&self) -> usize {
        self.manifest.frame_count
    }

    pub fn resolution(&self) -> Resolution {
        self.manifest.resolution
    }

    pub fn append_frame(&mut self, frame: &FrameRecord) -> Result<()> {
        if self.manifest.finalized {
            return Err(Error::SessionClosed);
        }
        let expected = self.manifest.frame_count;
        if frame.index != expected {
            return Err(Error::OutOfOrderFrame {
                expected,
                got: frame.index,
            });
        }
        let res = self.manifest.resolution;
        check_dims(res, frame.pv.dimensions())?;
        if let Some(depth) = &frame.depth {
            check_dims(res, depth.dimensions())?;
        }
        if let Some(&last) = self.manifest.timestamps_us.last() {
            if frame.timestamp_us < last {
                return Err(Error::InvalidInput(format!(
                    "timestamp {} precedes previous frame's {}",
                    frame.timestamp_us, last
                )));
            }
        }

        let pv_path = self.dir.join("pv").join(frame_file(frame.index, "png"));
        frame
            .pv
            .save_with_format(&pv_path, image::ImageFormat::Png)
            .map_err(|e| Error::storage(&pv_path, e))?;
        if let Some(depth) = &frame.depth {
            self.write_depth(frame.index, depth)?;
        }
        if let Some(pose) = frame.pose {
            self.write_pose(frame.index, pose)?;
        }
        if let Some(pc) = &frame.point_cloud {
            let dir = self.dir.join("pc");
            fs::create_dir_all(&dir).map_err(|e| Error::storage(&dir, e))?;
            let path = dir.join(frame_file(frame.index, "bin"));
            fs::write(&path, pc).map_err(|e| Error::storage(&path, e))?;
        }
        self.manifest.timestamps_us.push(frame.timestamp_us);
        self.manifest.frame_count += 1;
        Ok(())
    }

    /// Attaches a depth map to an already appended frame.
    pub fn attach_depth(&mut self, index: usize, depth: &DepthImage) -> Result<()> {
        self.check_attachable(index)?;
        check_dims(self.manifest.resolution, depth.dimensions())?;
        self.write_depth(index, depth)
    }

    /// Attaches a pose to an already appended frame.
    pub fn attach_pose(&mut self, index: usize, pose: Pose) -> Result<()> {
        self.check_attachable(index)?;
        self.write_pose(index, pose)
    }

    fn check_attachable(&self, index: usize) -> Result<()> {
        if self.manifest.finalized {
            return Err(Error::SessionClosed);
        }
        if index >= self.manifest.frame_count {
            return Err(Error::OutOfOrderFrame {
                expected: self.manifest.frame_count,
                got: index,
            });
        }
        Ok(())
    }

    fn write_depth(&self, index: usize, depth: &DepthImage) -> Result<()> {
        let dir = self.dir.join("depth");
        fs::create_dir_all(&dir).map_err(|e| Error::storage(&dir, e))?;
        let path = dir.join(frame_file(index, "png"));
        depth
            .save_with_format(&path, image::ImageFormat::Png)
            .map_err(|e| Error::storage(&path, e))
    }

    fn write_pose(&self, index: usize, pose: Pose) -> Result<()> {
        let dir = self.dir.join("pose");
        fs::create_dir_all(&dir).map_err(|e| Error::storage(&dir, e))?;
        let path = dir.join(frame_file(index, "txt"));
        fs::write(&path, pose.to_text()).map_err(|e| Error::storage(&path, e))
    }

    /// Registers a seed. Before the first frame only frame 0 is accepted.
    pub fn add_seed(&mut self, seed: SeedPrompt) -> Result<()> {
        if self.manifest.finalized {
            return Err(Error::SessionClosed);
        }
        seed.check_bounds(self.manifest.resolution)?;
        let last = self.manifest.frame_count.saturating_sub(1);
        if seed.frame_index > last {
            return Err(Error::SeedFrameMissing {
                frame: seed.frame_index,
                frame_count: self.manifest.frame_count,
            });
        }
        self.manifest.seed_prompts.push(seed);
        Ok(())
    }

    /// Seals the session and reloads it with full validation.
    pub fn finalize(mut self) -> Result<Session> {
        if self.manifest.frame_count == 0 {
            return Err(Error::EmptySession);
        }
        if self.manifest.seed_prompts.is_empty() {
            return Err(Error::MissingSeed);
        }
        self.manifest.finalized = true;
        self.manifest.write(&self.dir)?;
        Session::load(&self.dir)
    }
}

fn check_dims(res: Resolution, got: (u32, u32)) -> Result<()> {
    if res.pair() != got {
        return Err(Error::ResolutionMismatch {
            expected: res.pair(),
            got,
        });
    }
    Ok(())
}

/// A finalized, read-only session. Frames are read from disk on demand.
#[derive(Debug, Clone)]
pub struct Session {
    dir: PathBuf,
    manifest: SessionManifest,
}

impl Session {
    pub fn load(dir: impl AsRef<Path>) -> Result<Session> {
        let dir = dir.as_ref().to_path_buf();
        let manifest = SessionManifest::read(&dir)?;
        if !manifest.finalized {
            return Err(Error::NotFinalized(dir));
        }
        let n = manifest.frame_count;
        if n == 0 {
            return Err(Error::EmptySession);
        }
        if manifest.timestamps_us.len() != n {
            return Err(Error::corrupt(
                &dir,
                format!("{} timestamps for {n} frames", manifest.timestamps_us.len()),
            ));
        }
        if manifest.timestamps_us.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::corrupt(&dir, "timestamps decrease"));
        }
        if manifest.seed_prompts.is_empty() {
            return Err(Error::MissingSeed);
        }
        for seed in &manifest.seed_prompts {
            seed.check_bounds(manifest.resolution)
                .map_err(|e| Error::corrupt(&dir, e))?;
            if seed.frame_index >= n {
                return Err(Error::corrupt(&dir, "seed references a missing frame"));
            }
        }

        let pv_dir = dir.join("pv");
        let stored = count_files(&pv_dir, "png")?;
        if stored != n {
            return Err(Error::corrupt(
                &dir,
                format!("manifest lists {n} frames but {stored} PV files exist"),
            ));
        }
        for i in 0..n {
            let path = pv_dir.join(frame_file(i, "png"));
            let dims = image::image_dimensions(&path).map_err(|e| Error::corrupt(&path, e))?;
            if dims != manifest.resolution.pair() {
                return Err(Error::corrupt(
                    &path,
                    format!("frame is {}x{}, session is {}", dims.0, dims.1, manifest.resolution),
                ));
            }
        }
        Ok(Session { dir, manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &SessionManifest {
        &self.manifest
    }

    pub fn id(&self) -> &str {
        &self.manifest.session_id
    }

    pub fn resolution(&self) -> Resolution {
        self.manifest.resolution
    }

    pub fn frame_count(&self) -> usize {
        self.manifest.frame_count
    }

    pub fn seeds(&self) -> &[SeedPrompt] {
        &self.manifest.seed_prompts
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.frame_count() {
            return Err(Error::InvalidInput(format!(
                "frame {index} out of range (session has {})",
                self.frame_count()
            )));
        }
        Ok(())
    }

    pub fn pv_path(&self, index: usize) -> PathBuf {
        self.dir.join("pv").join(frame_file(index, "png"))
    }

    pub fn pv(&self, index: usize) -> Result<RgbImage> {
        self.check_index(index)?;
        let path = self.pv_path(index);
        let img = image::open(&path).map_err(|e| Error::corrupt(&path, e))?;
        Ok(img.to_rgb8())
    }

    pub fn depth(&self, index: usize) -> Result<Option<DepthImage>> {
        self.check_index(index)?;
        let path = self.dir.join("depth").join(frame_file(index, "png"));
        if !path.is_file() {
            return Ok(None);
        }
        let img = image::open(&path).map_err(|e| Error::corrupt(&path, e))?;
        Ok(Some(img.to_luma16()))
    }

    pub fn pose(&self, index: usize) -> Result<Option<Pose>> {
        self.check_index(index)?;
        let path = self.dir.join("pose").join(frame_file(index, "txt"));
        if !path.is_file() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::corrupt(&path, e))?;
        Pose::parse(&text)
            .map(Some)
            .ok_or_else(|| Error::corrupt(&path, "pose file must hold 16 numbers"))
    }

    pub fn point_cloud(&self, index: usize) -> Result<Option<Vec<u8>>> {
        self.check_index(index)?;
        let path = self.dir.join("pc").join(frame_file(index, "bin"));
        if !path.is_file() {
            return Ok(None);
        }
        fs::read(&path).map(Some).map_err(|e| Error::corrupt(&path, e))
    }

    pub fn frame(&self, index: usize) -> Result<FrameRecord> {
        Ok(FrameRecord {
            index,
            timestamp_us: self.manifest.timestamps_us[index],
            pv: self.pv(index)?,
            depth: self.depth(index)?,
            pose: self.pose(index)?,
            point_cloud: self.point_cloud(index)?,
        })
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.dir.join("ann")
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.runs_dir().join(run_id)
    }

    pub fn report_path(&self, run_id: &str) -> PathBuf {
        self.dir.join("reports").join(format!("{run_id}.toml"))
    }

    /// Ids of stored annotation runs, sorted.
    pub fn runs(&self) -> Vec<String> {
        let mut out: Vec<String> = fs::read_dir(self.runs_dir())
            .map(|entries| {
                entries
                    .flatten()
                    .filter(|e| e.path().join(annotation::RUN_MANIFEST).is_file())
                    .filter_map(|e| e.file_name().into_string().ok())
                    .collect()
            })
            .unwrap_or_default();
        out.sort();
        out
    }

    /// Next free id of the form `run-NNNN`.
    pub fn next_run_id(&self) -> String {
        let mut n = 1;
        loop {
            let id = format!("run-{n:04}");
            if !self.run_dir(&id).exists() {
                return id;
            }
            n += 1;
        }
    }

    /// Writes an annotation run. Runs are immutable: an existing run id is rejected.
    pub fn save_annotations(&self, run_id: &str, annotations: &AnnotationSet) -> Result<PathBuf> {
        validate_session_id(run_id)?;
        if annotations.session_id != self.id() {
            return Err(Error::InvalidInput(format!(
                "annotations belong to session `{}`",
                annotations.session_id
            )));
        }
        annotations.check_against(self.resolution(), self.frame_count())?;
        let runs = self.runs_dir();
        fs::create_dir_all(&runs).map_err(|e| Error::storage(&runs, e))?;
        let dir = self.run_dir(run_id);
        if let Err(e) = fs::create_dir(&dir) {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                return Err(Error::InvalidInput(format!("run `{run_id}` already exists")));
            }
            return Err(Error::storage(&dir, e));
        }
        annotations.save(&dir)?;
        Ok(dir)
    }

    pub fn load_annotations(&self, run_id: &str) -> Result<AnnotationSet> {
        let dir = self.run_dir(run_id);
        if !dir.join(annotation::RUN_MANIFEST).is_file() {
            return Err(Error::InvalidInput(format!("no run `{run_id}` in session `{}`", self.id())));
        }
        let ann = AnnotationSet::load(&dir)?;
        ann.check_against(self.resolution(), self.frame_count())?;
        Ok(ann)
    }
}

fn count_files(dir: &Path, ext: &str) -> Result<usize> {
    let entries = fs::read_dir(dir).map_err(|e| Error::corrupt(dir, e))?;
    Ok(entries
        .flatten()
        .filter(|e| e.path().extension().is_some_and(|x| x == ext))
        .count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn solid(w: u32, h: u32, c: [u8; 3]) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb(c))
    }

    fn store() -> (tempfile::TempDir, SessionStore) {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::new(dir.path().join("store"));
        (dir, store)
    }

    #[test]
    fn create_default_resolution_session() {
        let (_t, store) = store();
        let w = store
            .create_session("s1", DEFAULT_RESOLUTION, CaptureSource::Network)
            .unwrap();
        assert_eq!(w.frame_count(), 0);
        assert_eq!(w.resolution(), Resolution::new(640, 360));
        assert!(w.dir().join(MANIFEST_FILE).is_file());
    }

    #[test]
    fn duplicate_session_rejected() {
        let (_t, store) = store();
        store
            .create_session("s1", Resolution::new(8, 8), CaptureSource::Synthetic)
            .unwrap();
        let err = store
            .create_session("s1", Resolution::new(8, 8), CaptureSource::Synthetic)
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateSession(_)));
    }

    #[test]
    fn bad_ids_and_resolutions_rejected() {
        let (_t, store) = store();
        for id in ["", "..", "a/b"] {
            assert!(store
                .create_session(id, Resolution::new(8, 8), CaptureSource::Import)
                .is_err());
        }
        assert!(store
            .create_session("z", Resolution::new(0, 8), CaptureSource::Import)
            .is_err());
    }

    #[test]
    fn append_checks_order_and_resolution() {
        let (_t, store) = store();
        let mut w = store
            .create_session("s", Resolution::new(8, 8), CaptureSource::Synthetic)
            .unwrap();
        w.append_frame(&FrameRecord::new(0, 0, solid(8, 8, [1, 2, 3]))).unwrap();
        w.append_frame(&FrameRecord::new(1, 10, solid(8, 8, [1, 2, 3]))).unwrap();
        assert_eq!(w.frame_count(), 2);
        let gap = w.append_frame(&FrameRecord::new(3, 20, solid(8, 8, [0; 3])));
        assert!(matches!(gap, Err(Error::OutOfOrderFrame { expected: 2, got: 3 })));
        let small = w.append_frame(&FrameRecord::new(2, 20, solid(4, 4, [0; 3])));
        assert!(matches!(small, Err(Error::ResolutionMismatch { .. })));
        let back = w.append_frame(&FrameRecord::new(2, 5, solid(8, 8, [0; 3])));
        assert!(back.is_err());
    }

    #[test]
    fn resolution_mismatch_on_default_session() {
        let (_t, store) = store();
        let mut w = store
            .create_session("s", DEFAULT_RESOLUTION, CaptureSource::Network)
            .unwrap();
        let err = w
            .append_frame(&FrameRecord::new(0, 0, solid(320, 180, [0; 3])))
            .unwrap_err();
        assert!(matches!(err, Error::ResolutionMismatch { .. }));
    }

    #[test]
    fn seed_bounds() {
        let (_t, store) = store();
        let mut w = store
            .create_session("s", DEFAULT_RESOLUTION, CaptureSource::Network)
            .unwrap();
        // registered at capture start, before any frame
        w.add_seed(SeedPrompt::new(0, 320, 180, SeedOrigin::CaptureCenter)).unwrap();
        w.add_seed(SeedPrompt::new(0, 0, 0, SeedOrigin::CaptureExplicit)).unwrap();
        let err = w
            .add_seed(SeedPrompt::new(0, 640, 360, SeedOrigin::CaptureExplicit))
            .unwrap_err();
        assert!(matches!(err, Error::SeedOutOfBounds { .. }));
        let err = w
            .add_seed(SeedPrompt::new(1, 1, 1, SeedOrigin::CaptureExplicit))
            .unwrap_err();
        assert!(matches!(err, Error::SeedFrameMissing { .. }));
    }

    #[test]
    fn finalize_requires_frames_and_seed() {
        let (_t, store) = store();
        let w = store
            .create_session("a", Resolution::new(8, 8), CaptureSource::Synthetic)
            .unwrap();
        assert!(matches!(w.finalize(), Err(Error::EmptySession)));

        let mut w = store
            .create_session("b", Resolution::new(8, 8), CaptureSource::Synthetic)
            .unwrap();
        w.append_frame(&FrameRecord::new(0, 0, solid(8, 8, [0; 3]))).unwrap();
        assert!(matches!(w.finalize(), Err(Error::MissingSeed)));
    }

    #[test]
    fn finalize_ninety_frames() {
        let (_t, store) = store();
        let mut w = store
            .create_session("s", Resolution::new(8, 8), CaptureSource::Synthetic)
            .unwrap();
        for i in 0..90 {
            w.append_frame(&FrameRecord::new(i, i as u64 * 1000, solid(8, 8, [i as u8, 0, 0])))
                .unwrap();
        }
        w.add_seed(SeedPrompt::new(0, 4, 4, SeedOrigin::CaptureCenter)).unwrap();
        let s = w.finalize().unwrap();
        assert_eq!(s.manifest().frame_count, 90);
        assert_eq!(Session::load(s.dir()).unwrap().frame_count(), 90);
    }

    #[test]
    fn round_trip_preserves_everything() {
        let (_t, store) = store();
        let mut w = store
            .create_session("rt", Resolution::new(5, 3), CaptureSource::Import)
            .unwrap();
        let mut pose = Pose::identity();
        pose.0[3] = 0.1 + 0.2;
        pose.0[7] = -1.0e-300;
        let depth = DepthImage::from_fn(5, 3, |x, y| Luma([(x * 1000 + y * 7 + 60000) as u16]));
        let frame0 = FrameRecord {
            index: 0,
            timestamp_us: 17,
            pv: RgbImage::from_fn(5, 3, |x, y| Rgb([x as u8 * 40, y as u8 * 90, 7])),
            depth: Some(depth),
            pose: Some(pose),
            point_cloud: Some(vec![0, 1, 2, 255, 254]),
        };
        let frame1 = FrameRecord::new(1, 17, solid(5, 3, [9, 9, 9]));
        w.append_frame(&frame0).unwrap();
        w.append_frame(&frame1).unwrap();
        w.add_seed(SeedPrompt::new(1, 4, 2, SeedOrigin::ReviewClick)).unwrap();
        let written = w.manifest().clone();
        let s = w.finalize().unwrap();

        let loaded = Session::load(s.dir()).unwrap();
        assert_eq!(loaded.frame(0).unwrap(), frame0);
        assert_eq!(loaded.frame(1).unwrap(), frame1);
        let m = loaded.manifest();
        assert_eq!(m.session_id, written.session_id);
        assert_eq!(m.resolution, written.resolution);
        assert_eq!(m.created_at, written.created_at);
        assert_eq!(m.seed_prompts, written.seed_prompts);
        assert_eq!(m.timestamps_us, written.timestamps_us);
        assert_eq!(m.capture_source, CaptureSource::Import);
    }

    #[test]
    fn deleted_frame_detected() {
        let (_t, store) = store();
        let mut w = store
            .create_session("s", Resolution::new(8, 8), CaptureSource::Synthetic)
            .unwrap();
        for i in 0..3 {
            w.append_frame(&FrameRecord::new(i, 0, solid(8, 8, [0; 3]))).unwrap();
        }
        w.add_seed(SeedPrompt::new(0, 1, 1, SeedOrigin::CaptureCenter)).unwrap();
        let s = w.finalize().unwrap();
        fs::remove_file(s.pv_path(1)).unwrap();
        assert!(matches!(Session::load(s.dir()), Err(Error::CorruptSession { .. })));
    }

    #[test]
    fn writer_closed_after_finalize_is_unloadable_before() {
        let (_t, store) = store();
        let mut w = store
            .create_session("s", Resolution::new(8, 8), CaptureSource::Synthetic)
            .unwrap();
        w.append_frame(&FrameRecord::new(0, 0, solid(8, 8, [0; 3]))).unwrap();
        assert!(matches!(Session::load(w.dir()), Err(Error::NotFinalized(_))));
        w.add_seed(SeedPrompt::new(0, 1, 1, SeedOrigin::CaptureCenter)).unwrap();
        let s = w.finalize().unwrap();
        assert_eq!(store.list().unwrap().len(), 1);
        assert_eq!(s.next_run_id(), "run-0001");
    }
}
