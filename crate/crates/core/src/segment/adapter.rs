//! Out-of-process backend adapter.
//!
//! The peer is a child process speaking one JSON object per line on
//! stdin/stdout. Images and masks are exchanged as PNG file paths inside a
//! scratch directory owned by the adapter.
//!
//! ```text
//! -> {"op":"propose","image":"/tmp/x/img.png","prompt":{"x":320,"y":180}}
//! <- {"masks":["/tmp/x/a.png","/tmp/x/b.png","/tmp/x/c.png"],"scores":[0.9,0.8,0.3]}
//! -> {"op":"init","image":"/tmp/x/img.png","mask":"/tmp/x/init.png"}
//! <- {"masks":[],"scores":[]}
//! -> {"op":"propagate","image":"/tmp/x/img.png"}
//! <- {"masks":["/tmp/x/out.png"],"scores":[0.97]}
//! ```
//!
//! A reply of `{"error":"..."}` is reported as a backend error. No reply
//! within the timeout, or a dead child, is `BackendUnavailable`.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{check_init, check_prompt, MaskProposal, PromptableSegmenter, Tracker, TrackerState, PROPOSAL_COUNT};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::store::SeedPrompt;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AdapterRequest {
    Propose { image: PathBuf, prompt: Point },
    Init { image: PathBuf, mask: PathBuf },
    Propagate { image: PathBuf },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

#[derive(Debug, Default, Deserialize)]
pub struct AdapterResponse {
    #[serde(default)]
    pub masks: Vec<PathBuf>,
    #[serde(default)]
    pub scores: Vec<f64>,
    #[serde(default)]
    pub error: Option<String>,
}

/// A running adapter child process.
pub struct AdapterProcess {
    command: String,
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    scratch: tempfile::TempDir,
    counter: u64,
}

impl std::fmt::Debug for AdapterProcess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdapterProcess")
            .field("command", &self.command)
            .field("timeout", &self.timeout)
            .finish_non_exhaustive()
    }
}

impl AdapterProcess {
    /// Spawns `command` through `sh -c`.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self> {
        let unavailable = |e: std::io::Error| Error::BackendUnavailable(format!("{command}: {e}"));
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(unavailable)?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let scratch = tempfile::tempdir().map_err(unavailable)?;
        Ok(AdapterProcess {
            command: command.to_string(),
            child,
            stdin,
            lines: rx,
            timeout,
            scratch,
            counter: 0,
        })
    }

    fn scratch_path(&mut self, stem: &str) -> PathBuf {
        self.counter += 1;
        self.scratch.path().join(format!("{stem}-{:06}.png", self.counter))
    }

    fn write_image(&mut self, image: &RgbImage) -> Result<PathBuf> {
        let path = self.scratch_path("image");
        image
            .save_with_format(&path, image::ImageFormat::Png)
            .map_err(|e| Error::storage(&path, e))?;
        Ok(path)
    }

    fn write_mask(&mut self, mask: &Mask) -> Result<PathBuf> {
        let path = self.scratch_path("mask");
        mask.save_png(&path)?;
        Ok(path)
    }

    pub fn request(&mut self, req: &AdapterRequest) -> Result<AdapterResponse> {
        let mut line = serde_json::to_string(req).map_err(|e| Error::Backend(e.to_string()))?;
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::BackendUnavailable(format!("{}: {e}", self.command)))?;
        let reply = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(l)) => l,
            Ok(Err(e)) => return Err(Error::BackendUnavailable(e.to_string())),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::BackendUnavailable(format!(
                    "no reply from `{}` within {:?}",
                    self.command, self.timeout
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::BackendUnavailable(format!("`{}` exited", self.command)))
            }
        };
        let resp: AdapterResponse = serde_json::from_str(&reply)
            .map_err(|e| Error::Backend(format!("malformed reply `{reply}`: {e}")))?;
        if let Some(err) = resp.error {
            return Err(Error::Backend(err));
        }
        Ok(resp)
    }
}

impl Drop for AdapterProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub type SharedAdapter = Arc<Mutex<AdapterProcess>>;

fn lock(p: &SharedAdapter) -> std::sync::MutexGuard<'_, AdapterProcess> {
    p.lock().unwrap_or_else(|e| e.into_inner())
}

fn read_mask(path: &Path, expected: (u32, u32)) -> Result<Mask> {
    let m = Mask::load_png(path).map_err(|e| Error::Backend(e.to_string()))?;
    if m.dimensions() != expected {
        return Err(Error::ResolutionMismatch {
            expected,
            got: m.dimensions(),
        });
    }
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct AdapterSegmenter {
    process: SharedAdapter,
}

impl AdapterSegmenter {
    pub fn new(process: SharedAdapter) -> Self {
        AdapterSegmenter { process }
    }
}

impl PromptableSegmenter for AdapterSegmenter {
    fn name(&self) -> &str {
        "adapter"
    }

    fn propose(
        &mut self,
        image: &RgbImage,
        prompt: &SeedPrompt,
    ) -> Result<[MaskProposal; PROPOSAL_COUNT]> {
        check_prompt(image, prompt)?;
        let mut p = lock(&self.process);
        let path = p.write_image(image)?;
        let resp = p.request(&AdapterRequest::Propose {
            image: path,
            prompt: Point {
                x: prompt.x,
                y: prompt.y,
            },
        })?;
        if resp.masks.len() != PROPOSAL_COUNT || resp.scores.len() != PROPOSAL_COUNT {
            return Err(Error::Backend(format!(
                "expected {PROPOSAL_COUNT} masks and scores, got {} and {}",
                resp.masks.len(),
                resp.scores.len()
            )));
        }
        let mut out = Vec::with_capacity(PROPOSAL_COUNT);
        for (path, score) in resp.masks.iter().zip(&resp.scores) {
            let mask = read_mask(path, image.dimensions())?;
            if !mask.is_empty() && !mask.get(prompt.x, prompt.y) {
                return Err(Error::Backend(format!(
                    "proposal {} does not contain the prompt pixel",
                    path.display()
                )));
            }
            out.push(MaskProposal::new(mask, *score));
        }
        Ok(out.try_into().expect("length checked"))
    }
}

#[derive(Debug, Clone)]
pub struct AdapterTracker {
    process: SharedAdapter,
}

impl AdapterTracker {
    pub fn new(process: SharedAdapter) -> Self {
        AdapterTracker { process }
    }
}

impl Tracker for AdapterTracker {
    fn name(&self) -> &str {
        "adapter"
    }

    fn initialize(&mut self, image: &RgbImage, mask: &Mask, frame_index: usize) -> Result<TrackerState> {
        check_init(image, mask)?;
        let mut p = lock(&self.process);
        let image_path = p.write_image(image)?;
        let mask_path = p.write_mask(mask)?;
        p.request(&AdapterRequest::Init {
            image: image_path,
            mask: mask_path,
        })?;
        Ok(TrackerState {
            last_mask: mask.clone(),
            frame_cursor: frame_index,
            opaque: None,
        })
    }

    fn propagate(&mut self, mut state: TrackerState, image: &RgbImage) -> Result<(TrackerState, Mask)> {
        if state.last_mask.dimensions() != image.dimensions() {
            return Err(Error::ResolutionMismatch {
                expected: state.last_mask.dimensions(),
                got: image.dimensions(),
            });
        }
        let mut p = lock(&self.process);
        let path = p.write_image(image)?;
        let resp = p.request(&AdapterRequest::Propagate { image: path })?;
        let [mask_path] = resp.masks.as_slice() else {
            return Err(Error::Backend(format!(
                "propagate must return one mask, got {}",
                resp.masks.len()
            )));
        };
        let mask = read_mask(mask_path, image.dimensions())?;
        if !mask.is_empty() {
            state.last_mask = mask.clone();
        }
        state.frame_cursor += 1;
        Ok((state, mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::SeedOrigin;

    fn python_available() -> bool {
        Command::new("python3").arg("--version").output().is_ok()
    }

    /// Script that answers every request with the masks in `dir`.
    fn fake_adapter(dir: &Path) -> String {
        let script = dir.join("adapter.py");
        std::fs::write(
            &script,
            format!(
                r#"import json, sys
d = {dir:?}
for line in sys.stdin:
    req = json.loads(line)
    if req["op"] == "propose":
        out = {{"masks": [d + "/p0.png", d + "/p1.png", d + "/p2.png"], "scores": [0.2, 0.8, 0.8]}}
    elif req["op"] == "init":
        out = {{"masks": [], "scores": []}}
    elif req["op"] == "propagate":
        out = {{"masks": [d + "/p1.png"], "scores": [0.9]}}
    else:
        out = {{"error": "bad op"}}
    print(json.dumps(out), flush=True)
"#,
                dir = dir.to_str().unwrap()
            ),
        )
        .unwrap();
        format!("python3 {}", script.display())
    }

    #[test]
    fn round_trip_through_child_process() {
        if !python_available() {
            eprintln!("python3 missing; skipping adapter exchange test");
            return;
        }
        let dir = tempfile::tempdir().unwrap();
        let small = Mask::from_fn(8, 8, |x, y| x < 3 && y < 3);
        let big = Mask::from_fn(8, 8, |x, y| x < 5 && y < 5);
        small.save_png(&dir.path().join("p0.png")).unwrap();
        big.save_png(&dir.path().join("p1.png")).unwrap();
        Mask::empty(8, 8).save_png(&dir.path().join("p2.png")).unwrap();

        let proc = Arc::new(Mutex::new(
            AdapterProcess::spawn(&fake_adapter(dir.path()), Duration::from_secs(20)).unwrap(),
        ));
        let mut seg = AdapterSegmenter::new(proc.clone());
        let img = RgbImage::new(8, 8);
        let props = seg
            .propose(&img, &SeedPrompt::new(0, 1, 1, SeedOrigin::CaptureCenter))
            .unwrap();
        assert_eq!(props[0].mask, small);
        // the empty proposal's score is forced to zero
        assert_eq!(props.clone().map(|p| p.score), [0.2, 0.8, 0.0]);
        assert_eq!(super::super::best_index(&props).unwrap(), 1);

        let mut tracker = AdapterTracker::new(proc);
        let state = tracker.initialize(&img, &small, 0).unwrap();
        let (state, m) = tracker.propagate(state, &img).unwrap();
        assert_eq!(m, big);
        assert_eq!(state.frame_cursor, 1);
    }

    #[test]
    fn silent_peer_times_out() {
        let mut p = AdapterProcess::spawn("sleep 30", Duration::from_millis(300)).unwrap();
        let err = p
            .request(&AdapterRequest::Propagate {
                image: "/nonexistent.png".into(),
            })
            .unwrap_err();
        assert!(matches!(err, Error::BackendUnavailable(_)), "{err:?}");
    }

    #[test]
    fn exited_peer_is_unavailable() {
        let mut p = AdapterProcess::spawn("true", Duration::from_secs(5)).unwrap();
        std::thread::sleep(Duration::from_millis(100));
        let err = p
            .request(&AdapterRequest::Propagate {
                image: "/nonexistent.png".into(),
            })
            .unwrap_err();
        assert!(matches!(err, Error::BackendUnavailable(_)), "{err:?}");
    }

    #[test]
    fn request_wire_shape() {
        let req = AdapterRequest::Propose {
            image: "/a.png".into(),
            prompt: Point { x: 3, y: 4 },
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"op":"propose","image":"/a.png","prompt":{"x":3,"y":4}}"#
        );
    }
}
