#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use seedtrack_core::store::load_mask_dir;
use seedtrack_core::Mask;
use std::collections::BTreeMap;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_seedtrack"));
    for var in ["SEEDTRACK_STORE", "SEEDTRACK_PORT", "SEEDTRACK_REVIEW_PORT"] {
        c.env_remove(var);
    }
    c
}

/// Runs the binary; panics with its stderr unless it exits 0.
pub fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "seedtrack {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A server child process, killed on drop.
pub struct Server {
    pub child: Child,
    pub addr: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Starts `seedtrack <args>` and waits for its `listening on ADDR` line.
pub fn serve(args: &[&str]) -> Server {
    serve_with(bin(), args)
}

pub fn serve_with(mut cmd: Command, args: &[&str]) -> Server {
    let mut child = cmd
        .args(args)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .rsplit(' ')
        .next()
        .unwrap()
        .trim_start_matches("http://")
        .to_string();
    assert!(line.contains("listening on"), "unexpected banner `{line}`");
    Server { child, addr }
}

pub fn masks(dir: &Path) -> BTreeMap<usize, Mask> {
    load_mask_dir(dir).unwrap()
}

/// Names of files (non-recursive) whose contents differ between `a` and `b`.
pub fn differing_files(a: &Path, b: &Path) -> Vec<String> {
    let names = |d: &Path| -> Vec<String> {
        let mut v: Vec<String> = std::fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    };
    let (na, nb) = (names(a), names(b));
    if na != nb {
        return vec![format!("file lists differ: {} vs {}", na.len(), nb.len())];
    }
    na.into_iter()
        .filter(|n| std::fs::read(a.join(n)).unwrap() != std::fs::read(b.join(n)).unwrap())
        .collect()
}

pub fn synth(root: &Path, preset: &str, id: &str) -> PathBuf {
    let dir = root.join(id);
    ok(&["synth", "--preset", preset, "--out", p(&dir), "--seed", "0"]);
    dir
}

/// Labels with the default backends; returns the run id.
pub fn label(session: &Path) -> String {
    ok(&["label", "--session", p(session)]).lines().next().unwrap().to_string()
}
