//! The binary against direct library calls, plus exit codes and environment.

mod common;

use std::io::{Read, Write};
use std::net::TcpStream;

use seedtrack_core::eval::{concordance_report, mean_dice, rle, RaterSet};
use seedtrack_core::{label_session, BackendRegistry, LabelRunConfig, Session};

use common::{bin, differing_files, label, masks, ok, p, run, serve, synth};

fn assert_fails(out: &std::process::Output, code: i32, class: &str) {
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(code), "stderr: {stderr}");
    assert!(
        stderr.lines().any(|l| l.starts_with(&format!("error: {class}: "))),
        "stderr: {stderr}"
    );
}

#[test]
fn label_writes_what_the_library_writes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = synth(tmp.path(), "moving-disc", "s");
    let id = label(&dir);
    assert_eq!(id, "run-0001");
    assert!(dir.join("reports/run-0001.toml").is_file());

    let session = Session::load(&dir).unwrap();
    let config = LabelRunConfig::default();
    let mut b = BackendRegistry::with_defaults()
        .build(&config.segmenter, &config.tracker)
        .unwrap();
    label_session(&session, &config, &mut b)
        .unwrap()
        .save(&session, "lib")
        .unwrap();
    assert!(differing_files(&dir.join("ann/run-0001"), &dir.join("ann/lib")).is_empty());
}

#[test]
fn eval_output_matches_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = synth(tmp.path(), "moving-disc", "s");
    let id = label(&dir);
    let run_dir = dir.join("ann").join(&id);
    let truth = dir.join("truth/object-00");

    let out = ok(&["eval", "dice", "--run", p(&run_dir), "--reference", p(&truth), "--frames", "5,10,20"]);
    let want = mean_dice(&id, &masks(&run_dir), &masks(&truth), &[5, 10, 20]).unwrap();
    assert_eq!(out, want.to_text());
    assert!(want.summary().mean >= 0.95);

    // the truth twice as raters: the second copy gets a distinct name
    let out = ok(&[
        "eval", "concordance", "--reference", p(&truth), "--raters", p(&truth), p(&run_dir),
        "--run", p(&run_dir), "--frames", "all",
    ]);
    let mut set = std::collections::BTreeMap::new();
    set.insert("object-00".to_string(), masks(&truth));
    set.insert(id.clone(), masks(&run_dir));
    let raters = RaterSet::new("object-00", set).unwrap();
    let frames: Vec<usize> = (0..90).collect();
    let want = concordance_report(&raters, &masks(&run_dir), &id, &frames).unwrap();
    assert_eq!(out, want.to_text());
}

#[test]
fn frame_selection_outside_the_reference_is_invalid() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = synth(tmp.path(), "moving-disc", "s");
    let id = label(&dir);
    let out = run(&[
        "eval", "dice", "--run", p(&dir.join("ann").join(&id)),
        "--reference", p(&dir.join("truth/object-00")), "--frames", "200",
    ]);
    assert_fails(&out, 30, "InvalidInput");
}

#[test]
fn mismatched_resolution_exits_with_its_class() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = synth(tmp.path(), "moving-disc", "s");
    let id = label(&dir);
    let reference = tmp.path().join("small");
    std::fs::create_dir(&reference).unwrap();
    image::GrayImage::new(10, 10).save(reference.join("000000.png")).unwrap();
    let out = run(&[
        "eval", "dice", "--run", p(&dir.join("ann").join(&id)), "--reference", p(&reference),
    ]);
    assert_fails(&out, 13, "ResolutionMismatch");
    assert!(out.stdout.is_empty());
}

#[test]
fn exports_match_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = synth(tmp.path(), "two-blob", "s");
    let id = label(&dir);
    let session = Session::load(&dir).unwrap();
    let ann = session.load_annotations(&id).unwrap();

    let rle_out = tmp.path().join("masks.rle");
    ok(&["export", "rle", "--session", p(&dir), "--run", &id, "--out", p(&rle_out)]);
    let mut want = Vec::new();
    rle::write(&ann, &mut want).unwrap();
    assert_eq!(std::fs::read(&rle_out).unwrap(), want);

    let video = tmp.path().join("v.y4m");
    let out = ok(&["export", "video", "--session", p(&dir), "--run", &id, "--out", p(&video)]);
    assert!(out.contains("at 30 fps"), "{out}");
    let lib = tmp.path().join("lib.y4m");
    session.export_video(&lib, 30.0, Some(&ann)).unwrap();
    assert_eq!(std::fs::read(&video).unwrap(), std::fs::read(&lib).unwrap());

    let out = run(&["export", "rle", "--session", p(&dir), "--out", p(&rle_out)]);
    assert_fails(&out, 30, "InvalidInput");
}

#[test]
fn reseed_from_the_command_line() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = synth(tmp.path(), "two-blob", "s");
    let first = label(&dir);
    let out = ok(&[
        "reseed", "--session", p(&dir), "--run", &first, "--frame", "0", "--point", "320,180",
        "--run-id", "fixed",
    ]);
    assert_eq!(out.lines().next(), Some("fixed"));
    let ann = Session::load(&dir).unwrap().load_annotations("fixed").unwrap();
    assert_eq!(ann.seed_history.len(), 2);

    let out = run(&[
        "reseed", "--session", p(&dir), "--run", &first, "--frame", "0", "--point", "900,10",
    ]);
    assert_fails(&out, 15, "SeedOutOfBounds");
    let out = run(&["reseed", "--session", p(&dir), "--run", &first, "--frame", "0", "--point", "9"]);
    assert_fails(&out, 30, "InvalidInput");
}

#[test]
fn backend_and_session_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = synth(tmp.path(), "moving-disc", "s");
    let out = run(&["label", "--session", p(&dir), "--segmenter", "sam"]);
    assert_fails(&out, 27, "UnknownBackend");
    let out = run(&["label", "--session", p(&dir), "--tracker-param", "noequals"]);
    assert_fails(&out, 28, "InvalidConfig");
    let out = run(&["label", "--session", p(&tmp.path().join("missing"))]);
    assert_fails(&out, 19, "CorruptSession");
    let out = run(&["synth", "--preset", "spiral", "--out", p(&tmp.path().join("x"))]);
    assert_fails(&out, 29, "SpecError");
    let out = run(&["synth", "--preset", "moving-disc", "--out", p(&dir)]);
    assert_fails(&out, 10, "DuplicateSession");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["label"]).status.code(), Some(2));
    assert_eq!(run(&["synth", "--out", "x"]).status.code(), Some(2));
    let both = ["synth", "--preset", "two-blob", "--spec", "s.toml", "--out", "x"];
    assert_eq!(run(&both).status.code(), Some(2));
    assert_eq!(run(&["export", "gif", "--session", "s", "--out", "o"]).status.code(), Some(2));
}

fn http_get(addr: &str, path: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut body = String::new();
    s.read_to_string(&mut body).unwrap();
    body
}

#[test]
fn review_serve_reads_the_store_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "moving-disc", "envsession");
    let mut cmd = bin();
    cmd.env("SEEDTRACK_STORE", tmp.path());
    let server = common::serve_with(cmd, &["review", "serve", "--bind", "127.0.0.1:0"]);
    let resp = http_get(&server.addr, "/sessions");
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"envsession\""), "{resp}");
    let resp = http_get(&server.addr, "/sessions/nope/frames/0");
    assert!(resp.starts_with("HTTP/1.1 404"), "{resp}");
}

#[test]
fn bad_port_variables_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .env("SEEDTRACK_REVIEW_PORT", "http")
        .args(["review", "serve", "--store", p(tmp.path())])
        .output()
        .unwrap();
    assert_fails(&out, 30, "InvalidInput");
    let out = bin()
        .env("SEEDTRACK_PORT", "99999")
        .args(["capture", "serve", "--store", p(tmp.path())])
        .output()
        .unwrap();
    assert_fails(&out, 30, "InvalidInput");
}

fn closed_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn replay_uses_the_port_variable() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = synth(tmp.path(), "moving-disc", "s");
    let out = bin()
        .env("SEEDTRACK_PORT", closed_port().to_string())
        .args(["capture", "replay", "--session", p(&dir)])
        .output()
        .unwrap();
    assert_fails(&out, 31, "NetworkError");
}

#[test]
fn replay_into_a_served_store() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = synth(tmp.path(), "moving-disc", "s");
    let dst = tmp.path().join("received");
    let server = serve(&["capture", "serve", "--bind", "127.0.0.1:0", "--store", p(&dst)]);
    let replay = |id: &str| {
        run(&[
            "capture", "replay", "--session", p(&dir), "--target", &server.addr, "--fps", "1000",
            "--id", id,
        ])
    };
    let out = replay("copy");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(differing_files(&dir.join("pv"), &dst.join("copy/pv")).is_empty());
    assert!(!dst.join("copy/depth").exists());
    let copy = Session::load(dst.join("copy")).unwrap();
    assert_eq!(copy.seeds(), Session::load(&dir).unwrap().seeds());
    // the id is taken now
    assert_fails(&replay("copy"), 33, "ProtocolError");
    assert!(copy.runs().is_empty());
}
