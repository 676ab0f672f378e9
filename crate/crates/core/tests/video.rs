//! Exported video checked with a standalone YUV4MPEG2 reader.

use std::collections::HashMap;

use seedtrack_core::synth::{generate, SceneSpec};
use seedtrack_core::{BackendRegistry, LabelRunConfig, SessionStore};

struct Y4m {
    width: usize,
    height: usize,
    fps: (u64, u64),
    frames: Vec<Vec<u8>>,
}

fn parse_y4m(bytes: &[u8]) -> Y4m {
    let nl = bytes.iter().position(|&b| b == b'\n').expect("header line");
    let header = std::str::from_utf8(&bytes[..nl]).unwrap();
    let mut fields = header.split(' ');
    assert_eq!(fields.next(), Some("YUV4MPEG2"));
    let tags: HashMap<char, &str> = fields.map(|f| (f.chars().next().unwrap(), &f[1..])).collect();
    assert_eq!(tags[&'C'], "444");
    let width: usize = tags[&'W'].parse().unwrap();
    let height: usize = tags[&'H'].parse().unwrap();
    let (n, d) = tags[&'F'].split_once(':').unwrap();
    let fps = (n.parse().unwrap(), d.parse().unwrap());

    let size = width * height * 3;
    let mut frames = Vec::new();
    let mut pos = nl + 1;
    while pos < bytes.len() {
        let end = pos + bytes[pos..].iter().position(|&b| b == b'\n').unwrap();
        assert!(bytes[pos..end].starts_with(b"FRAME"));
        pos = end + 1;
        frames.push(bytes[pos..pos + size].to_vec());
        pos += size;
    }
    assert_eq!(pos, bytes.len());
    Y4m {
        width,
        height,
        fps,
        frames,
    }
}

fn duration_s(v: &Y4m) -> f64 {
    v.frames.len() as f64 * v.fps.1 as f64 / v.fps.0 as f64
}

#[test]
fn ninety_frames_at_five_fps_last_eighteen_seconds() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = SceneSpec::moving_disc();
    spec.width = 64;
    spec.height = 36;
    spec.objects[0].shape = seedtrack_core::synth::Shape::Disc { radius: 6 };
    spec.objects[0].start = [10, 18];
    spec.objects[0].velocity = [0, 0];
    let (s, _) = generate(&spec, 0, &SessionStore::new(tmp.path()), "v").unwrap();
    let out = tmp.path().join("v.y4m");
    s.export_video(&out, 5.0, None).unwrap();
    let v = parse_y4m(&std::fs::read(&out).unwrap());
    assert_eq!((v.width, v.height), (64, 36));
    assert_eq!(v.frames.len(), 90);
    assert!((duration_s(&v) - 18.0).abs() < 1e-9);
    // luma of a background pixel differs from the object's
    let y = |f: &Vec<u8>, x: usize, yy: usize| f[yy * 64 + x];
    assert_ne!(y(&v.frames[0], 10, 18), y(&v.frames[0], 50, 5));
}

#[test]
fn overlay_changes_exactly_the_masked_pixels() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = SceneSpec::moving_disc();
    spec.width = 80;
    spec.height = 48;
    spec.frame_count = 6;
    spec.objects[0].shape = seedtrack_core::synth::Shape::Disc { radius: 8 };
    spec.objects[0].start = [20, 24];
    let (s, _) = generate(&spec, 0, &SessionStore::new(tmp.path()), "v").unwrap();
    let config = LabelRunConfig::default();
    let mut b = BackendRegistry::with_defaults()
        .build(&config.segmenter, &config.tracker)
        .unwrap();
    let ann = seedtrack_core::label_session(&s, &config, &mut b).unwrap().annotations;

    let plain = tmp.path().join("plain.y4m");
    let over = tmp.path().join("over.y4m");
    s.export_video(&plain, 30.0, None).unwrap();
    s.export_video(&over, 30.0, Some(&ann)).unwrap();
    let a = parse_y4m(&std::fs::read(&plain).unwrap());
    let b = parse_y4m(&std::fs::read(&over).unwrap());
    let plane = 80 * 48;
    for (k, (fa, fb)) in a.frames.iter().zip(&b.frames).enumerate() {
        for i in 0..plane {
            let (x, y) = ((i % 80) as u32, (i / 80) as u32);
            let changed = (0..3).any(|c| fa[c * plane + i] != fb[c * plane + i]);
            assert_eq!(changed, ann.masks[k].get(x, y), "frame {k} pixel ({x}, {y})");
        }
    }
}

#[test]
fn bad_frame_rate_and_unwritable_target() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = SceneSpec::moving_disc();
    spec.frame_count = 1;
    let (s, _) = generate(&spec, 0, &SessionStore::new(tmp.path()), "v").unwrap();
    let err = s.export_video(&tmp.path().join("x.y4m"), 0.0, None).unwrap_err();
    assert_eq!(err.class(), "InvalidInput");
    let err = s.export_video(tmp.path(), 30.0, None).unwrap_err();
    assert_eq!(err.class(), "ExportError");
}
