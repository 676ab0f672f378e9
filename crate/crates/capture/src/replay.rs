//! Device simulator: streams a stored session to a capture server.

use std::io::{BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use seedtrack_core::store::{SeedOrigin, Session};

use crate::protocol::{Channel, Codec, Message, StreamFrame};
use crate::CaptureError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub session_id: String,
    pub frames_sent: usize,
    pub acked: bool,
    /// Set when the exchange broke off after connecting.
    pub error: Option<String>,
}

impl ReplayReport {
    pub fn is_ok(&self) -> bool {
        self.acked && self.error.is_none()
    }
}

fn start_message(session: &Session) -> Message {
    match session.seeds().first() {
        Some(s) if s.origin != SeedOrigin::CaptureCenter => Message::Start {
            seed_x: s.x as i32,
            seed_y: s.y as i32,
        },
        _ => Message::start_center(),
    }
}

fn dims(session: &Session) -> Result<(u16, u16), CaptureError> {
    let res = session.resolution();
    let w = u16::try_from(res.width).map_err(|_| CaptureError::Protocol("width exceeds u16".into()))?;
    let h = u16::try_from(res.height).map_err(|_| CaptureError::Protocol("height exceeds u16".into()))?;
    Ok((w, h))
}

/// Re-streams every frame of `session` at `rate_fps`. The first seed is
/// sent in START (the centre sentinel when it was a centre seed).
///
/// Connection failures are errors; failures after connecting yield a report
/// with `error` set.
pub fn replay(
    session: &Session,
    target: impl ToSocketAddrs,
    rate_fps: f64,
    session_id: Option<&str>,
) -> Result<ReplayReport, CaptureError> {
    if !(rate_fps.is_finite() && rate_fps > 0.0) {
        return Err(CaptureError::Protocol(format!("fps must be positive, got {rate_fps}")));
    }
    let (w, h) = dims(session)?;
    let stream = TcpStream::connect(target).map_err(|e| CaptureError::Network(e.to_string()))?;
    stream.set_nodelay(true).ok();
    let mut report = ReplayReport {
        session_id: session_id.unwrap_or(session.id()).to_string(),
        frames_sent: 0,
        acked: false,
        error: None,
    };
    if let Err(e) = stream_session(session, &stream, rate_fps, (w, h), &mut report) {
        report.error = Some(server_error(&stream).unwrap_or(e));
    }
    Ok(report)
}

/// A write can fail because the server already rejected the stream; fetch
/// its ERROR detail if one is pending.
fn server_error(stream: &TcpStream) -> Option<String> {
    stream.set_read_timeout(Some(Duration::from_secs(1))).ok()?;
    let mut reader = BufReader::new(stream);
    loop {
        match Codec::default().read(&mut reader) {
            Ok(Some(Message::Error { detail })) => return Some(format!("server error: {detail}")),
            Ok(Some(_)) => continue,
            _ => return None,
        }
    }
}

fn expect_ack(codec: &Codec, reader: &mut impl std::io::Read, after: &str) -> Result<(), String> {
    match codec.read(reader) {
        Ok(Some(Message::Ack)) => Ok(()),
        Ok(Some(Message::Error { detail })) => Err(format!("server rejected {after}: {detail}")),
        Ok(Some(m)) => Err(format!("unexpected {:?} after {after}", m.kind())),
        Ok(None) => Err(format!("server closed the connection after {after}")),
        Err(e) => Err(e.to_string()),
    }
}

fn stream_session(
    session: &Session,
    stream: &TcpStream,
    fps: f64,
    (w, h): (u16, u16),
    report: &mut ReplayReport,
) -> Result<(), String> {
    let codec = Codec::default();
    let mut reader = BufReader::new(stream);
    let mut writer = BufWriter::with_capacity(1 << 20, stream);
    let send = |writer: &mut BufWriter<&TcpStream>, m: &Message| {
        codec.write(writer, m).map_err(|e| e.to_string())
    };

    send(&mut writer, &Message::Hello {
        session_id: report.session_id.clone(),
    })?;
    expect_ack(&codec, &mut reader, "HELLO")?;
    send(&mut writer, &start_message(session))?;
    expect_ack(&codec, &mut reader, "START")?;

    let clock = Instant::now();
    let period = Duration::from_secs_f64(1.0 / fps);
    for i in 0..session.frame_count() {
        let due = period * i as u32;
        if let Some(wait) = due.checked_sub(clock.elapsed()) {
            std::thread::sleep(wait);
        }
        let rec = session.frame(i).map_err(|e| e.to_string())?;
        let frame = |channel, width, height, payload| {
            Message::Frame(StreamFrame {
                index: i as u64,
                timestamp_us: rec.timestamp_us,
                channel,
                width,
                height,
                payload,
            })
        };
        send(&mut writer, &frame(Channel::Pv, w, h, rec.pv.as_raw().clone()))?;
        if let Some(depth) = &rec.depth {
            let bytes = depth.as_raw().iter().flat_map(|v| v.to_le_bytes()).collect();
            send(&mut writer, &frame(Channel::Depth, w, h, bytes))?;
        }
        if let Some(pose) = rec.pose {
            let bytes = pose.0.iter().flat_map(|v| v.to_le_bytes()).collect();
            send(&mut writer, &frame(Channel::Pose, 0, 0, bytes))?;
        }
        report.frames_sent += 1;
    }
    send(&mut writer, &Message::Stop)?;
    expect_ack(&codec, &mut reader, "STOP")?;
    report.acked = true;
    Ok(())
}
