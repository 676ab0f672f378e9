//! Recording server: one session per connection.
//!
//! Per-connection state machine:
//!
//! ```text
//! AwaitHello --HELLO--> Ready --START--> Recording --FRAME*--> --STOP--> finalized, ACK
//! ```
//!
//! The session directory is created on the first PV frame (its size fixes
//! the resolution) and removed again if the exchange fails before STOP.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use image::RgbImage;
use log::{debug, info, warn};
use seedtrack_core::store::{
    validate_session_id, CaptureSource, DepthImage, FrameRecord, Pose, Resolution, SeedOrigin,
    SeedPrompt, SessionStore, SessionWriter,
};

use crate::protocol::{Channel, Codec, Message, ReadError, StreamFrame, CENTER_SENTINEL};

pub const DEFAULT_PORT: u16 = 38400;

/// What happened on one client connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectionOutcome {
    pub peer: Option<SocketAddr>,
    pub session_id: Option<String>,
    /// Frame count of the finalized session, or the error sent to the client.
    pub result: Result<usize, String>,
}

pub struct CaptureServer {
    listener: TcpListener,
    store: SessionStore,
    codec: Codec,
}

impl CaptureServer {
    pub fn bind(addr: impl ToSocketAddrs, store_root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let store = SessionStore::new(store_root);
        std::fs::create_dir_all(store.root())?;
        Ok(CaptureServer {
            listener: TcpListener::bind(addr)?,
            store,
            codec: Codec::default(),
        })
    }

    pub fn with_codec(mut self, codec: Codec) -> Self {
        self.codec = codec;
        self
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> std::io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let outcomes = Arc::new(Mutex::new(Vec::new()));
        let (stop2, outcomes2) = (stop.clone(), outcomes.clone());
        let thread = std::thread::spawn(move || self.accept_loop(&stop2, &outcomes2));
        Ok(ServerHandle {
            addr,
            stop,
            outcomes,
            thread: Some(thread),
        })
    }

    /// Runs the accept loop on the calling thread until the process exits.
    pub fn run(self) {
        let stop = AtomicBool::new(false);
        let outcomes = Arc::new(Mutex::new(Vec::new()));
        self.accept_loop(&stop, &outcomes);
    }

    fn accept_loop(self, stop: &AtomicBool, outcomes: &Arc<Mutex<Vec<ConnectionOutcome>>>) {
        let mut workers = Vec::new();
        for conn in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    warn!("accept failed: {e}");
                    continue;
                }
            };
            let store = self.store.clone();
            let codec = self.codec;
            let outcomes = outcomes.clone();
            workers.push(std::thread::spawn(move || {
                let outcome = Connection::new(store, codec).serve(stream);
                match &outcome.result {
                    Ok(n) => info!("session {:?} finalized with {n} frames", outcome.session_id),
                    Err(e) => warn!("connection from {:?} failed: {e}", outcome.peer),
                }
                outcomes.lock().unwrap_or_else(|e| e.into_inner()).push(outcome);
            }));
            workers.retain(|w| !w.is_finished());
        }
        for w in workers {
            let _ = w.join();
        }
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    outcomes: Arc<Mutex<Vec<ConnectionOutcome>>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn outcomes(&self) -> Vec<ConnectionOutcome> {
        self.outcomes.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Stops accepting and waits for in-flight connections.
    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

enum State {
    AwaitHello,
    Ready {
        session_id: String,
    },
    Recording {
        session_id: String,
        seed: (i32, i32),
        writer: Option<SessionWriter>,
        pending_depth: BTreeMap<u64, DepthImage>,
        pending_pose: BTreeMap<u64, Pose>,
    },
}

enum Step {
    Continue,
    Reply(Message),
    Finished(usize),
}

struct Connection {
    store: SessionStore,
    codec: Codec,
    state: State,
}

impl Connection {
    fn new(store: SessionStore, codec: Codec) -> Self {
        Connection {
            store,
            codec,
            state: State::AwaitHello,
        }
    }

    fn session_id(&self) -> Option<String> {
        match &self.state {
            State::AwaitHello => None,
            State::Ready { session_id } | State::Recording { session_id, .. } => {
                Some(session_id.clone())
            }
        }
    }

    fn serve(mut self, stream: TcpStream) -> ConnectionOutcome {
        let peer = stream.peer_addr().ok();
        let result = self.exchange(&stream);
        if result.is_err() {
            self.discard();
        }
        ConnectionOutcome {
            peer,
            session_id: self.session_id(),
            result,
        }
    }

    fn exchange(&mut self, stream: &TcpStream) -> Result<usize, String> {
        let mut reader = BufReader::with_capacity(1 << 20, stream);
        let mut writer = BufWriter::new(stream);
        loop {
            let msg = match self.codec.read(&mut reader) {
                Ok(Some(m)) => m,
                Ok(None) => return Err("connection closed before STOP".into()),
                Err(ReadError::Framing(e)) => {
                    let detail = format!("framing: {e}");
                    let _ = self.codec.write(&mut writer, &Message::Error { detail: detail.clone() });
                    return Err(detail);
                }
                Err(ReadError::Io(e)) => return Err(format!("network: {e}")),
            };
            match self.handle(msg) {
                Ok(Step::Continue) => {}
                Ok(Step::Reply(m)) => self.codec.write(&mut writer, &m).map_err(|e| e.to_string())?,
                Ok(Step::Finished(n)) => {
                    self.codec
                        .write(&mut writer, &Message::Ack)
                        .map_err(|e| e.to_string())?;
                    return Ok(n);
                }
                Err(detail) => {
                    let _ = self.codec.write(&mut writer, &Message::Error { detail: detail.clone() });
                    return Err(detail);
                }
            }
        }
    }

    /// Removes a session directory that was never finalized.
    fn discard(&mut self) {
        if let State::Recording {
            writer: Some(w), ..
        } = &self.state
        {
            let dir = w.dir().to_path_buf();
            debug!("removing incomplete session at {}", dir.display());
            let _ = std::fs::remove_dir_all(dir);
        }
    }

    fn handle(&mut self, msg: Message) -> Result<Step, String> {
        match (&mut self.state, msg) {
            (State::AwaitHello, Message::Hello { session_id }) => {
                validate_session_id(&session_id).map_err(|e| e.to_string())?;
                if self.store.session_dir(&session_id).exists() {
                    return Err(format!("session `{session_id}` already exists"));
                }
                self.state = State::Ready { session_id };
                Ok(Step::Reply(Message::Ack))
            }
            (State::Ready { session_id }, Message::Start { seed_x, seed_y }) => {
                if (seed_x, seed_y) != CENTER_SENTINEL && (seed_x < 0 || seed_y < 0) {
                    return Err(format!("seed ({seed_x}, {seed_y}) out of bounds"));
                }
                self.state = State::Recording {
                    session_id: std::mem::take(session_id),
                    seed: (seed_x, seed_y),
                    writer: None,
                    pending_depth: BTreeMap::new(),
                    pending_pose: BTreeMap::new(),
                };
                Ok(Step::Reply(Message::Ack))
            }
            (State::Recording { .. }, Message::Frame(f)) => {
                self.on_frame(f)?;
                Ok(Step::Continue)
            }
            (State::Recording { .. }, Message::Stop) => self.on_stop().map(Step::Finished),
            (_, Message::Frame(_)) => Err("not recording".into()),
            (_, m) => Err(format!("unexpected {:?} message", m.kind())),
        }
    }

    fn on_frame(&mut self, f: StreamFrame) -> Result<(), String> {
        let State::Recording {
            session_id,
            seed,
            writer,
            pending_depth,
            pending_pose,
        } = &mut self.state
        else {
            return Err("not recording".into());
        };
        match f.channel {
            Channel::Pv => {
                let res = Resolution::new(f.width as u32, f.height as u32);
                if writer.is_none() {
                    let mut w = self
                        .store
                        .create_session(session_id, res, CaptureSource::Network)
                        .map_err(|e| e.to_string())?;
                    let prompt = if *seed == CENTER_SENTINEL {
                        let (x, y) = res.center();
                        SeedPrompt::new(0, x, y, SeedOrigin::CaptureCenter)
                    } else {
                        SeedPrompt::new(0, seed.0 as u32, seed.1 as u32, SeedOrigin::CaptureExplicit)
                    };
                    let added = w.add_seed(prompt);
                    // the directory exists now; hand it over for cleanup even on error
                    *writer = Some(w);
                    added.map_err(|e| e.to_string())?;
                }
                let w = writer.as_mut().expect("created above");
                if w.resolution() != res {
                    return Err(format!(
                        "resolution changed from {} to {res} mid-session",
                        w.resolution()
                    ));
                }
                let pv = RgbImage::from_raw(res.width, res.height, f.payload)
                    .ok_or("PV payload size mismatch")?;
                let mut record = FrameRecord::new(f.index as usize, f.timestamp_us, pv);
                record.depth = pending_depth.remove(&f.index);
                record.pose = pending_pose.remove(&f.index);
                w.append_frame(&record).map_err(|e| e.to_string())
            }
            Channel::Depth => {
                let data: Vec<u16> = f
                    .payload
                    .chunks_exact(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]))
                    .collect();
                let depth = DepthImage::from_raw(f.width as u32, f.height as u32, data)
                    .ok_or("DEPTH payload size mismatch")?;
                match writer {
                    Some(w) if (f.index as usize) < w.frame_count() => {
                        w.attach_depth(f.index as usize, &depth).map_err(|e| e.to_string())
                    }
                    _ => {
                        pending_depth.insert(f.index, depth);
                        Ok(())
                    }
                }
            }
            Channel::Pose => {
                let mut m = [0.0; 16];
                for (v, c) in m.iter_mut().zip(f.payload.chunks_exact(8)) {
                    *v = f64::from_le_bytes(c.try_into().unwrap());
                }
                match writer {
                    Some(w) if (f.index as usize) < w.frame_count() => {
                        w.attach_pose(f.index as usize, Pose(m)).map_err(|e| e.to_string())
                    }
                    _ => {
                        pending_pose.insert(f.index, Pose(m));
                        Ok(())
                    }
                }
            }
        }
    }

    fn on_stop(&mut self) -> Result<usize, String> {
        let State::Recording {
            writer,
            pending_depth,
            pending_pose,
            session_id,
            ..
        } = &mut self.state
        else {
            return Err("not recording".into());
        };
        if !pending_depth.is_empty() || !pending_pose.is_empty() {
            warn!(
                "session {session_id}: dropping {} depth and {} pose frames without a PV frame",
                pending_depth.len(),
                pending_pose.len()
            );
        }
        let w = writer.take().ok_or("STOP before any PV frame")?;
        let dir = w.dir().to_path_buf();
        match w.finalize() {
            Ok(s) => Ok(s.frame_count()),
            Err(e) => {
                let _ = std::fs::remove_dir_all(dir);
                Err(e.to_string())
            }
        }
    }
}
