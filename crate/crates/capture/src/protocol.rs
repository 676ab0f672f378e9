//! Framed binary capture protocol.
//!
//! Every message is one frame:
//!
//! ```text
//! offset size
//! 0      4    magic "HOLA" (0x48 0x4F 0x4C 0x41)
//! 4      1    version, 0x01
//! 5      1    message type
//! 6      4    payload length, u32 little-endian
//! 10     n    payload
//! ```
//!
//! Payloads (all integers little-endian):
//!
//! | type | kind   | payload                                                       |
//! |------|--------|---------------------------------------------------------------|
//! | 0x01 | HELLO  | session id, UTF-8                                             |
//! | 0x02 | START  | seed x i32, seed y i32; (-1, -1) means "frame centre"          |
//! | 0x03 | STOP   | empty                                                         |
//! | 0x04 | ACK    | empty                                                         |
//! | 0x05 | ERROR  | detail, UTF-8                                                 |
//! | 0x10 | FRAME  | index u64, timestamp_us u64, channel u8, width u16, height u16, data |
//!
//! Frame channels: 0 = PV (RGB8, w·h·3 bytes), 1 = DEPTH (u16 LE, w·h·2
//! bytes), 2 = POSE (16 × f64 LE, 128 bytes, width = height = 0).

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"HOLA";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 10;
pub const DEFAULT_MAX_PAYLOAD: u32 = 32 * 1024 * 1024;
pub const CENTER_SENTINEL: (i32, i32) = (-1, -1);
pub const POSE_LEN: usize = 128;
const FRAME_HEADER_LEN: usize = 21;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FramingError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("payload length {len} exceeds maximum {max}")]
    TooLong { len: u32, max: u32 },
    #[error("truncated frame: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("malformed payload: {0}")]
    Payload(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    Hello = 0x01,
    Start = 0x02,
    Stop = 0x03,
    Ack = 0x04,
    Error = 0x05,
    Frame = 0x10,
}

impl TryFrom<u8> for MessageType {
    type Error = FramingError;

    fn try_from(b: u8) -> Result<Self, FramingError> {
        Ok(match b {
            0x01 => MessageType::Hello,
            0x02 => MessageType::Start,
            0x03 => MessageType::Stop,
            0x04 => MessageType::Ack,
            0x05 => MessageType::Error,
            0x10 => MessageType::Frame,
            other => return Err(FramingError::UnknownType(other)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Channel {
    Pv = 0,
    Depth = 1,
    Pose = 2,
}

impl TryFrom<u8> for Channel {
    type Error = FramingError;

    fn try_from(b: u8) -> Result<Self, FramingError> {
        match b {
            0 => Ok(Channel::Pv),
            1 => Ok(Channel::Depth),
            2 => Ok(Channel::Pose),
            other => Err(FramingError::Payload(format!("unknown channel {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamFrame {
    pub index: u64,
    pub timestamp_us: u64,
    pub channel: Channel,
    pub width: u16,
    pub height: u16,
    pub payload: Vec<u8>,
}

impl StreamFrame {
    pub fn expected_len(channel: Channel, width: u16, height: u16) -> usize {
        let px = width as usize * height as usize;
        match channel {
            Channel::Pv => px * 3,
            Channel::Depth => px * 2,
            Channel::Pose => POSE_LEN,
        }
    }

    fn validate(&self) -> Result<(), FramingError> {
        if self.channel == Channel::Pose && (self.width, self.height) != (0, 0) {
            return Err(FramingError::Payload("pose frames carry no dimensions".into()));
        }
        let want = Self::expected_len(self.channel, self.width, self.height);
        if self.payload.len() != want {
            return Err(FramingError::Payload(format!(
                "{:?} payload is {} bytes, expected {want}",
                self.channel,
                self.payload.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Hello { session_id: String },
    Start { seed_x: i32, seed_y: i32 },
    Stop,
    Ack,
    Error { detail: String },
    Frame(StreamFrame),
}

impl Message {
    pub fn start_center() -> Message {
        Message::Start {
            seed_x: CENTER_SENTINEL.0,
            seed_y: CENTER_SENTINEL.1,
        }
    }

    pub fn kind(&self) -> MessageType {
        match self {
            Message::Hello { .. } => MessageType::Hello,
            Message::Start { .. } => MessageType::Start,
            Message::Stop => MessageType::Stop,
            Message::Ack => MessageType::Ack,
            Message::Error { .. } => MessageType::Error,
            Message::Frame(_) => MessageType::Frame,
        }
    }

    fn payload(&self) -> Vec<u8> {
        match self {
            Message::Hello { session_id } => session_id.as_bytes().to_vec(),
            Message::Start { seed_x, seed_y } => {
                let mut p = seed_x.to_le_bytes().to_vec();
                p.extend_from_slice(&seed_y.to_le_bytes());
                p
            }
            Message::Stop | Message::Ack => Vec::new(),
            Message::Error { detail } => detail.as_bytes().to_vec(),
            Message::Frame(f) => {
                let mut p = Vec::with_capacity(FRAME_HEADER_LEN + f.payload.len());
                p.extend_from_slice(&f.index.to_le_bytes());
                p.extend_from_slice(&f.timestamp_us.to_le_bytes());
                p.push(f.channel as u8);
                p.extend_from_slice(&f.width.to_le_bytes());
                p.extend_from_slice(&f.height.to_le_bytes());
                p.extend_from_slice(&f.payload);
                p
            }
        }
    }

    fn from_payload(kind: MessageType, p: &[u8]) -> Result<Message, FramingError> {
        let utf8 = |p: &[u8]| {
            String::from_utf8(p.to_vec()).map_err(|_| FramingError::Payload("invalid UTF-8".into()))
        };
        let exact = |n: usize| {
            if p.len() == n {
                Ok(())
            } else {
                Err(FramingError::Payload(format!(
                    "{kind:?} payload is {} bytes, expected {n}",
                    p.len()
                )))
            }
        };
        Ok(match kind {
            MessageType::Hello => Message::Hello {
                session_id: utf8(p)?,
            },
            MessageType::Start => {
                exact(8)?;
                Message::Start {
                    seed_x: i32::from_le_bytes(p[0..4].try_into().unwrap()),
                    seed_y: i32::from_le_bytes(p[4..8].try_into().unwrap()),
                }
            }
            MessageType::Stop => {
                exact(0)?;
                Message::Stop
            }
            MessageType::Ack => {
                exact(0)?;
                Message::Ack
            }
            MessageType::Error => Message::Error { detail: utf8(p)? },
            MessageType::Frame => {
                if p.len() < FRAME_HEADER_LEN {
                    return Err(FramingError::Payload("frame header too short".into()));
                }
                let f = StreamFrame {
                    index: u64::from_le_bytes(p[0..8].try_into().unwrap()),
                    timestamp_us: u64::from_le_bytes(p[8..16].try_into().unwrap()),
                    channel: Channel::try_from(p[16])?,
                    width: u16::from_le_bytes(p[17..19].try_into().unwrap()),
                    height: u16::from_le_bytes(p[19..21].try_into().unwrap()),
                    payload: p[FRAME_HEADER_LEN..].to_vec(),
                };
                f.validate()?;
                Message::Frame(f)
            }
        })
    }
}

/// Encoder/decoder with a configurable payload ceiling.
#[derive(Debug, Clone, Copy)]
pub struct Codec {
    pub max_payload: u32,
}

impl Default for Codec {
    fn default() -> Self {
        Codec {
            max_payload: DEFAULT_MAX_PAYLOAD,
        }
    }
}

struct Header {
    kind: MessageType,
    len: u32,
}

impl Codec {
    pub fn encode(&self, msg: &Message) -> Result<Vec<u8>, FramingError> {
        if let Message::Frame(f) = msg {
            f.validate()?;
        }
        let payload = msg.payload();
        let len = u32::try_from(payload.len()).map_err(|_| FramingError::TooLong {
            len: u32::MAX,
            max: self.max_payload,
        })?;
        if len > self.max_payload {
            return Err(FramingError::TooLong {
                len,
                max: self.max_payload,
            });
        }
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(msg.kind() as u8);
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&payload);
        Ok(out)
    }

    fn header(&self, h: &[u8; HEADER_LEN]) -> Result<Header, FramingError> {
        let magic: [u8; 4] = h[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(FramingError::BadMagic(magic));
        }
        if h[4] != VERSION {
            return Err(FramingError::BadVersion(h[4]));
        }
        let kind = MessageType::try_from(h[5])?;
        let len = u32::from_le_bytes(h[6..10].try_into().unwrap());
        if len > self.max_payload {
            return Err(FramingError::TooLong {
                len,
                max: self.max_payload,
            });
        }
        Ok(Header { kind, len })
    }

    /// Decodes one message from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn decode(&self, bytes: &[u8]) -> Result<(Message, usize), FramingError> {
        if bytes.len() < HEADER_LEN {
            return Err(FramingError::Truncated {
                need: HEADER_LEN,
                have: bytes.len(),
            });
        }
        let h = self.header(bytes[..HEADER_LEN].try_into().unwrap())?;
        let end = HEADER_LEN + h.len as usize;
        if bytes.len() < end {
            return Err(FramingError::Truncated {
                need: end,
                have: bytes.len(),
            });
        }
        let msg = Message::from_payload(h.kind, &bytes[HEADER_LEN..end])?;
        Ok((msg, end))
    }

    /// Reads one message. `Ok(None)` on a clean end of stream before any header byte.
    pub fn read(&self, r: &mut impl Read) -> Result<Option<Message>, ReadError> {
        let mut h = [0u8; HEADER_LEN];
        let mut got = 0;
        while got < HEADER_LEN {
            match r.read(&mut h[got..]) {
                Ok(0) if got == 0 => return Ok(None),
                Ok(0) => {
                    return Err(ReadError::Framing(FramingError::Truncated {
                        need: HEADER_LEN,
                        have: got,
                    }))
                }
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(ReadError::Io(e)),
            }
        }
        let header = self.header(&h)?;
        let mut payload = vec![0u8; header.len as usize];
        r.read_exact(&mut payload).map_err(|e| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                ReadError::Framing(FramingError::Truncated {
                    need: header.len as usize,
                    have: 0,
                })
            } else {
                ReadError::Io(e)
            }
        })?;
        Ok(Some(Message::from_payload(header.kind, &payload)?))
    }

    pub fn write(&self, w: &mut impl Write, msg: &Message) -> Result<(), ReadError> {
        let bytes = self.encode(msg)?;
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error(transparent)]
    Framing(#[from] FramingError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode_message(msg: &Message) -> Result<Vec<u8>, FramingError> {
    Codec::default().encode(msg)
}

pub fn decode_message(bytes: &[u8]) -> Result<Message, FramingError> {
    let (msg, used) = Codec::default().decode(bytes)?;
    if used != bytes.len() {
        return Err(FramingError::Payload(format!(
            "{} trailing bytes after message",
            bytes.len() - used
        )));
    }
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stop_is_ten_bytes() {
        let b = encode_message(&Message::Stop).unwrap();
        assert_eq!(b, [0x48, 0x4F, 0x4C, 0x41, 0x01, 0x03, 0, 0, 0, 0]);
    }

    #[test]
    fn start_layout() {
        let b = encode_message(&Message::Start {
            seed_x: 320,
            seed_y: 180,
        })
        .unwrap();
        assert_eq!(&b[..10], &[0x48, 0x4F, 0x4C, 0x41, 0x01, 0x02, 8, 0, 0, 0]);
        assert_eq!(&b[10..], &[0x40, 0x01, 0, 0, 0xB4, 0, 0, 0]);
        assert_eq!(
            decode_message(&b).unwrap(),
            Message::Start {
                seed_x: 320,
                seed_y: 180
            }
        );
        let c = encode_message(&Message::start_center()).unwrap();
        assert_eq!(&c[10..], &[0xFF; 8]);
    }

    #[test]
    fn zero_magic_rejected() {
        let mut b = encode_message(&Message::Stop).unwrap();
        b[..4].copy_from_slice(&[0, 0, 0, 0]);
        assert_eq!(decode_message(&b), Err(FramingError::BadMagic([0; 4])));
    }

    #[test]
    fn oversized_length_rejected_before_reading_payload() {
        let mut b = encode_message(&Message::Stop).unwrap();
        b[6..10].copy_from_slice(&(DEFAULT_MAX_PAYLOAD + 1).to_le_bytes());
        assert!(matches!(decode_message(&b), Err(FramingError::TooLong { .. })));
        let small = Codec { max_payload: 4 };
        let start = encode_message(&Message::start_center()).unwrap();
        assert!(matches!(small.decode(&start), Err(FramingError::TooLong { .. })));
    }

    #[test]
    fn frame_payload_length_checked() {
        let f = StreamFrame {
            index: 0,
            timestamp_us: 0,
            channel: Channel::Pv,
            width: 2,
            height: 2,
            payload: vec![0; 11],
        };
        assert!(encode_message(&Message::Frame(f.clone())).is_err());
        let ok = StreamFrame {
            payload: vec![7; 12],
            ..f
        };
        let b = encode_message(&Message::Frame(ok.clone())).unwrap();
        assert_eq!(b.len(), HEADER_LEN + 21 + 12);
        assert_eq!(decode_message(&b).unwrap(), Message::Frame(ok));
    }

    #[test]
    fn stream_read_write() {
        let codec = Codec::default();
        let mut buf = Vec::new();
        codec.write(&mut buf, &Message::Hello { session_id: "s1".into() }).unwrap();
        codec.write(&mut buf, &Message::Stop).unwrap();
        let mut r = buf.as_slice();
        assert_eq!(
            codec.read(&mut r).unwrap(),
            Some(Message::Hello { session_id: "s1".into() })
        );
        assert_eq!(codec.read(&mut r).unwrap(), Some(Message::Stop));
        assert_eq!(codec.read(&mut r).unwrap(), None);
        let mut partial: &[u8] = &buf[..11];
        assert!(matches!(codec.read(&mut partial), Err(ReadError::Framing(_))));
    }

    fn arb_frame() -> impl Strategy<Value = StreamFrame> {
        (any::<u64>(), any::<u64>(), 0u8..3, 0u16..6, 0u16..6).prop_flat_map(|(i, t, c, w, h)| {
            let channel = Channel::try_from(c).unwrap();
            let (w, h) = if channel == Channel::Pose { (0, 0) } else { (w, h) };
            let n = StreamFrame::expected_len(channel, w, h);
            proptest::collection::vec(any::<u8>(), n).prop_map(move |payload| StreamFrame {
                index: i,
                timestamp_us: t,
                channel,
                width: w,
                height: h,
                payload,
            })
        })
    }

    fn arb_message() -> impl Strategy<Value = Message> {
        prop_oneof![
            ".{0,20}".prop_map(|s| Message::Hello { session_id: s }),
            (any::<i32>(), any::<i32>()).prop_map(|(x, y)| Message::Start { seed_x: x, seed_y: y }),
            Just(Message::Stop),
            Just(Message::Ack),
            ".{0,20}".prop_map(|s| Message::Error { detail: s }),
            arb_frame().prop_map(Message::Frame),
        ]
    }

    proptest! {
        #[test]
        fn round_trip(msg in arb_message()) {
            let b = encode_message(&msg).unwrap();
            prop_assert_eq!(decode_message(&b).unwrap(), msg);
        }

        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_message(&bytes);
        }

        #[test]
        fn decode_never_panics_with_valid_header(
            kind in any::<u8>(), body in proptest::collection::vec(any::<u8>(), 0..64)
        ) {
            let mut b = MAGIC.to_vec();
            b.push(VERSION);
            b.push(kind);
            b.extend_from_slice(&(body.len() as u32).to_le_bytes());
            b.extend_from_slice(&body);
            if let Ok(m) = decode_message(&b) {
                prop_assert_eq!(encode_message(&m).unwrap(), b);
            }
        }
    }
}
