use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const WIRE_VERSION: u8 = 1;
pub const FRAME_MAGIC: u16 = 0xAC01;
pub const POSE_MAGIC: u16 = 0xAC02;
pub const COMMAND_MAGIC: u16 = 0xAC03;
pub const ACK_MAGIC: u16 = 0xAC04;

/// Largest frame chunk payload; keeps datagrams under a 1500-byte MTU.
pub const MAX_CHUNK_PAYLOAD: usize = 1400;
pub const FRAME_HEADER_LEN: usize = 23;
pub const POSE_LEN: usize = 41;
pub const ACK_LEN: usize = 17;
const COMMAND_HEADER_LEN: usize = 18;

pub const QUATERNION_NORM_TOLERANCE: f32 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad magic {found:#06x}, expected {expected:#06x}")]
    BadMagic { found: u16, expected: u16 },
    #[error("unsupported wire version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated datagram: {needed} bytes needed, {got} received")]
    Truncated { needed: usize, got: usize },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

fn violation<T>(msg: impl Into<String>) -> Result<T, WireError> {
    Err(WireError::InvariantViolation(msg.into()))
}

/// Acoustic function of a robot, plus idle.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Haptics = 0,
    Audio = 1,
    Levitation = 2,
    #[default]
    Idle = 3,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::Haptics,
        Modality::Audio,
        Modality::Levitation,
        Modality::Idle,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Modality::Haptics),
            1 => Some(Modality::Audio),
            2 => Some(Modality::Levitation),
            3 => Some(Modality::Idle),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Haptics => "haptics",
            Modality::Audio => "audio",
            Modality::Levitation => "levitation",
            Modality::Idle => "idle",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "haptics" => Ok(Modality::Haptics),
            "audio" => Ok(Modality::Audio),
            "levitation" => Ok(Modality::Levitation),
            "idle" => Ok(Modality::Idle),
            other => Err(format!("unknown modality `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameMessage {
    pub camera_id: u16,
    pub frame_seq: u32,
    /// Sender clock, microseconds.
    pub capture_ts_us: u64,
    pub chunk_idx: u16,
    pub chunk_count: u16,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMessage {
    pub marker_id: u16,
    pub ts_us: u64,
    /// Metres, z up.
    pub position: [f32; 3],
    /// `(qw, qx, qy, qz)`.
    pub orientation: [f32; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CommandBody {
    Modality(Modality),
    /// m/s and rad/s.
    Velocity {
        v_linear: f32,
        v_angular: f32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandMessage {
    pub robot_id: u16,
    pub cmd_seq: u32,
    pub ts_us: u64,
    pub body: CommandBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckMessage {
    pub robot_id: u16,
    pub cmd_seq: u32,
    pub ts_us: u64,
}

/// Any of the four datagram kinds, dispatched on the magic.
#[derive(Debug, Clone, PartialEq)]
pub enum Datagram {
    Frame(FrameMessage),
    Pose(PoseMessage),
    Command(CommandMessage),
    Ack(AckMessage),
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.buf[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }
}

/// Checks the shared prefix and the minimum length; returns a cursor
/// positioned after the version byte.
fn open(buf: &[u8], magic: u16, min_len: usize) -> Result<Cursor<'_>, WireError> {
    if buf.len() < 3 {
        return Err(WireError::Truncated {
            needed: min_len.max(3),
            got: buf.len(),
        });
    }
    let found = u16::from_le_bytes([buf[0], buf[1]]);
    if found != magic {
        return Err(WireError::BadMagic {
            found,
            expected: magic,
        });
    }
    if buf[2] != WIRE_VERSION {
        return Err(WireError::UnsupportedVersion(buf[2]));
    }
    if buf.len() < min_len {
        return Err(WireError::Truncated {
            needed: min_len,
            got: buf.len(),
        });
    }
    Ok(Cursor { buf, pos: 3 })
}

fn exact_len(buf: &[u8], len: usize) -> Result<(), WireError> {
    if buf.len() > len {
        return violation(format!("{} trailing bytes", buf.len() - len));
    }
    Ok(())
}

fn header(out: &mut Vec<u8>, magic: u16) {
    out.extend_from_slice(&magic.to_le_bytes());
    out.push(WIRE_VERSION);
}

impl FrameMessage {
    pub fn validate(&self) -> Result<(), WireError> {
        if self.chunk_count == 0 {
            return violation("chunk_count is zero");
        }
        if self.chunk_idx >= self.chunk_count {
            return violation(format!(
                "chunk_idx {} >= chunk_count {}",
                self.chunk_idx, self.chunk_count
            ));
        }
        if self.payload.is_empty() {
            return violation("empty chunk payload");
        }
        if self.payload.len() > MAX_CHUNK_PAYLOAD {
            return violation(format!(
                "chunk payload {} exceeds {MAX_CHUNK_PAYLOAD}",
                self.payload.len()
            ));
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        self.validate()?;
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + self.payload.len());
        header(&mut out, FRAME_MAGIC);
        out.extend_from_slice(&self.camera_id.to_le_bytes());
        out.extend_from_slice(&self.frame_seq.to_le_bytes());
        out.extend_from_slice(&self.capture_ts_us.to_le_bytes());
        out.extend_from_slice(&self.chunk_idx.to_le_bytes());
        out.extend_from_slice(&self.chunk_count.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        let mut c = open(buf, FRAME_MAGIC, FRAME_HEADER_LEN)?;
        let camera_id = c.u16();
        let frame_seq = c.u32();
        let capture_ts_us = c.u64();
        let chunk_idx = c.u16();
        let chunk_count = c.u16();
        let payload_len = c.u16() as usize;
        let total = FRAME_HEADER_LEN + payload_len;
        if buf.len() < total {
            return Err(WireError::Truncated {
                needed: total,
                got: buf.len(),
            });
        }
        exact_len(buf, total)?;
        let msg = FrameMessage {
            camera_id,
            frame_seq,
            capture_ts_us,
            chunk_idx,
            chunk_count,
            payload: buf[FRAME_HEADER_LEN..total].to_vec(),
        };
        msg.validate()?;
        Ok(msg)
    }
}

impl PoseMessage {
    /// Identity orientation at `(x, y, z)`.
    pub fn at(marker_id: u16, ts_us: u64, x: f32, y: f32, z: f32) -> Self {
        PoseMessage {
            marker_id,
            ts_us,
            position: [x, y, z],
            orientation: [1.0, 0.0, 0.0, 0.0],
        }
    }

    /// Planar pose with heading `yaw` about +z.
    pub fn planar(marker_id: u16, ts_us: u64, x: f64, y: f64, yaw: f64) -> Self {
        let half = yaw / 2.0;
        PoseMessage {
            marker_id,
            ts_us,
            position: [x as f32, y as f32, 0.0],
            orientation: [half.cos() as f32, 0.0, 0.0, half.sin() as f32],
        }
    }

    pub fn quaternion_norm(&self) -> f32 {
        self.orientation.iter().map(|q| q * q).sum::<f32>().sqrt()
    }

    /// Heading about +z (z-up world frame).
    pub fn yaw(&self) -> f64 {
        let [w, x, y, z] = self.orientation.map(f64::from);
        (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z))
    }

    pub fn validate(&self) -> Result<(), WireError> {
        if self.position.iter().any(|v| !v.is_finite()) {
            return violation("non-finite position");
        }
        let n = self.quaternion_norm();
        if !n.is_finite() || (n - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return violation(format!("quaternion norm {n} is not 1"));
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        self.validate()?;
        let mut out = Vec::with_capacity(POSE_LEN);
        header(&mut out, POSE_MAGIC);
        out.extend_from_slice(&self.marker_id.to_le_bytes());
        out.extend_from_slice(&self.ts_us.to_le_bytes());
        for v in self.position.iter().chain(&self.orientation) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        let mut c = open(buf, POSE_MAGIC, POSE_LEN)?;
        exact_len(buf, POSE_LEN)?;
        let marker_id = c.u16();
        let ts_us = c.u64();
        let position = [c.f32(), c.f32(), c.f32()];
        let orientation = [c.f32(), c.f32(), c.f32(), c.f32()];
        let msg = PoseMessage {
            marker_id,
            ts_us,
            position,
            orientation,
        };
        msg.validate()?;
        Ok(msg)
    }
}

impl CommandMessage {
    pub fn kind_code(&self) -> u8 {
        match self.body {
            CommandBody::Modality(_) => 0,
            CommandBody::Velocity { .. } => 1,
        }
    }

    pub fn validate(&self) -> Result<(), WireError> {
        if let CommandBody::Velocity {
            v_linear,
            v_angular,
        } = self.body
        {
            if !v_linear.is_finite() || !v_angular.is_finite() {
                return violation("non-finite velocity");
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        self.validate()?;
        let mut out = Vec::with_capacity(COMMAND_HEADER_LEN + 8);
        header(&mut out, COMMAND_MAGIC);
        out.extend_from_slice(&self.robot_id.to_le_bytes());
        out.extend_from_slice(&self.cmd_seq.to_le_bytes());
        out.extend_from_slice(&self.ts_us.to_le_bytes());
        out.push(self.kind_code());
        match self.body {
            CommandBody::Modality(m) => out.push(m.code()),
            CommandBody::Velocity {
                v_linear,
                v_angular,
            } => {
                out.extend_from_slice(&v_linear.to_le_bytes());
                out.extend_from_slice(&v_angular.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        let mut c = open(buf, COMMAND_MAGIC, COMMAND_HEADER_LEN)?;
        let robot_id = c.u16();
        let cmd_seq = c.u32();
        let ts_us = c.u64();
        let kind = c.u8();
        let body_len = match kind {
            0 => 1,
            1 => 8,
            other => return violation(format!("unknown command kind {other}")),
        };
        let total = COMMAND_HEADER_LEN + body_len;
        if buf.len() < total {
            return Err(WireError::Truncated {
                needed: total,
                got: buf.len(),
            });
        }
        exact_len(buf, total)?;
        let body = if kind == 0 {
            let code = c.u8();
            match Modality::from_code(code) {
                Some(m) => CommandBody::Modality(m),
                None => return violation(format!("unknown modality {code}")),
            }
        } else {
            CommandBody::Velocity {
                v_linear: c.f32(),
                v_angular: c.f32(),
            }
        };
        let msg = CommandMessage {
            robot_id,
            cmd_seq,
            ts_us,
            body,
        };
        msg.validate()?;
        Ok(msg)
    }
}

impl AckMessage {
    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::with_capacity(ACK_LEN);
        header(&mut out, ACK_MAGIC);
        out.extend_from_slice(&self.robot_id.to_le_bytes());
        out.extend_from_slice(&self.cmd_seq.to_le_bytes());
        out.extend_from_slice(&self.ts_us.to_le_bytes());
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        let mut c = open(buf, ACK_MAGIC, ACK_LEN)?;
        exact_len(buf, ACK_LEN)?;
        Ok(AckMessage {
            robot_id: c.u16(),
            cmd_seq: c.u32(),
            ts_us: c.u64(),
        })
    }
}

impl Datagram {
    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        if buf.len() < 2 {
            return Err(WireError::Truncated {
                needed: 3,
                got: buf.len(),
            });
        }
        match u16::from_le_bytes([buf[0], buf[1]]) {
            FRAME_MAGIC => FrameMessage::decode(buf).map(Datagram::Frame),
            POSE_MAGIC => PoseMessage::decode(buf).map(Datagram::Pose),
            COMMAND_MAGIC => CommandMessage::decode(buf).map(Datagram::Command),
            ACK_MAGIC => AckMessage::decode(buf).map(Datagram::Ack),
            found => Err(WireError::BadMagic {
                found,
                expected: FRAME_MAGIC,
            }),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        match self {
            Datagram::Frame(m) => m.encode(),
            Datagram::Pose(m) => m.encode(),
            Datagram::Command(m) => m.encode(),
            Datagram::Ack(m) => m.encode(),
        }
    }
}
