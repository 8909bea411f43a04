//! UDP wire formats for the coordinator's data streams.
//!
//! Every datagram is little-endian and starts with a `u16` magic followed by a
//! `u8` version (currently 1):
//!
//! ```text
//! Frame   0xAC01 | ver | camera_id u16 | frame_seq u32 | capture_ts_us u64
//!                | chunk_idx u16 | chunk_count u16 | payload_len u16 | payload
//! Pose    0xAC02 | ver | marker_id u16 | ts_us u64 | x y z f32 | qw qx qy qz f32
//! Command 0xAC03 | ver | robot_id u16 | cmd_seq u32 | ts_us u64 | kind u8
//!                | modality u8            (kind 0)
//!                | v_linear f32 v_angular f32   (kind 1)
//! Ack     0xAC04 | ver | robot_id u16 | cmd_seq u32 | ts_us u64
//! ```
//!
//! Decoders reject bad magic, unknown versions, short buffers, trailing bytes
//! and values that break the message invariants. None of them panic.

mod codec;
mod reassembly;

pub use codec::*;
pub use reassembly::{chunk_frame, CompletedFrame, Reassembler, ReassemblyConfig, ReassemblyStats};

pub const DEFAULT_FRAME_PORT: u16 = 9401;
pub const DEFAULT_POSE_PORT: u16 = 9402;
pub const DEFAULT_COMMAND_PORT: u16 = 9403;
pub const DEFAULT_ACK_PORT: u16 = 9404;
