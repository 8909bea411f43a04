use std::collections::BTreeMap;

use super::codec::{FrameMessage, WireError, MAX_CHUNK_PAYLOAD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReassemblyConfig {
    /// Incomplete frames older than this are discarded.
    pub timeout_us: u64,
    /// In-flight (incomplete) frames kept per camera; the oldest is evicted.
    pub max_in_flight: usize,
}

impl Default for ReassemblyConfig {
    fn default() -> Self {
        ReassemblyConfig {
            timeout_us: 500_000,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletedFrame {
    pub camera_id: u16,
    pub frame_seq: u32,
    pub capture_ts_us: u64,
    /// Receiver clock at the moment the last chunk arrived.
    pub completed_at_us: u64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReassemblyStats {
    pub completed: u64,
    pub duplicate_chunks: u64,
    /// Chunks for frames at or behind the camera's last completed frame.
    pub stale_chunks: u64,
    pub dropped_timeout: u64,
    pub dropped_conflict: u64,
    pub dropped_superseded: u64,
    pub dropped_evicted: u64,
}

#[derive(Debug)]
struct Partial {
    chunk_count: u16,
    capture_ts_us: u64,
    chunks: Vec<Option<Vec<u8>>>,
    received: usize,
    first_seen_us: u64,
}

#[derive(Debug, Default)]
struct CameraState {
    partials: BTreeMap<u32, Partial>,
    last_completed: Option<u32>,
}

/// Rebuilds frames from chunks that may arrive reordered, duplicated or not
/// at all. Each `(camera_id, frame_seq)` is emitted at most once.
///
/// Frame sequence numbers are compared without wrap-around handling; a
/// camera restarting its sequence needs a fresh reassembler.
#[derive(Debug, Default)]
pub struct Reassembler {
    cfg: ReassemblyConfig,
    cameras: BTreeMap<u16, CameraState>,
    stats: ReassemblyStats,
}

impl Reassembler {
    pub fn new(cfg: ReassemblyConfig) -> Self {
        Reassembler {
            cfg,
            ..Default::default()
        }
    }

    pub fn stats(&self) -> ReassemblyStats {
        self.stats
    }

    pub fn in_flight(&self, camera_id: u16) -> usize {
        self.cameras.get(&camera_id).map_or(0, |c| c.partials.len())
    }

    /// Drops incomplete frames whose first chunk is older than the timeout.
    pub fn expire(&mut self, now_us: u64) {
        let timeout = self.cfg.timeout_us;
        for cam in self.cameras.values_mut() {
            let before = cam.partials.len();
            cam.partials
                .retain(|_, p| now_us.saturating_sub(p.first_seen_us) < timeout);
            self.stats.dropped_timeout += (before - cam.partials.len()) as u64;
        }
    }

    pub fn push(&mut self, msg: FrameMessage, now_us: u64) -> Option<CompletedFrame> {
        self.expire(now_us);
        let cfg = self.cfg;
        let cam = self.cameras.entry(msg.camera_id).or_default();
        if cam.last_completed.is_some_and(|last| msg.frame_seq <= last) {
            self.stats.stale_chunks += 1;
            return None;
        }
        if msg.chunk_count == 0 || msg.chunk_idx >= msg.chunk_count {
            return None;
        }

        if let Some(p) = cam.partials.get(&msg.frame_seq) {
            if p.chunk_count != msg.chunk_count {
                log::debug!(
                    "camera {} frame {}: chunk_count {} conflicts with {}",
                    msg.camera_id,
                    msg.frame_seq,
                    msg.chunk_count,
                    p.chunk_count
                );
                cam.partials.remove(&msg.frame_seq);
                self.stats.dropped_conflict += 1;
                return None;
            }
        } else {
            while cam.partials.len() >= cfg.max_in_flight.max(1) {
                cam.partials.pop_first();
                self.stats.dropped_evicted += 1;
            }
            cam.partials.insert(
                msg.frame_seq,
                Partial {
                    chunk_count: msg.chunk_count,
                    capture_ts_us: msg.capture_ts_us,
                    chunks: vec![None; msg.chunk_count as usize],
                    received: 0,
                    first_seen_us: now_us,
                },
            );
        }

        let partial = cam
            .partials
            .get_mut(&msg.frame_seq)
            .expect("inserted above");
        let slot = &mut partial.chunks[msg.chunk_idx as usize];
        if slot.is_some() {
            self.stats.duplicate_chunks += 1;
            return None;
        }
        *slot = Some(msg.payload);
        partial.received += 1;
        if partial.received < partial.chunk_count as usize {
            return None;
        }

        let done = cam.partials.remove(&msg.frame_seq).expect("present");
        // Older incomplete frames can no longer be emitted.
        let older: Vec<u32> = cam
            .partials
            .range(..msg.frame_seq)
            .map(|(k, _)| *k)
            .collect();
        for k in older {
            cam.partials.remove(&k);
            self.stats.dropped_superseded += 1;
        }
        cam.last_completed = Some(msg.frame_seq);
        self.stats.completed += 1;
        Some(CompletedFrame {
            camera_id: msg.camera_id,
            frame_seq: msg.frame_seq,
            capture_ts_us: done.capture_ts_us,
            completed_at_us: now_us,
            payload: done.chunks.into_iter().flatten().flatten().collect(),
        })
    }
}

/// Splits a frame payload into chunks of at most `max_chunk` bytes
/// (capped at [`MAX_CHUNK_PAYLOAD`]).
pub fn chunk_frame(
    camera_id: u16,
    frame_seq: u32,
    capture_ts_us: u64,
    payload: &[u8],
    max_chunk: usize,
) -> Result<Vec<FrameMessage>, WireError> {
    if payload.is_empty() {
        return Err(WireError::InvariantViolation("empty frame payload".into()));
    }
    let size = max_chunk.clamp(1, MAX_CHUNK_PAYLOAD);
    let count = payload.len().div_ceil(size);
    let chunk_count = u16::try_from(count)
        .map_err(|_| WireError::InvariantViolation(format!("{count} chunks exceed u16")))?;
    Ok(payload
        .chunks(size)
        .enumerate()
        .map(|(i, c)| FrameMessage {
            camera_id,
            frame_seq,
            capture_ts_us,
            chunk_idx: i as u16,
            chunk_count,
            payload: c.to_vec(),
        })
        .collect())
}
