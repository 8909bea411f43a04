//! `ACPB` checkpoint format (little-endian):
//!
//! ```text
//! magic "ACPB" | version u16 (=1) | embed_dim u32 | num_classes u32
//! | num_classes x (name_len u16, UTF-8 name)
//! | weights f32[num_classes * embed_dim] row-major | bias f32[num_classes]
//! | crc32 u32 over every preceding byte
//! ```
//!
//! Parameters are narrowed to f32 on save.

use thiserror::Error;

use super::{LinearProbe, ProbeError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ACPB";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Upper bound on declared sizes, so a corrupt header cannot request a huge
/// allocation before the length check fails.
const MAX_PARAMS: u64 = 1 << 28;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckpointError {
    #[error("bad magic {0:02x?}, expected \"ACPB\"")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error(
        "truncated checkpoint: needed {needed} bytes at offset {offset}, {available} available"
    )]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("dimension disagreement: {0}")]
    Dimensions(String),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("class name {index} is not valid UTF-8")]
    InvalidName { index: usize },
    #[error("invalid parameters: {0}")]
    InvalidProbe(#[from] ProbeError),
}

pub fn save_checkpoint(probe: &LinearProbe) -> Vec<u8> {
    let k = probe.num_classes();
    let mut buf = Vec::with_capacity(18 + 4 * probe.params().len());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(probe.embed_dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(k as u32).to_le_bytes());
    for name in probe.class_names() {
        let bytes = name.as_bytes();
        let len = bytes.len().min(u16::MAX as usize);
        buf.extend_from_slice(&(len as u16).to_le_bytes());
        buf.extend_from_slice(&bytes[..len]);
    }
    for &p in probe.params() {
        buf.extend_from_slice(&(p as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<LinearProbe, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let embed_dim = r.u32()? as usize;
    let num_classes = r.u32()? as usize;
    if embed_dim == 0 || num_classes == 0 {
        return Err(CheckpointError::Dimensions(format!(
            "embed_dim {embed_dim}, num_classes {num_classes}"
        )));
    }
    let n_params = (num_classes as u64) * (embed_dim as u64 + 1);
    if n_params > MAX_PARAMS {
        return Err(CheckpointError::Dimensions(format!(
            "{num_classes}x{embed_dim} exceeds the supported size"
        )));
    }
    // Each class name needs at least its length prefix.
    if num_classes > (bytes.len() - r.pos) / 2 {
        return Err(CheckpointError::Truncated {
            offset: r.pos,
            needed: 2 * num_classes,
            available: bytes.len() - r.pos,
        });
    }
    let mut class_names = Vec::with_capacity(num_classes);
    for index in 0..num_classes {
        let len = r.u16()? as usize;
        let raw = r.take(len)?;
        let name = std::str::from_utf8(raw).map_err(|_| CheckpointError::InvalidName { index })?;
        class_names.push(name.to_string());
    }
    let n_params = n_params as usize;
    let expected_rest = 4 * n_params + 4;
    let rest = bytes.len() - r.pos;
    if rest < expected_rest {
        return Err(CheckpointError::Truncated {
            offset: r.pos,
            needed: expected_rest,
            available: rest,
        });
    }
    if rest > expected_rest {
        return Err(CheckpointError::Dimensions(format!(
            "{} trailing bytes after a {num_classes}x{embed_dim} probe",
            rest - expected_rest
        )));
    }
    let params: Vec<f64> = r
        .take(4 * n_params)?
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let body_end = r.pos;
    let stored = r.u32()?;
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    let split = num_classes * embed_dim;
    let bias = params[split..].to_vec();
    let mut weights = params;
    weights.truncate(split);
    Ok(LinearProbe::from_parts(
        embed_dim,
        class_names,
        weights,
        bias,
    )?)
}
