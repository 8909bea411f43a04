//! Embedding provision.
//!
//! The pretrained visual encoder lives outside this crate. The coordinator
//! only sees an [`EmbeddingProvider`], which turns a reassembled frame payload
//! into an [`Embedding`]:
//!
//! - [`EmbeddingProvider::Passthrough`]: the payload already is a
//!   little-endian f32 embedding (simulation and operator injection).
//! - [`EmbeddingProvider::DeterministicProjection`]: payload bytes are hashed
//!   into a seeded random unit vector.
//! - [`EmbeddingProvider::Sidecar`]: an external encoder process reached over
//!   a byte stream.

mod dataset_file;
mod projection;
pub mod sidecar;
mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::probe::{Embedding, ProbeError};

pub use dataset_file::{parse_dataset, write_dataset, DatasetParseError, DATASET_HEADER_PREFIX};
pub use projection::{payload_hash, project_frame};
pub use sidecar::{SidecarClient, SidecarError};
pub use synthetic::{
    generate_synthetic_dataset, orthogonal_means, SyntheticDatasetSpec, NOISE_COMPONENT_SCALE,
};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("empty frame payload")]
    EmptyPayload,
    #[error("passthrough payload of {len} bytes does not hold {dim} f32 values")]
    PayloadLength { len: usize, dim: usize },
    #[error(transparent)]
    Embedding(#[from] ProbeError),
    #[error(transparent)]
    Sidecar(#[from] SidecarError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingProviderKind {
    #[default]
    Passthrough,
    DeterministicProjection,
    Sidecar,
}

#[derive(Debug)]
pub enum EmbeddingProvider {
    Passthrough { dim: usize },
    DeterministicProjection { dim: usize },
    Sidecar(SidecarClient),
}

impl EmbeddingProvider {
    pub fn kind(&self) -> EmbeddingProviderKind {
        match self {
            EmbeddingProvider::Passthrough { .. } => EmbeddingProviderKind::Passthrough,
            EmbeddingProvider::DeterministicProjection { .. } => {
                EmbeddingProviderKind::DeterministicProjection
            }
            EmbeddingProvider::Sidecar(_) => EmbeddingProviderKind::Sidecar,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::Passthrough { dim }
            | EmbeddingProvider::DeterministicProjection { dim } => *dim,
            EmbeddingProvider::Sidecar(c) => c.dim(),
        }
    }

    pub fn embed(&self, payload: &[u8]) -> Result<Embedding, ProviderError> {
        match self {
            EmbeddingProvider::Passthrough { dim } => passthrough(payload, *dim),
            EmbeddingProvider::DeterministicProjection { dim } => project_frame(payload, *dim),
            EmbeddingProvider::Sidecar(client) => Ok(client.encode(payload)?),
        }
    }
}

/// Decodes a payload that is literally `dim` little-endian f32 values.
pub fn passthrough(payload: &[u8], dim: usize) -> Result<Embedding, ProviderError> {
    if payload.is_empty() {
        return Err(ProviderError::EmptyPayload);
    }
    if payload.len() != dim * 4 {
        return Err(ProviderError::PayloadLength {
            len: payload.len(),
            dim,
        });
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Embedding::from_f32(&values, dim)?)
}
