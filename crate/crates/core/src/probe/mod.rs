//! Linear probe over frozen embeddings.
//!
//! A single fully connected layer maps an embedding to one logit per gesture
//! class. Gradients are closed form (linear layer + softmax cross-entropy), so
//! there is no autodiff machinery here; [`optim`] implements AdamW over the
//! flat parameter vector.

mod checkpoint;
pub mod math;
mod metrics;
mod model;
pub mod optim;
mod split;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_MAGIC};
pub use math::{argmax, cross_entropy, softmax};
pub use metrics::{evaluate, ConfusionMatrix, Metrics};
pub use model::{LinearProbe, Prediction};
pub use optim::{adamw_step, AdamW, AdamWState};
pub use split::{split_dataset, LabeledDataset};
pub use train::{train, EpochRecord, TrainConfig, TrainHistory};

pub const DEFAULT_EMBED_DIM: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbeError {
    #[error("{0} is empty")]
    EmptyInput(&'static str),
    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    InvalidLabel { label: usize, num_classes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("split leaves an empty side: {train} train / {val} validation")]
    EmptySplit { train: usize, val: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parameter shapes disagree: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {source}")]
    Diverged {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<ProbeError>,
    },
}

/// The three hand gestures. Integer codes are part of every on-disk format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureClass {
    ThumbsUp = 0,
    Fist = 1,
    Palm = 2,
}

impl GestureClass {
    pub const ALL: [GestureClass; 3] = [
        GestureClass::ThumbsUp,
        GestureClass::Fist,
        GestureClass::Palm,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(GestureClass::ThumbsUp),
            1 => Some(GestureClass::Fist),
            2 => Some(GestureClass::Palm),
            _ => None,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        u8::try_from(index).ok().and_then(Self::from_code)
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureClass::ThumbsUp => "thumbs_up",
            GestureClass::Fist => "fist",
            GestureClass::Palm => "palm",
        }
    }

    /// Default class labels, in code order.
    pub fn default_names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

impl fmt::Display for GestureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GestureClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['-', ' '], "_")
            .as_str()
        {
            "thumbs_up" | "thumbsup" | "0" => Ok(GestureClass::ThumbsUp),
            "fist" | "1" => Ok(GestureClass::Fist),
            "palm" | "2" => Ok(GestureClass::Palm),
            other => Err(format!("unknown gesture class `{other}`")),
        }
    }
}

/// One frozen-encoder feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
    pub source_frame_seq: Option<u32>,
}

impl Embedding {
    /// Validates length and finiteness.
    pub fn new(values: Vec<f64>, expected_dim: usize) -> Result<Self, ProbeError> {
        if values.len() != expected_dim {
            return Err(ProbeError::DimensionMismatch {
                expected: expected_dim,
                actual: values.len(),
            });
        }
        Self::from_values(values)
    }

    /// Like [`Embedding::new`] but takes the dimension from the data.
    pub fn from_values(values: Vec<f64>) -> Result<Self, ProbeError> {
        if values.is_empty() {
            return Err(ProbeError::EmptyInput("embedding"));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(ProbeError::NonFinite {
                what: "embedding",
                index,
            });
        }
        Ok(Embedding {
            values,
            source_frame_seq: None,
        })
    }

    pub fn with_frame_seq(mut self, seq: u32) -> Self {
        self.source_frame_seq = Some(seq);
        self
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Widens f32 components (wire and file values) without rounding.
    pub fn from_f32(values: &[f32], expected_dim: usize) -> Result<Self, ProbeError> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect(), expected_dim)
    }

    /// Little-endian f32 bytes, the passthrough frame payload. Components are
    /// narrowed to f32.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gesture_codes_are_stable() {
        for (i, g) in GestureClass::ALL.iter().enumerate() {
            assert_eq!(g.index(), i);
            assert_eq!(GestureClass::from_code(g.code()), Some(*g));
            assert_eq!(g.name().parse::<GestureClass>().unwrap(), *g);
        }
        assert_eq!(GestureClass::from_code(3), None);
        assert_eq!(
            "Thumbs-Up".parse::<GestureClass>(),
            Ok(GestureClass::ThumbsUp)
        );
    }

    #[test]
    fn embedding_validation() {
        assert!(Embedding::new(vec![0.0; 4], 4).is_ok());
        assert_eq!(
            Embedding::new(vec![0.0; 3], 4),
            Err(ProbeError::DimensionMismatch {
                expected: 4,
                actual: 3
            })
        );
        assert!(matches!(
            Embedding::new(vec![0.0, f64::INFINITY], 2),
            Err(ProbeError::NonFinite { index: 1, .. })
        ));
    }
}
