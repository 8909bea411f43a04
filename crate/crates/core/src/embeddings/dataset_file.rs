//! Dataset text format:
//!
//! ```text
//! # acousto-embeddings v1 dim=<d>
//! <label_int>,<f32>,<f32>,...
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use crate::probe::{Embedding, GestureClass, LabeledDataset};

pub const DATASET_HEADER_PREFIX: &str = "# acousto-embeddings v1 dim=";

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct DatasetParseError {
    pub line: usize,
    pub message: String,
}

pub fn write_dataset(ds: &LabeledDataset) -> String {
    let mut out = format!("{DATASET_HEADER_PREFIX}{}\n", ds.dim());
    for (e, label) in ds.samples() {
        out.push_str(&label.code().to_string());
        for &v in e.values() {
            // Shortest round-trip representation of the f32 value.
            let _ = write!(out, ",{}", v as f32);
        }
        out.push('\n');
    }
    out
}

pub fn parse_dataset(
    text: &str,
    provenance_tag: &str,
) -> Result<LabeledDataset, DatasetParseError> {
    let err = |line: usize, message: String| DatasetParseError { line, message };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let dim: usize = header
        .trim()
        .strip_prefix(DATASET_HEADER_PREFIX)
        .ok_or_else(|| err(1, format!("expected header `{DATASET_HEADER_PREFIX}<d>`")))?
        .trim()
        .parse()
        .map_err(|e| err(1, format!("bad dimension: {e}")))?;
    if dim == 0 {
        return Err(err(1, "dimension must be positive".into()));
    }
    let mut samples = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let label_field = fields.next().unwrap_or_default().trim();
        let label = label_field
            .parse::<u8>()
            .ok()
            .and_then(GestureClass::from_code)
            .ok_or_else(|| err(lineno, format!("invalid label `{label_field}`")))?;
        let mut values = Vec::with_capacity(dim);
        for (col, f) in fields.enumerate() {
            let v: f32 = f
                .trim()
                .parse()
                .map_err(|e| err(lineno, format!("column {}: {e}", col + 2)))?;
            values.push(v);
        }
        let e = Embedding::from_f32(&values, dim).map_err(|e| err(lineno, e.to_string()))?;
        samples.push((e, label));
    }
    LabeledDataset::new(samples, provenance_tag).map_err(|e| err(1, e.to_string()))
}
