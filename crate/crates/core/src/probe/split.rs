use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Embedding, GestureClass, ProbeError};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<(Embedding, GestureClass)>,
    pub provenance_tag: String,
}

impl LabeledDataset {
    /// Rejects empty input and mixed embedding dimensions.
    pub fn new(
        samples: Vec<(Embedding, GestureClass)>,
        provenance_tag: impl Into<String>,
    ) -> Result<Self, ProbeError> {
        let dim = samples.first().ok_or(ProbeError::EmptyDataset)?.0.dim();
        if let Some((e, _)) = samples.iter().find(|(e, _)| e.dim() != dim) {
            return Err(ProbeError::DimensionMismatch {
                expected: dim,
                actual: e.dim(),
            });
        }
        Ok(LabeledDataset {
            samples,
            provenance_tag: provenance_tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].0.dim()
    }

    pub fn samples(&self) -> &[(Embedding, GestureClass)] {
        &self.samples
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for (_, label) in &self.samples {
            counts[label.index()] += 1;
        }
        counts
    }

    pub(crate) fn pairs(&self) -> impl Iterator<Item = (&Embedding, usize)> {
        self.samples.iter().map(|(e, l)| (e, l.index()))
    }
}

/// Number of training samples for a split: `floor(ratio * n)`.
///
/// A tiny epsilon absorbs products such as `0.7 * 10 = 6.999...`.
pub(crate) fn train_size(n: usize, ratio: f64) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Seeded shuffle, then the first `floor(ratio * n)` samples train and the
/// rest validate.
pub fn split_dataset(
    ds: &LabeledDataset,
    ratio: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset), ProbeError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(ProbeError::InvalidConfig(format!(
            "split ratio {ratio} must lie strictly between 0 and 1"
        )));
    }
    let n = ds.len();
    let n_train = train_size(n, ratio);
    if n_train == 0 || n_train == n {
        return Err(ProbeError::EmptySplit {
            train: n_train,
            val: n - n_train,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize], tag: &str| LabeledDataset {
        samples: idx.iter().map(|&i| ds.samples[i].clone()).collect(),
        provenance_tag: format!("{}:{tag}", ds.provenance_tag),
    };
    Ok((
        pick(&order[..n_train], "train"),
        pick(&order[n_train..], "val"),
    ))
}
