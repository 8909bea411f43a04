use super::split::LabeledDataset;
use super::{argmax, LinearProbe, ProbeError};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_pairs(
        num_classes: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, ProbeError> {
        let mut m = Self::new(num_classes);
        for (truth, pred) in pairs {
            m.record(truth, pred)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, pred: usize) -> Result<(), ProbeError> {
        let k = self.counts.len();
        for label in [truth, pred] {
            if label >= k {
                return Err(ProbeError::InvalidLabel {
                    label,
                    num_classes: k,
                });
            }
        }
        self.counts[truth][pred] += 1;
        Ok(())
    }

    pub fn get(&self, truth: usize, pred: usize) -> usize {
        self.counts[truth][pred]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.correct() as f64 / total as f64)
    }

    /// `None` for classes with no samples.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: usize = row.iter().sum();
                (n > 0).then(|| row[i] as f64 / n as f64)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
    pub mean_loss: f64,
}

pub fn evaluate(probe: &LinearProbe, ds: &LabeledDataset) -> Result<Metrics, ProbeError> {
    if ds.is_empty() {
        return Err(ProbeError::EmptyDataset);
    }
    let mut confusion = ConfusionMatrix::new(probe.num_classes());
    let mut loss = 0.0;
    for (e, label) in ds.pairs() {
        let logits = probe.forward(e)?;
        loss += super::cross_entropy(&logits, label)?;
        confusion.record(label, argmax(&logits).expect("non-empty logits"))?;
    }
    Ok(Metrics {
        accuracy: confusion.accuracy().unwrap_or(0.0),
        per_class_accuracy: confusion.per_class_accuracy(),
        confusion,
        mean_loss: loss / ds.len() as f64,
    })
}
