use super::math::{argmax, cross_entropy, cross_entropy_grad, softmax};
use super::{Embedding, ProbeError};

/// Weight matrix `[num_classes x embed_dim]` plus bias, stored as one flat
/// parameter vector (row-major weights followed by the bias) so the optimizer
/// can treat it as a single tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    embed_dim: usize,
    class_names: Vec<String>,
    params: Vec<f64>,
}

/// Result of classifying one embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_index: usize,
    pub confidence: f64,
    pub probs: Vec<f64>,
}

impl LinearProbe {
    pub fn zeros(embed_dim: usize, class_names: Vec<String>) -> Result<Self, ProbeError> {
        let n = class_names.len() * embed_dim + class_names.len();
        Self::from_params(embed_dim, class_names, vec![0.0; n])
    }

    pub fn from_parts(
        embed_dim: usize,
        class_names: Vec<String>,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, ProbeError> {
        let classes = class_names.len();
        if bias.len() != classes {
            return Err(ProbeError::ShapeMismatch(format!(
                "bias has {} entries for {classes} classes",
                bias.len()
            )));
        }
        if weights.len() != classes * embed_dim {
            return Err(ProbeError::ShapeMismatch(format!(
                "weights have {} entries, expected {classes}x{embed_dim}",
                weights.len()
            )));
        }
        let mut params = weights;
        params.extend(bias);
        Self::from_params(embed_dim, class_names, params)
    }

    fn from_params(
        embed_dim: usize,
        class_names: Vec<String>,
        params: Vec<f64>,
    ) -> Result<Self, ProbeError> {
        if embed_dim == 0 {
            return Err(ProbeError::ShapeMismatch("embed_dim is zero".into()));
        }
        if class_names.is_empty() {
            return Err(ProbeError::ShapeMismatch("no classes".into()));
        }
        if let Some(index) = params.iter().position(|v| !v.is_finite()) {
            return Err(ProbeError::NonFinite {
                what: "probe parameters",
                index,
            });
        }
        Ok(LinearProbe {
            embed_dim,
            class_names,
            params,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn weights(&self) -> &[f64] {
        &self.params[..self.num_classes() * self.embed_dim]
    }

    pub fn weight_row(&self, class: usize) -> &[f64] {
        &self.params[class * self.embed_dim..(class + 1) * self.embed_dim]
    }

    pub fn bias(&self) -> &[f64] {
        &self.params[self.num_classes() * self.embed_dim..]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_dim(&self, actual: usize) -> Result<(), ProbeError> {
        if actual != self.embed_dim {
            return Err(ProbeError::DimensionMismatch {
                expected: self.embed_dim,
                actual,
            });
        }
        Ok(())
    }

    pub fn forward(&self, e: &Embedding) -> Result<Vec<f64>, ProbeError> {
        self.forward_values(e.values())
    }

    /// `logits[i] = dot(weights[i], x) + bias[i]`.
    pub fn forward_values(&self, x: &[f64]) -> Result<Vec<f64>, ProbeError> {
        self.check_dim(x.len())?;
        let bias = self.bias();
        Ok((0..self.num_classes())
            .map(|c| {
                self.weight_row(c)
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
                    + bias[c]
            })
            .collect())
    }

    pub fn predict(&self, e: &Embedding) -> Result<Prediction, ProbeError> {
        let probs = softmax(&self.forward(e)?)?;
        let class_index = argmax(&probs).expect("at least one class");
        Ok(Prediction {
            class_index,
            confidence: probs[class_index],
            probs,
        })
    }

    /// Mean cross-entropy over `batch` and its gradient with respect to the
    /// flat parameter vector.
    pub fn loss_and_grad(
        &self,
        batch: &[(&Embedding, usize)],
    ) -> Result<(f64, Vec<f64>), ProbeError> {
        if batch.is_empty() {
            return Err(ProbeError::EmptyInput("batch"));
        }
        let d = self.embed_dim;
        let k = self.num_classes();
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (e, label) in batch {
            let logits = self.forward(e)?;
            loss += cross_entropy(&logits, *label)?;
            let dlogits = cross_entropy_grad(&logits, *label)?;
            for (c, g) in dlogits.iter().enumerate() {
                let g = g * scale;
                let row = &mut grad[c * d..(c + 1) * d];
                for (slot, &v) in row.iter_mut().zip(e.values()) {
                    *slot += g * v;
                }
                grad[k * d + c] += g;
            }
        }
        Ok((loss * scale, grad))
    }

    /// Mean cross-entropy without the gradient.
    pub fn mean_loss<'a, I>(&self, samples: I) -> Result<f64, ProbeError>
    where
        I: IntoIterator<Item = (&'a Embedding, usize)>,
    {
        let mut total = 0.0;
        let mut n = 0usize;
        for (e, label) in samples {
            total += cross_entropy(&self.forward(e)?, label)?;
            n += 1;
        }
        if n == 0 {
            return Err(ProbeError::EmptyDataset);
        }
        Ok(total / n as f64)
    }
}
