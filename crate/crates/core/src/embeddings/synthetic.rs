use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::probe::{Embedding, GestureClass, LabeledDataset, ProbeError};

/// Per-component noise standard deviation per unit of `noise_std`.
///
/// `noise_std = 0.35` therefore means i.i.d. N(0, 0.035^2) on every
/// component of a 512-d embedding whose class means are unit vectors.
pub const NOISE_COMPONENT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDatasetSpec {
    pub num_samples: usize,
    pub embed_dim: usize,
    /// One mean per class, indexed by gesture code.
    pub class_means: Vec<Vec<f64>>,
    pub noise_std: f64,
    pub seed: u64,
}

/// Three mutually orthogonal unit vectors: class `k` is the `k`-th axis.
pub fn orthogonal_means(embed_dim: usize) -> Vec<Vec<f64>> {
    (0..3)
        .map(|k| {
            let mut v = vec![0.0; embed_dim];
            v[k] = 1.0;
            v
        })
        .collect()
}

impl SyntheticDatasetSpec {
    pub fn orthogonal(num_samples: usize, embed_dim: usize, noise_std: f64, seed: u64) -> Self {
        SyntheticDatasetSpec {
            num_samples,
            embed_dim,
            class_means: orthogonal_means(embed_dim.max(3)),
            noise_std,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        let bad = |m: String| Err(ProbeError::InvalidConfig(m));
        if self.num_samples < 3 {
            return bad(format!("num_samples {} < 3", self.num_samples));
        }
        if self.embed_dim < 3 {
            return bad(format!("embed_dim {} < 3", self.embed_dim));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!(
                "noise_std {} must be finite and >= 0",
                self.noise_std
            ));
        }
        if self.class_means.len() != 3 {
            return bad(format!(
                "{} class means, expected 3",
                self.class_means.len()
            ));
        }
        for m in &self.class_means {
            if m.len() != self.embed_dim {
                return Err(ProbeError::DimensionMismatch {
                    expected: self.embed_dim,
                    actual: m.len(),
                });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return bad("class mean has non-finite values".into());
            }
        }
        for i in 0..3 {
            for j in i + 1..3 {
                if self.class_means[i] == self.class_means[j] {
                    return bad(format!("class means {i} and {j} coincide"));
                }
            }
        }
        Ok(())
    }
}

/// Samples `class_mean + N(0, (0.1 * noise_std)^2 I)`, labels assigned
/// round-robin so class counts differ by at most one.
///
/// `noise_std = 0` is accepted and reproduces the class means exactly.
pub fn generate_synthetic_dataset(
    spec: &SyntheticDatasetSpec,
) -> Result<LabeledDataset, ProbeError> {
    spec.validate()?;
    let sigma = spec.noise_std * NOISE_COMPONENT_SCALE;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let samples = (0..spec.num_samples)
        .map(|i| {
            let class = GestureClass::ALL[i % 3];
            // Rounded through f32 so datasets survive the text file format.
            let values: Vec<f64> = spec.class_means[class.index()]
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    f64::from((m + sigma * z) as f32)
                })
                .collect();
            Embedding::new(values, spec.embed_dim).map(|e| (e, class))
        })
        .collect::<Result<Vec<_>, _>>()?;
    LabeledDataset::new(
        samples,
        format!(
            "synthetic n={} dim={} noise={} seed={}",
            spec.num_samples, spec.embed_dim, spec.noise_std, spec.seed
        ),
    )
}
