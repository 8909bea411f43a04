use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ProviderError;
use crate::probe::Embedding;

/// 64-bit FNV-1a of the payload.
pub fn payload_hash(payload: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(payload);
    h.finish()
}

/// Maps a payload to a unit vector drawn from a ChaCha stream keyed by the
/// payload hash. Identical payloads always give identical embeddings.
pub fn project_frame(payload: &[u8], embed_dim: usize) -> Result<Embedding, ProviderError> {
    if payload.is_empty() {
        return Err(ProviderError::EmptyPayload);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(payload_hash(payload));
    let raw: Vec<f64> = (0..embed_dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let values = raw.iter().map(|v| v / norm).collect();
    Ok(Embedding::new(values, embed_dim)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn cosine(a: &Embedding, b: &Embedding) -> f64 {
        let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
        let na: f64 = a.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn identical_payloads_identical_embeddings() {
        let a = project_frame(b"frame-1", 512).unwrap();
        let b = project_frame(b"frame-1", 512).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_byte_change_decorrelates() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let len = rng.random_range(1..256);
            let a: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            let mut b = a.clone();
            let i = rng.random_range(0..len);
            b[i] ^= 1 << rng.random_range(0..8);
            let c = cosine(
                &project_frame(&a, 512).unwrap(),
                &project_frame(&b, 512).unwrap(),
            );
            assert!(c < 0.99, "cosine {c}");
        }
    }

    #[test]
    fn empty_payload_rejected() {
        assert!(matches!(
            project_frame(&[], 8),
            Err(ProviderError::EmptyPayload)
        ));
    }

    proptest! {
        #[test]
        fn output_has_unit_norm(payload in prop::collection::vec(any::<u8>(), 1..512)) {
            let e = project_frame(&payload, 512).unwrap();
            let n: f64 = e.values().iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-9);
        }
    }
}
