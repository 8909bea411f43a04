//! AdamW: Adam with bias-corrected moments and weight decay decoupled from
//! the gradient term.

use super::ProbeError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl AdamWState {
    pub fn new(num_params: usize) -> Self {
        AdamWState {
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step_count: 0,
        }
    }
}

/// One update:
/// `p <- p - lr*wd*p - lr * m_hat / (sqrt(v_hat) + eps)`.
///
/// Gradients are checked before anything is modified, so a rejected step
/// leaves both the parameters and the state untouched.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamWState,
    cfg: &AdamW,
) -> Result<(), ProbeError> {
    if grads.len() != params.len()
        || state.first_moment.len() != params.len()
        || state.second_moment.len() != params.len()
    {
        return Err(ProbeError::ShapeMismatch(format!(
            "params {}, grads {}, moments {}/{}",
            params.len(),
            grads.len(),
            state.first_moment.len(),
            state.second_moment.len()
        )));
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(ProbeError::NonFinite {
            what: "gradient",
            index,
        });
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = cfg.learning_rate * cfg.weight_decay;

    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= decay * *p + cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn no_decay() -> AdamW {
        AdamW {
            weight_decay: 0.0,
            ..AdamW::default()
        }
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut p = vec![1.0, -2.0, 0.5];
        let orig = p.clone();
        let mut st = AdamWState::new(3);
        adamw_step(&mut p, &[0.0; 3], &mut st, &no_decay()).unwrap();
        assert_eq!(p, orig);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_closed_form() {
        // m_hat = v_hat = 1 on step one, so p' = 1 - lr / (1 + eps).
        let mut p = vec![1.0];
        let mut st = AdamWState::new(1);
        adamw_step(&mut p, &[1.0], &mut st, &no_decay()).unwrap();
        let expected = 1.0 - 1e-3 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-12);
        // 40-digit reference.
        assert!((p[0] - 0.999_000_000_01).abs() < 1e-12);
    }

    #[test]
    fn decay_term_is_additive() {
        let mut plain = vec![1.0];
        let mut decayed = vec![1.0];
        let mut s1 = AdamWState::new(1);
        let mut s2 = AdamWState::new(1);
        adamw_step(&mut plain, &[1.0], &mut s1, &no_decay()).unwrap();
        adamw_step(&mut decayed, &[1.0], &mut s2, &AdamW::default()).unwrap();
        assert!(((plain[0] - decayed[0]) - 1e-3 * 1e-2 * 1.0).abs() < 1e-15);
        assert_eq!(s1, s2);
    }

    #[test]
    fn rejects_nan_and_shape_errors_without_mutation() {
        let mut p = vec![1.0, 2.0];
        let mut st = AdamWState::new(2);
        let err = adamw_step(&mut p, &[0.0, f64::NAN], &mut st, &AdamW::default()).unwrap_err();
        assert!(matches!(err, ProbeError::NonFinite { index: 1, .. }));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(st.step_count, 0);
        assert!(adamw_step(&mut p, &[0.0], &mut st, &AdamW::default()).is_err());
    }

    proptest! {
        #[test]
        fn second_moment_nonnegative_and_steps_count(
            grads in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 4), 1..20)
        ) {
            let mut p = vec![0.3; 4];
            let mut st = AdamWState::new(4);
            for (i, g) in grads.iter().enumerate() {
                adamw_step(&mut p, g, &mut st, &AdamW::default()).unwrap();
                prop_assert_eq!(st.step_count, i as u64 + 1);
                prop_assert!(st.second_moment.iter().all(|&v| v >= 0.0));
            }
        }
    }
}
