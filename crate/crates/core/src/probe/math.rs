//! Numerically stable softmax and cross-entropy.

use super::ProbeError;

fn check_finite(logits: &[f64]) -> Result<(), ProbeError> {
    if logits.is_empty() {
        return Err(ProbeError::EmptyInput("logits"));
    }
    match logits.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(ProbeError::NonFinite {
            what: "logits",
            index,
        }),
        None => Ok(()),
    }
}

/// `ln(sum(exp(x)))` evaluated with max-subtraction.
pub fn log_sum_exp(logits: &[f64]) -> Result<f64, ProbeError> {
    check_finite(logits)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>, ProbeError> {
    check_finite(logits)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// `-log(softmax(logits)[label])`, computed as `logsumexp(logits) - logits[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64, ProbeError> {
    if label >= logits.len() {
        return Err(ProbeError::InvalidLabel {
            label,
            num_classes: logits.len(),
        });
    }
    let lse = log_sum_exp(logits)?;
    // Rounding can leave a tiny negative value in the saturated case.
    Ok((lse - logits[label]).max(0.0))
}

/// Gradient of [`cross_entropy`] with respect to the logits:
/// `softmax(logits) - onehot(label)`.
pub fn cross_entropy_grad(logits: &[f64], label: usize) -> Result<Vec<f64>, ProbeError> {
    if label >= logits.len() {
        return Err(ProbeError::InvalidLabel {
            label,
            num_classes: logits.len(),
        });
    }
    let mut grad = softmax(logits)?;
    grad[label] -= 1.0;
    Ok(grad)
}
