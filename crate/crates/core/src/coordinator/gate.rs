use serde::Serialize;

use super::map_gesture_to_modality;
use crate::probe::{Embedding, GestureClass, LinearProbe, Prediction, ProbeError};
use crate::wire::Modality;

/// Debounce state for one camera and the active modality of its paired robot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Default)]
pub struct Gate {
    pub last_predicted: Option<GestureClass>,
    pub consecutive_count: u32,
    pub active_modality: Modality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum GateDecision {
    /// Below the confidence threshold; the streak is reset.
    Rejected,
    /// Confident, but the streak has not reached the debounce length.
    Pending { class: GestureClass, streak: u32 },
    /// Confirmed gesture whose modality is already active.
    Held {
        class: GestureClass,
        modality: Modality,
    },
    /// Confirmed gesture that switches the robot to a new modality.
    Transition {
        class: GestureClass,
        from: Modality,
        to: Modality,
    },
}

impl GateDecision {
    pub fn transition(&self) -> Option<Modality> {
        match self {
            GateDecision::Transition { to, .. } => Some(*to),
            _ => None,
        }
    }

    pub fn is_confirmed(&self) -> bool {
        matches!(
            self,
            GateDecision::Held { .. } | GateDecision::Transition { .. }
        )
    }
}

pub fn validate_gate_params(threshold: f64, debounce_n: u32) -> Result<(), ProbeError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ProbeError::InvalidConfig(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    if debounce_n == 0 {
        return Err(ProbeError::InvalidConfig(
            "debounce_n must be at least 1".into(),
        ));
    }
    Ok(())
}

impl Gate {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds one classification through the threshold and debounce logic.
    pub fn observe(
        &mut self,
        class: GestureClass,
        confidence: f64,
        threshold: f64,
        debounce_n: u32,
    ) -> GateDecision {
        if !(confidence >= threshold) {
            self.consecutive_count = 0;
            return GateDecision::Rejected;
        }
        if self.last_predicted == Some(class) {
            self.consecutive_count = self.consecutive_count.saturating_add(1);
        } else {
            self.last_predicted = Some(class);
            self.consecutive_count = 1;
        }
        if self.consecutive_count < debounce_n {
            return GateDecision::Pending {
                class,
                streak: self.consecutive_count,
            };
        }
        let modality = map_gesture_to_modality(class);
        if modality == self.active_modality {
            GateDecision::Held { class, modality }
        } else {
            let from = self.active_modality;
            self.active_modality = modality;
            GateDecision::Transition {
                class,
                from,
                to: modality,
            }
        }
    }
}

/// Runs the probe on `embedding` and feeds the top class into `gate`.
pub fn classify_and_gate(
    embedding: &Embedding,
    probe: &LinearProbe,
    gate: &mut Gate,
    threshold: f64,
    debounce_n: u32,
) -> Result<(Prediction, GateDecision), ProbeError> {
    validate_gate_params(threshold, debounce_n)?;
    let prediction = probe.predict(embedding)?;
    let class = GestureClass::from_index(prediction.class_index).ok_or_else(|| {
        ProbeError::ShapeMismatch(format!(
            "probe predicted class {} outside the gesture set",
            prediction.class_index
        ))
    })?;
    let decision = gate.observe(class, prediction.confidence, threshold, debounce_n);
    Ok((prediction, decision))
}
