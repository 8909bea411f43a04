//! Central server logic: confidence gating with debounce, gesture to
//! modality mapping, the follow controller and priority-stop collision
//! avoidance, tied together by a fixed-rate tick.

mod collision;
mod config;
mod engine;
mod follow;
mod gate;

pub use collision::{avoid_collisions, yield_to_blocked};
pub use config::{ConfigError, CoordinatorConfig, Pairing, Ports, ProviderConfig, CONFIG_ENV};
pub use engine::{
    Coordinator, CoordinatorError, CoordinatorEvent, CoordinatorSnapshot, Counters,
    InferenceTiming, RobotSnapshot, RobotState, TickOutput,
};
pub use follow::{follow_control, wrap_angle, FollowParams, PlanarPose};
pub use gate::{classify_and_gate, validate_gate_params, Gate, GateDecision};

use crate::probe::GestureClass;
use crate::wire::Modality;

pub fn map_gesture_to_modality(g: GestureClass) -> Modality {
    match g {
        GestureClass::Palm => Modality::Haptics,
        GestureClass::Fist => Modality::Audio,
        GestureClass::ThumbsUp => Modality::Levitation,
    }
}
