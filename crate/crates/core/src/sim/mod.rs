//! Deterministic stand-in for the hardware: scripted cameras, unicycle
//! robots that ack modality commands, and a synthetic tracking feed, all on
//! one virtual clock.

mod robot;
mod scenario;
mod world;

use thiserror::Error;

pub use robot::{step_robot, SimRobot};
pub use scenario::{
    ConfidenceMode, DelaySpec, Delays, FlipProb, GestureBlock, GestureEvent, NoiseModel,
    PoseDropout, RobotSpec, Scenario, TrialSpec, UserPath,
};
pub use world::{
    run_scenario, trajectory_csv, EntityKind, GestureInput, SimResult, TrajectoryRow, World,
    TRAJECTORY_CSV_HEADER,
};

use crate::coordinator::{ConfigError, CoordinatorConfig, CoordinatorError, Pairing};
use crate::embeddings::{generate_synthetic_dataset, SyntheticDatasetSpec};
use crate::probe::{train, LinearProbe, ProbeError, TrainConfig};
use crate::wire::WireError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("wire error inside the simulator: {0}")]
    Wire(#[from] WireError),
}

/// Scenarios shipped with the crate, by name.
pub const BUNDLED_SCENARIOS: &[(&str, &str)] = &[
    ("table1", include_str!("../../scenarios/table1.toml")),
    ("latency50", include_str!("../../scenarios/latency50.toml")),
    ("crossing", include_str!("../../scenarios/crossing.toml")),
    ("follow", include_str!("../../scenarios/follow.toml")),
    ("dropout", include_str!("../../scenarios/dropout.toml")),
    (
        "interactive",
        include_str!("../../scenarios/interactive.toml"),
    ),
];

/// Looks up a bundled scenario by name, with or without `.toml`.
pub fn bundled_scenario(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".toml").unwrap_or(name);
    BUNDLED_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

/// Two users, two robots, two cameras: user `100 + k` pairs with robot `k`
/// and camera `k`.
pub fn default_sim_config() -> CoordinatorConfig {
    CoordinatorConfig {
        pairing: vec![Pairing::new(101, 1, 1), Pairing::new(102, 2, 2)],
        ..CoordinatorConfig::default()
    }
}

/// Samples and embeddings used when no checkpoint is supplied.
pub const REFERENCE_SAMPLES: usize = 790;
pub const REFERENCE_NOISE: f64 = 0.35;

/// Trains the probe the simulator uses by default: 790 synthetic samples
/// at noise 0.35 with the default training recipe.
pub fn train_reference_probe(embed_dim: usize, seed: u64) -> Result<LinearProbe, ProbeError> {
    let spec =
        SyntheticDatasetSpec::orthogonal(REFERENCE_SAMPLES, embed_dim, REFERENCE_NOISE, seed);
    let dataset = generate_synthetic_dataset(&spec)?;
    let cfg = TrainConfig {
        embed_dim,
        seed,
        ..TrainConfig::default()
    };
    Ok(train(&dataset, &cfg)?.0)
}
