use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::follow::FollowParams;
use super::gate::validate_gate_params;
use crate::embeddings::{EmbeddingProvider, EmbeddingProviderKind, SidecarClient};
use crate::probe::DEFAULT_EMBED_DIM;
use crate::wire::ReassemblyConfig;

/// Env var consulted when no config path is given explicitly.
pub const CONFIG_ENV: &str = "ACOUSTO_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// One user, their robot and the camera watching their hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pairing {
    pub user_marker_id: u16,
    pub robot_id: u16,
    pub camera_id: u16,
    /// Tracking marker on the robot; defaults to the robot id.
    #[serde(default)]
    pub robot_marker_id: Option<u16>,
}

impl Pairing {
    pub fn new(user_marker_id: u16, robot_id: u16, camera_id: u16) -> Self {
        Pairing {
            user_marker_id,
            robot_id,
            camera_id,
            robot_marker_id: None,
        }
    }

    pub fn robot_marker(&self) -> u16 {
        self.robot_marker_id.unwrap_or(self.robot_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ports {
    pub bind: String,
    pub frame: u16,
    pub pose: u16,
    pub command: u16,
    pub ack: u16,
    pub operator: u16,
    /// Where command datagrams are sent.
    pub robot_host: String,
}

impl Default for Ports {
    fn default() -> Self {
        Ports {
            bind: "127.0.0.1".into(),
            frame: crate::wire::DEFAULT_FRAME_PORT,
            pose: crate::wire::DEFAULT_POSE_PORT,
            command: crate::wire::DEFAULT_COMMAND_PORT,
            ack: crate::wire::DEFAULT_ACK_PORT,
            operator: 9410,
            robot_host: "127.0.0.1".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: EmbeddingProviderKind,
    pub embed_dim: usize,
    pub sidecar_addr: Option<String>,
    pub sidecar_timeout_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: EmbeddingProviderKind::Passthrough,
            embed_dim: DEFAULT_EMBED_DIM,
            sidecar_addr: None,
            sidecar_timeout_ms: 2_000,
        }
    }
}

impl ProviderConfig {
    pub fn build(&self) -> Result<EmbeddingProvider, ConfigError> {
        let dim = self.embed_dim;
        Ok(match self.kind {
            EmbeddingProviderKind::Passthrough => EmbeddingProvider::Passthrough { dim },
            EmbeddingProviderKind::DeterministicProjection => {
                EmbeddingProvider::DeterministicProjection { dim }
            }
            EmbeddingProviderKind::Sidecar => {
                let addr = self.sidecar_addr.clone().ok_or_else(|| {
                    ConfigError::Invalid(
                        "provider.sidecar_addr is required for the sidecar provider".into(),
                    )
                })?;
                EmbeddingProvider::Sidecar(SidecarClient::new(
                    addr,
                    dim,
                    Duration::from_millis(self.sidecar_timeout_ms),
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoordinatorConfig {
    pub pairing: Vec<Pairing>,
    pub threshold: f64,
    pub debounce_n: u32,
    pub tick_hz: f64,
    pub pose_stale_ms: u64,
    pub collision_horizon_s: f64,
    /// A robot held by collision avoidance this long makes its higher-id
    /// blockers back off.
    pub deadlock_yield_s: f64,
    /// Unacknowledged commands older than this are logged as incomplete.
    pub ack_timeout_ms: u64,
    pub checkpoint: Option<PathBuf>,
    pub follow: FollowParams,
    pub ports: Ports,
    pub provider: ProviderConfig,
    pub reassembly: ReassemblyConfig,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        CoordinatorConfig {
            pairing: Vec::new(),
            threshold: 0.6,
            debounce_n: 2,
            tick_hz: 20.0,
            pose_stale_ms: 300,
            collision_horizon_s: 0.1,
            deadlock_yield_s: 1.0,
            ack_timeout_ms: 10_000,
            checkpoint: None,
            follow: FollowParams::default(),
            ports: Ports::default(),
            provider: ProviderConfig::default(),
            reassembly: ReassemblyConfig::default(),
        }
    }
}

impl CoordinatorConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: CoordinatorConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative `checkpoint` is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(ckpt), Some(dir)) = (&cfg.checkpoint, path.parent()) {
            if ckpt.is_relative() {
                cfg.checkpoint = Some(dir.join(ckpt));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn tick_period_us(&self) -> u64 {
        (1e6 / self.tick_hz).round() as u64
    }

    pub fn pairing_for_camera(&self, camera_id: u16) -> Option<&Pairing> {
        self.pairing.iter().find(|p| p.camera_id == camera_id)
    }

    pub fn pairing_for_robot(&self, robot_id: u16) -> Option<&Pairing> {
        self.pairing.iter().find(|p| p.robot_id == robot_id)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.pairing.is_empty() {
            return invalid("at least one [[pairing]] is required".into());
        }
        let mut robots = BTreeSet::new();
        let mut cameras = BTreeSet::new();
        let mut markers = BTreeSet::new();
        for p in &self.pairing {
            if !robots.insert(p.robot_id) {
                return invalid(format!(
                    "robot {} appears in more than one pairing",
                    p.robot_id
                ));
            }
            if !cameras.insert(p.camera_id) {
                return invalid(format!(
                    "camera {} appears in more than one pairing",
                    p.camera_id
                ));
            }
            for m in [p.user_marker_id, p.robot_marker()] {
                if !markers.insert(m) {
                    return invalid(format!("marker {m} is used more than once"));
                }
            }
        }
        validate_gate_params(self.threshold, self.debounce_n)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.tick_hz.is_finite() && self.tick_hz > 0.0 && self.tick_hz <= 1000.0) {
            return invalid(format!(
                "tick_hz must lie in (0, 1000], got {}",
                self.tick_hz
            ));
        }
        if self.pose_stale_ms == 0 {
            return invalid("pose_stale_ms must be positive".into());
        }
        if !(self.collision_horizon_s.is_finite() && self.collision_horizon_s > 0.0) {
            return invalid("collision_horizon_s must be positive".into());
        }
        if !(self.deadlock_yield_s.is_finite() && self.deadlock_yield_s > 0.0) {
            return invalid("deadlock_yield_s must be positive".into());
        }
        if self.provider.embed_dim == 0 {
            return invalid("provider.embed_dim must be positive".into());
        }
        if self.reassembly.max_in_flight == 0 || self.reassembly.timeout_us == 0 {
            return invalid("reassembly limits must be positive".into());
        }
        self.follow.validate().map_err(ConfigError::Invalid)
    }
}
