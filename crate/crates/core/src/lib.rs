//! Gesture-driven multimodal control for a small acoustic robot swarm.
//!
//! The crate is organised around the data flow of the coordinator service:
//!
//! - [`probe`]: linear classifier over frozen embeddings, its AdamW trainer,
//!   evaluation and the `ACPB` checkpoint format.
//! - [`embeddings`]: embedding providers (passthrough, deterministic
//!   projection, external sidecar) and the synthetic dataset generator.
//! - [`wire`]: UDP codecs for frames, poses, commands and acks plus frame
//!   reassembly.
//! - [`coordinator`]: confidence gating, gesture to modality mapping, follow
//!   control and collision avoidance, driven by a fixed-rate tick.
//! - [`telemetry`]: stage-decomposed latency records and switching accuracy.
//! - [`sim`]: deterministic virtual-clock world with simulated cameras,
//!   robots and tracking.
//! - [`operator`] and [`live`]: the newline-delimited JSON operator API and
//!   the socket-backed server loop.

// `!(x >= lo)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coordinator;
pub mod embeddings;
pub mod live;
pub mod operator;
pub mod probe;
pub mod sim;
pub mod telemetry;
pub mod wire;

pub use coordinator::{Coordinator, CoordinatorConfig};
pub use probe::{Embedding, GestureClass, LinearProbe};
pub use wire::Modality;
