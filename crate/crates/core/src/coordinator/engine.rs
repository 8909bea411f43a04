use std::collections::{BTreeMap, VecDeque};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use super::collision::{avoid_collisions, yield_to_blocked};
use super::config::{CoordinatorConfig, Pairing};
use super::follow::{follow_control, PlanarPose};
use super::gate::{classify_and_gate, validate_gate_params, Gate, GateDecision};
use crate::embeddings::EmbeddingProvider;
use crate::probe::{Embedding, GestureClass, LinearProbe};
use crate::telemetry::{LatencyRecord, TelemetrySink};
use crate::wire::{AckMessage, CommandBody, CommandMessage, CompletedFrame, Modality, PoseMessage};

#[derive(Debug, Error, PartialEq)]
pub enum CoordinatorError {
    #[error("probe expects {probe}-dimensional embeddings but the provider yields {provider}")]
    DimensionMismatch { probe: usize, provider: usize },
    #[error("probe has {0} classes, expected 3")]
    ClassCount(usize),
    #[error("unknown camera {0}")]
    UnknownCamera(u16),
    #[error("unknown robot {0}")]
    UnknownRobot(u16),
    #[error("{0}")]
    InvalidParameter(String),
}

/// How inference start/end stamps are produced.
pub enum InferenceTiming {
    /// Wall-clock duration of the embed and forward pass, offset from the
    /// tick timestamp.
    Measured,
    /// Inference starts at the tick timestamp and lasts a sampled duration
    /// in microseconds. Used on the virtual clock.
    Simulated(Box<dyn FnMut() -> u64 + Send>),
}

impl std::fmt::Debug for InferenceTiming {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InferenceTiming::Measured => f.write_str("Measured"),
            InferenceTiming::Simulated(_) => f.write_str("Simulated"),
        }
    }
}

#[derive(Debug, Clone)]
struct PendingAck {
    modality: Modality,
    record: LatencyRecord,
}

#[derive(Debug, Clone)]
pub struct RobotState {
    pub robot_id: u16,
    pub last_pose: Option<PoseMessage>,
    pub pose_rx_us: Option<u64>,
    /// Last modality the robot acknowledged.
    pub active_modality: Modality,
    pub last_cmd_seq: u32,
    pub last_velocity: (f64, f64),
    pub safe_stopped: bool,
    /// Consecutive ticks collision avoidance has zeroed a nonzero proposal.
    pub held_ticks: u32,
    pending: BTreeMap<u32, PendingAck>,
}

impl RobotState {
    fn new(robot_id: u16) -> Self {
        RobotState {
            robot_id,
            last_pose: None,
            pose_rx_us: None,
            active_modality: Modality::Idle,
            last_cmd_seq: 0,
            last_velocity: (0.0, 0.0),
            safe_stopped: true,
            held_ticks: 0,
            pending: BTreeMap::new(),
        }
    }

    pub fn pending_acks(&self) -> Vec<u32> {
        self.pending.keys().copied().collect()
    }

    fn next_seq(&mut self) -> u32 {
        self.last_cmd_seq = self.last_cmd_seq.checked_add(1).expect("cmd_seq exhausted");
        self.last_cmd_seq
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub frames: u64,
    pub unpaired_frames: u64,
    pub provider_errors: u64,
    pub rejected: u64,
    pub transitions: u64,
    pub modality_commands: u64,
    pub velocity_commands: u64,
    pub safe_stops: u64,
    pub acks: u64,
    pub unknown_acks: u64,
    pub ack_timeouts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum CoordinatorEvent {
    Classification {
        camera_id: u16,
        robot_id: u16,
        frame_seq: u32,
        class: GestureClass,
        confidence: f64,
        ts_us: u64,
        decision: GateDecision,
    },
    Command {
        robot_id: u16,
        cmd_seq: u32,
        kind: &'static str,
        payload: Modality,
        ts_us: u64,
        camera_id: u16,
        frame_seq: u32,
    },
    Latency {
        cmd_seq: u32,
        record: LatencyRecord,
    },
    FrameSkipped {
        camera_id: u16,
        frame_seq: u32,
        reason: String,
    },
    SafeStop {
        robot_id: u16,
        ts_us: u64,
    },
}

#[derive(Debug, Default)]
pub struct TickOutput {
    pub commands: Vec<CommandMessage>,
    pub events: Vec<CoordinatorEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobotSnapshot {
    pub robot_id: u16,
    pub camera_id: u16,
    pub user_marker_id: u16,
    pub pose: Option<PlanarPose>,
    pub user_pose: Option<PlanarPose>,
    pub pose_age_ms: Option<f64>,
    pub active_modality: Modality,
    pub commanded_modality: Modality,
    pub last_cmd_seq: u32,
    pub pending_acks: Vec<u32>,
    pub v_linear: f64,
    pub v_angular: f64,
    pub safe_stopped: bool,
    pub gate: Gate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinatorSnapshot {
    pub ts_us: u64,
    pub threshold: f64,
    pub debounce_n: u32,
    pub robots: Vec<RobotSnapshot>,
    pub counters: Counters,
}

enum FrameInput {
    Raw(CompletedFrame),
    Embedded {
        camera_id: u16,
        frame_seq: u32,
        capture_ts_us: u64,
        completed_at_us: u64,
        embedding: Embedding,
    },
}

/// Single-writer control loop: owns gate and robot state, turns completed
/// frames and poses into commands once per tick.
pub struct Coordinator {
    config: CoordinatorConfig,
    probe: LinearProbe,
    provider: EmbeddingProvider,
    timing: InferenceTiming,
    sink: TelemetrySink,
    gates: BTreeMap<u16, Gate>,
    robots: BTreeMap<u16, RobotState>,
    poses: BTreeMap<u16, (PoseMessage, u64)>,
    inbox: VecDeque<FrameInput>,
    counters: Counters,
    next_trial_id: u64,
}

impl Coordinator {
    pub fn new(
        config: CoordinatorConfig,
        probe: LinearProbe,
        provider: EmbeddingProvider,
        timing: InferenceTiming,
        sink: TelemetrySink,
    ) -> Result<Self, CoordinatorError> {
        config
            .validate()
            .map_err(|e| CoordinatorError::InvalidParameter(e.to_string()))?;
        if probe.num_classes() != 3 {
            return Err(CoordinatorError::ClassCount(probe.num_classes()));
        }
        if probe.embed_dim() != provider.dim() {
            return Err(CoordinatorError::DimensionMismatch {
                probe: probe.embed_dim(),
                provider: provider.dim(),
            });
        }
        let gates = config
            .pairing
            .iter()
            .map(|p| (p.camera_id, Gate::new()))
            .collect();
        let robots = config
            .pairing
            .iter()
            .map(|p| (p.robot_id, RobotState::new(p.robot_id)))
            .collect();
        Ok(Coordinator {
            config,
            probe,
            provider,
            timing,
            sink,
            gates,
            robots,
            poses: BTreeMap::new(),
            inbox: VecDeque::new(),
            counters: Counters::default(),
            next_trial_id: 0,
        })
    }

    pub fn config(&self) -> &CoordinatorConfig {
        &self.config
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn sink(&self) -> &TelemetrySink {
        &self.sink
    }

    pub fn robot(&self, robot_id: u16) -> Option<&RobotState> {
        self.robots.get(&robot_id)
    }

    pub fn gate(&self, camera_id: u16) -> Option<&Gate> {
        self.gates.get(&camera_id)
    }

    pub fn ingest_pose(&mut self, pose: PoseMessage, rx_us: u64) {
        self.poses.insert(pose.marker_id, (pose, rx_us));
    }

    pub fn ingest_frame(&mut self, frame: CompletedFrame) {
        self.inbox.push_back(FrameInput::Raw(frame));
    }

    /// Queues an already-embedded frame, bypassing the provider.
    pub fn ingest_embedding(
        &mut self,
        camera_id: u16,
        frame_seq: u32,
        capture_ts_us: u64,
        completed_at_us: u64,
        embedding: Embedding,
    ) -> Result<(), CoordinatorError> {
        if !self.gates.contains_key(&camera_id) {
            return Err(CoordinatorError::UnknownCamera(camera_id));
        }
        if embedding.dim() != self.probe.embed_dim() {
            return Err(CoordinatorError::DimensionMismatch {
                probe: self.probe.embed_dim(),
                provider: embedding.dim(),
            });
        }
        self.inbox.push_back(FrameInput::Embedded {
            camera_id,
            frame_seq,
            capture_ts_us,
            completed_at_us,
            embedding,
        });
        Ok(())
    }

    /// Completes the latency record of an acknowledged modality command.
    pub fn ingest_ack(&mut self, ack: &AckMessage, rx_us: u64) -> Option<CoordinatorEvent> {
        let Some(pending) = self
            .robots
            .get_mut(&ack.robot_id)
            .and_then(|r| r.pending.remove(&ack.cmd_seq))
        else {
            self.counters.unknown_acks += 1;
            return None;
        };
        let robot = self.robots.get_mut(&ack.robot_id).expect("checked above");
        robot.active_modality = pending.modality;
        self.counters.acks += 1;
        let mut record = pending.record;
        record.t_ack_us = Some(rx_us.max(record.t_cmd_sent_us.unwrap_or(0)));
        self.sink.push_latency(record);
        Some(CoordinatorEvent::Latency {
            cmd_seq: ack.cmd_seq,
            record,
        })
    }

    pub fn set_threshold(&mut self, value: f64) -> Result<(), CoordinatorError> {
        validate_gate_params(value, self.config.debounce_n)
            .map_err(|e| CoordinatorError::InvalidParameter(e.to_string()))?;
        self.config.threshold = value;
        Ok(())
    }

    /// Re-pairs `camera_id` (and its user) with `robot_id`. The robot's
    /// previous camera takes over the displaced robot so pairings stay 1:1.
    pub fn pair_override(&mut self, camera_id: u16, robot_id: u16) -> Result<(), CoordinatorError> {
        let cam_idx = self
            .config
            .pairing
            .iter()
            .position(|p| p.camera_id == camera_id)
            .ok_or(CoordinatorError::UnknownCamera(camera_id))?;
        let robot_idx = self
            .config
            .pairing
            .iter()
            .position(|p| p.robot_id == robot_id)
            .ok_or(CoordinatorError::UnknownRobot(robot_id))?;
        if cam_idx == robot_idx {
            return Ok(());
        }
        let pairs = &mut self.config.pairing;
        let (a, b) = (pairs[cam_idx], pairs[robot_idx]);
        pairs[cam_idx] = Pairing {
            robot_id: b.robot_id,
            robot_marker_id: b.robot_marker_id,
            ..a
        };
        pairs[robot_idx] = Pairing {
            robot_id: a.robot_id,
            robot_marker_id: a.robot_marker_id,
            ..b
        };
        // Each gate tracks the modality of the robot now behind it.
        for p in pairs.iter() {
            let acked = self.robots[&p.robot_id].active_modality;
            let gate = self.gates.get_mut(&p.camera_id).expect("gate per camera");
            *gate = Gate {
                active_modality: acked,
                ..Gate::new()
            };
        }
        Ok(())
    }

    fn fresh_pose(&self, marker: u16, now_us: u64) -> Option<PlanarPose> {
        let (pose, rx) = self.poses.get(&marker)?;
        let age = now_us.saturating_sub(*rx);
        (age < self.config.pose_stale_ms * 1000).then(|| PlanarPose::from(pose))
    }

    fn process_frame(
        &mut self,
        input: FrameInput,
        now_us: u64,
        tick_start: Instant,
        out: &mut TickOutput,
    ) {
        self.counters.frames += 1;
        let (camera_id, frame_seq, capture, completed) = match &input {
            FrameInput::Raw(f) => (f.camera_id, f.frame_seq, f.capture_ts_us, f.completed_at_us),
            FrameInput::Embedded {
                camera_id,
                frame_seq,
                capture_ts_us,
                completed_at_us,
                ..
            } => (*camera_id, *frame_seq, *capture_ts_us, *completed_at_us),
        };
        let Some(pairing) = self.config.pairing_for_camera(camera_id).copied() else {
            self.counters.unpaired_frames += 1;
            out.events.push(CoordinatorEvent::FrameSkipped {
                camera_id,
                frame_seq,
                reason: "camera is not paired".into(),
            });
            return;
        };

        let work_start = Instant::now();
        let embedded = match input {
            FrameInput::Raw(f) => self.provider.embed(&f.payload).map_err(|e| e.to_string()),
            FrameInput::Embedded { embedding, .. } => Ok(embedding),
        };
        let gate = self.gates.get_mut(&camera_id).expect("gate per camera");
        let (threshold, debounce_n) = (self.config.threshold, self.config.debounce_n);
        let classified = embedded.and_then(|e| {
            classify_and_gate(&e, &self.probe, gate, threshold, debounce_n)
                .map_err(|e| e.to_string())
        });
        let (infer_start, infer_end) = match &mut self.timing {
            InferenceTiming::Measured => {
                let offset = work_start.duration_since(tick_start).as_micros() as u64;
                let took = work_start.elapsed().as_micros() as u64;
                (now_us + offset, now_us + offset + took)
            }
            InferenceTiming::Simulated(sample) => (now_us, now_us + sample()),
        };
        let (prediction, decision) = match classified {
            Ok(v) => v,
            Err(reason) => {
                self.counters.provider_errors += 1;
                out.events.push(CoordinatorEvent::FrameSkipped {
                    camera_id,
                    frame_seq,
                    reason,
                });
                return;
            }
        };
        let class = GestureClass::from_index(prediction.class_index).expect("gated class");
        out.events.push(CoordinatorEvent::Classification {
            camera_id,
            robot_id: pairing.robot_id,
            frame_seq,
            class,
            confidence: prediction.confidence,
            ts_us: infer_end,
            decision,
        });
        if decision == GateDecision::Rejected {
            self.counters.rejected += 1;
        }
        let Some(modality) = decision.transition() else {
            return;
        };
        self.counters.transitions += 1;

        let robot = self
            .robots
            .get_mut(&pairing.robot_id)
            .expect("robot per pairing");
        let cmd_seq = robot.next_seq();
        let record = LatencyRecord {
            trial_id: self.next_trial_id,
            camera_id,
            robot_id: pairing.robot_id,
            t_capture_us: Some(capture),
            t_frame_complete_us: Some(completed),
            t_infer_start_us: Some(infer_start),
            t_infer_end_us: Some(infer_end),
            t_cmd_sent_us: Some(infer_end),
            t_ack_us: None,
        };
        self.next_trial_id += 1;
        robot
            .pending
            .insert(cmd_seq, PendingAck { modality, record });
        self.counters.modality_commands += 1;
        self.sink.note_command();
        out.commands.push(CommandMessage {
            robot_id: pairing.robot_id,
            cmd_seq,
            ts_us: infer_end,
            body: CommandBody::Modality(modality),
        });
        out.events.push(CoordinatorEvent::Command {
            robot_id: pairing.robot_id,
            cmd_seq,
            kind: "modality",
            payload: modality,
            ts_us: infer_end,
            camera_id,
            frame_seq,
        });
    }

    fn expire_pending(&mut self, now_us: u64) {
        let limit = self.config.ack_timeout_ms * 1000;
        for robot in self.robots.values_mut() {
            let expired: Vec<u32> = robot
                .pending
                .iter()
                .filter(|(_, p)| now_us.saturating_sub(p.record.t_cmd_sent_us.unwrap_or(0)) > limit)
                .map(|(seq, _)| *seq)
                .collect();
            for seq in expired {
                let p = robot.pending.remove(&seq).expect("listed");
                self.counters.ack_timeouts += 1;
                self.sink.push_latency(p.record);
            }
        }
    }

    /// One control period: classify queued frames, then issue a velocity
    /// command to every paired robot.
    pub fn tick(&mut self, now_us: u64) -> TickOutput {
        let tick_start = Instant::now();
        let mut out = TickOutput::default();
        while let Some(input) = self.inbox.pop_front() {
            self.process_frame(input, now_us, tick_start, &mut out);
        }
        self.expire_pending(now_us);

        let mut proposed = BTreeMap::new();
        let mut poses = BTreeMap::new();
        let mut stale = Vec::new();
        for p in &self.config.pairing {
            let robot_pose = self.fresh_pose(p.robot_marker(), now_us);
            let user_pose = self.fresh_pose(p.user_marker_id, now_us);
            match (robot_pose, user_pose) {
                (Some(r), Some(u)) => {
                    proposed.insert(p.robot_id, follow_control(&r, &u, &self.config.follow));
                    poses.insert(p.robot_id, r);
                }
                _ => stale.push(p.robot_id),
            }
        }
        let (follow, horizon) = (&self.config.follow, self.config.collision_horizon_s);
        let mut commanded = avoid_collisions(&proposed, &poses, follow, horizon);
        let yield_after = (self.config.deadlock_yield_s * self.config.tick_hz).ceil() as u32;
        let mut deadlocked = Vec::new();
        for (id, robot) in self.robots.iter_mut() {
            let held = matches!(
                (proposed.get(id), commanded.get(id)),
                (Some(p), Some(c)) if p.0 != 0.0 && c.0 == 0.0
            );
            robot.held_ticks = if held { robot.held_ticks + 1 } else { 0 };
            if robot.held_ticks >= yield_after.max(1) {
                deadlocked.push(*id);
            }
        }
        if !deadlocked.is_empty() {
            commanded =
                yield_to_blocked(&commanded, &proposed, &poses, &deadlocked, follow, horizon);
        }
        for id in &stale {
            commanded.insert(*id, (0.0, 0.0));
        }

        for (robot_id, (v, w)) in commanded {
            let robot = self.robots.get_mut(&robot_id).expect("robot per pairing");
            if let Some((pose, rx)) = self
                .config
                .pairing_for_robot(robot_id)
                .and_then(|p| self.poses.get(&p.robot_marker()))
            {
                robot.last_pose = Some(*pose);
                robot.pose_rx_us = Some(*rx);
            }
            let is_stale = stale.contains(&robot_id);
            if is_stale && !robot.safe_stopped {
                self.counters.safe_stops += 1;
                out.events.push(CoordinatorEvent::SafeStop {
                    robot_id,
                    ts_us: now_us,
                });
            }
            robot.safe_stopped = is_stale;
            robot.last_velocity = (v, w);
            let cmd_seq = robot.next_seq();
            self.counters.velocity_commands += 1;
            self.sink.note_command();
            out.commands.push(CommandMessage {
                robot_id,
                cmd_seq,
                ts_us: now_us,
                body: CommandBody::Velocity {
                    v_linear: v as f32,
                    v_angular: w as f32,
                },
            });
        }
        out
    }

    pub fn snapshot(&self, now_us: u64) -> CoordinatorSnapshot {
        let robots = self
            .config
            .pairing
            .iter()
            .map(|p| {
                let r = &self.robots[&p.robot_id];
                let gate = self.gates[&p.camera_id].clone();
                let pose_of = |m: u16| self.poses.get(&m).map(|(pose, _)| PlanarPose::from(pose));
                RobotSnapshot {
                    robot_id: p.robot_id,
                    camera_id: p.camera_id,
                    user_marker_id: p.user_marker_id,
                    pose: pose_of(p.robot_marker()),
                    user_pose: pose_of(p.user_marker_id),
                    pose_age_ms: self
                        .poses
                        .get(&p.robot_marker())
                        .map(|(_, rx)| now_us.saturating_sub(*rx) as f64 / 1000.0),
                    active_modality: r.active_modality,
                    commanded_modality: gate.active_modality,
                    last_cmd_seq: r.last_cmd_seq,
                    pending_acks: r.pending_acks(),
                    v_linear: r.last_velocity.0,
                    v_angular: r.last_velocity.1,
                    safe_stopped: r.safe_stopped,
                    gate,
                }
            })
            .collect();
        CoordinatorSnapshot {
            ts_us: now_us,
            threshold: self.config.threshold,
            debounce_n: self.config.debounce_n,
            robots,
            counters: self.counters,
        }
    }
}
