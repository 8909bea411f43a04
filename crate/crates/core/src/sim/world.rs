use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::robot::{step_robot, SimRobot};
use super::scenario::{secs_to_us, ConfidenceMode, Scenario, UserPath};
use super::SimError;
use crate::coordinator::{
    Coordinator, CoordinatorConfig, CoordinatorEvent, CoordinatorSnapshot, Counters,
    InferenceTiming, PlanarPose, TickOutput,
};
use crate::embeddings::{orthogonal_means, EmbeddingProviderKind, NOISE_COMPONENT_SCALE};
use crate::probe::{Embedding, GestureClass, LinearProbe};
use crate::telemetry::{LatencyRecord, TelemetrySink, TrialOutcome};
use crate::wire::{
    chunk_frame, AckMessage, CommandBody, CommandMessage, Datagram, Modality, PoseMessage,
    Reassembler, ReassemblyStats, MAX_CHUNK_PAYLOAD,
};

const STREAM_TRIALS: u64 = 0;
const STREAM_CHUNKS: u64 = 1;
const STREAM_INFERENCE: u64 = 2;
const STREAM_COMMANDS: u64 = 3;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

enum EventKind {
    Chunk(Vec<u8>),
    Command(Vec<u8>),
    TrialWindowEnd(usize),
}

struct Scheduled {
    time_us: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time_us, self.seq) == (other.time_us, other.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time_us, self.seq).cmp(&(other.time_us, other.seq))
    }
}

/// What an operator or script asks a camera to show.
#[derive(Debug, Clone, PartialEq)]
pub enum GestureInput {
    Class(GestureClass),
    /// Raw embedding sent as every frame of the gesture.
    Embedding(Embedding),
}

struct TrialState {
    trial_id: u64,
    camera_id: u16,
    intended: Option<GestureClass>,
    confirmed: bool,
    outcome: Option<TrialOutcome>,
}

struct UserState {
    path: Option<UserPath>,
    home: (f64, f64),
    override_pos: Option<(f64, f64)>,
}

impl UserState {
    fn position(&self, t_s: f64) -> (f64, f64) {
        self.override_pos
            .or_else(|| self.path.as_ref().map(|p| p.position_at(t_s)))
            .unwrap_or(self.home)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Robot,
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t_us: u64,
    pub kind: EntityKind,
    pub id: u16,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v_linear: f64,
    pub v_angular: f64,
    pub modality: Option<Modality>,
    /// Robots only: distance to the paired user.
    pub user_distance: Option<f64>,
}

pub const TRAJECTORY_CSV_HEADER: &str =
    "t_s,kind,id,x,y,yaw,v_linear,v_angular,modality,user_distance";

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::from(TRAJECTORY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let kind = match r.kind {
            EntityKind::Robot => "robot",
            EntityKind::User => "user",
        };
        let _ = write!(
            out,
            "{:.3},{kind},{},{:.4},{:.4},{:.4},{:.4},{:.4},",
            r.t_us as f64 / 1e6,
            r.id,
            r.x,
            r.y,
            r.yaw,
            r.v_linear,
            r.v_angular
        );
        if let Some(m) = r.modality {
            out.push_str(m.name());
        }
        out.push(',');
        if let Some(d) = r.user_distance {
            let _ = write!(out, "{d:.4}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub scenario: String,
    pub seed: u64,
    pub duration_us: u64,
    pub latency: Vec<LatencyRecord>,
    pub trials: Vec<TrialOutcome>,
    pub trajectory: Vec<TrajectoryRow>,
    /// Smallest robot-to-robot distance seen at any physics step.
    pub min_separation: Option<f64>,
    pub safe_stops: Vec<(u16, u64)>,
    pub counters: Counters,
    pub reassembly: ReassemblyStats,
    pub dropped_chunks: u64,
}

/// The simulated deployment: cameras, tracking, robots and the coordinator
/// sharing one virtual clock.
pub struct World {
    scenario: Scenario,
    coordinator: Coordinator,
    robots: BTreeMap<u16, SimRobot>,
    robot_cmd: BTreeMap<u16, (f64, f64)>,
    users: BTreeMap<u16, UserState>,
    reassembler: Reassembler,
    queue: BinaryHeap<Reverse<Scheduled>>,
    next_event_seq: u64,
    now_us: u64,
    dt_us: u64,
    pose_period_us: u64,
    tick_period_us: u64,
    trajectory_period_us: u64,
    dim: usize,
    means: Vec<Vec<f64>>,
    rng_trials: ChaCha8Rng,
    rng_chunks: ChaCha8Rng,
    rng_commands: ChaCha8Rng,
    trials: Vec<TrialState>,
    frame_trial: HashMap<(u16, u32), usize>,
    cmd_trial: HashMap<(u16, u32), usize>,
    next_frame_seq: BTreeMap<u16, u32>,
    latency: Vec<LatencyRecord>,
    trajectory: Vec<TrajectoryRow>,
    min_separation: Option<f64>,
    safe_stops: Vec<(u16, u64)>,
    dropped_chunks: u64,
    collected: Option<Vec<CoordinatorEvent>>,
}

impl World {
    pub fn new(
        scenario: Scenario,
        config: CoordinatorConfig,
        probe: LinearProbe,
    ) -> Result<Self, SimError> {
        config.validate()?;
        scenario.validate(&config)?;
        if config.provider.kind != EmbeddingProviderKind::Passthrough {
            return Err(SimError::Scenario(
                "the simulator sends passthrough embeddings; set provider.kind = \"passthrough\""
                    .into(),
            ));
        }
        let dim = config.provider.embed_dim;
        let provider = config.provider.build()?;
        let mut rng_inference = rng(scenario.seed, STREAM_INFERENCE);
        let inference = scenario.delays.inference;
        let timing =
            InferenceTiming::Simulated(Box::new(move || inference.sample_us(&mut rng_inference)));

        let mut robots = BTreeMap::new();
        let mut users = BTreeMap::new();
        for (i, p) in config.pairing.iter().enumerate() {
            let spec = scenario.robot.iter().find(|r| r.robot_id == p.robot_id);
            let (pose, accel) = match spec {
                Some(r) => (PlanarPose::new(r.x, r.y, r.yaw), r.max_accel),
                None => (PlanarPose::new(0.0, 3.0 * i as f64, 0.0), 4.0),
            };
            robots.insert(
                p.robot_id,
                SimRobot::new(p.robot_id, p.robot_marker(), pose, accel),
            );
            let td = config.follow.target_distance;
            users.insert(
                p.user_marker_id,
                UserState {
                    path: scenario
                        .user
                        .iter()
                        .find(|u| u.marker_id == p.user_marker_id)
                        .cloned(),
                    home: (pose.x + td * pose.yaw.cos(), pose.y + td * pose.yaw.sin()),
                    override_pos: None,
                },
            );
        }
        let robot_cmd = robots.keys().map(|id| (*id, (0.0, 0.0))).collect();
        let tick_period_us = config.tick_period_us();
        let reassembler = Reassembler::new(config.reassembly);
        let coordinator = Coordinator::new(config, probe, provider, timing, TelemetrySink::new())?;

        let mut world = World {
            dt_us: secs_to_us(scenario.physics_dt_s),
            pose_period_us: secs_to_us(scenario.pose_period_s),
            trajectory_period_us: secs_to_us(scenario.trajectory_interval_s),
            tick_period_us,
            rng_trials: rng(scenario.seed, STREAM_TRIALS),
            rng_chunks: rng(scenario.seed, STREAM_CHUNKS),
            rng_commands: rng(scenario.seed, STREAM_COMMANDS),
            means: orthogonal_means(dim),
            dim,
            scenario,
            coordinator,
            robots,
            robot_cmd,
            users,
            reassembler,
            queue: BinaryHeap::new(),
            next_event_seq: 0,
            now_us: 0,
            trials: Vec::new(),
            frame_trial: HashMap::new(),
            cmd_trial: HashMap::new(),
            next_frame_seq: BTreeMap::new(),
            latency: Vec::new(),
            trajectory: Vec::new(),
            min_separation: None,
            safe_stops: Vec::new(),
            dropped_chunks: 0,
            collected: None,
        };
        for t in world.scenario.trials() {
            world.schedule_gesture(
                t.camera_id,
                GestureInput::Class(t.class),
                t.time_us,
                t.mode,
                Some(t.trial_id),
            )?;
        }
        Ok(world)
    }

    /// Keeps coordinator events for [`World::drain_events`] (live use).
    pub fn collect_events(&mut self, on: bool) {
        self.collected = on.then(Vec::new);
    }

    pub fn drain_events(&mut self) -> Vec<CoordinatorEvent> {
        self.collected
            .as_mut()
            .map(std::mem::take)
            .unwrap_or_default()
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn coordinator(&self) -> &Coordinator {
        &self.coordinator
    }

    pub fn coordinator_mut(&mut self) -> &mut Coordinator {
        &mut self.coordinator
    }

    pub fn robots(&self) -> impl Iterator<Item = &SimRobot> {
        self.robots.values()
    }

    pub fn snapshot(&self) -> CoordinatorSnapshot {
        self.coordinator.snapshot(self.now_us)
    }

    fn schedule(&mut self, time_us: u64, kind: EventKind) {
        self.queue.push(Reverse(Scheduled {
            time_us,
            seq: self.next_event_seq,
            kind,
        }));
        self.next_event_seq += 1;
    }

    fn frame_embedding(&mut self, class: GestureClass, mode: ConfidenceMode) -> Vec<f32> {
        let sigma = match mode {
            ConfidenceMode::Clean => 0.0,
            ConfidenceMode::Noisy => self.scenario.noise.embed_noise_std * NOISE_COMPONENT_SCALE,
        };
        let mean = &self.means[class.index()];
        mean.iter()
            .map(|&m| {
                if sigma == 0.0 {
                    m as f32
                } else {
                    let z: f64 = StandardNormal.sample(&mut self.rng_trials);
                    (m + sigma * z) as f32
                }
            })
            .collect()
    }

    fn schedule_gesture(
        &mut self,
        camera_id: u16,
        input: GestureInput,
        start_us: u64,
        mode: ConfidenceMode,
        trial_id: Option<u64>,
    ) -> Result<u64, SimError> {
        let capture_delay = self.scenario.delays.capture.sample_us(&mut self.rng_trials);
        let (intended, presented) = match &input {
            GestureInput::Class(c) => {
                let mut shown = *c;
                if mode == ConfidenceMode::Noisy
                    && self.rng_trials.random::<f64>() < self.scenario.noise.flip_prob.get(*c)
                {
                    let others: Vec<GestureClass> =
                        GestureClass::ALL.into_iter().filter(|o| o != c).collect();
                    shown = others[self.rng_trials.random_range(0..others.len())];
                }
                (Some(*c), Some(shown))
            }
            GestureInput::Embedding(e) => {
                if e.dim() != self.dim {
                    return Err(SimError::Scenario(format!(
                        "embedding has {} dimensions, expected {}",
                        e.dim(),
                        self.dim
                    )));
                }
                (None, None)
            }
        };
        let idx = self.trials.len();
        let trial_id = trial_id.unwrap_or(idx as u64);
        let interval = secs_to_us(self.scenario.frame_interval_s);
        for k in 0..u64::from(self.scenario.frames_per_gesture) {
            let capture = start_us + k * interval;
            let seq = self.next_frame_seq.entry(camera_id).or_insert(0);
            let frame_seq = *seq;
            *seq = seq.wrapping_add(1);
            let values: Vec<f32> = match (&input, presented) {
                (GestureInput::Embedding(e), _) => e.values().iter().map(|&v| v as f32).collect(),
                (_, Some(class)) => self.frame_embedding(class, mode),
                (GestureInput::Class(_), None) => {
                    unreachable!("class input always presents a class")
                }
            };
            let payload: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
            let chunks = chunk_frame(camera_id, frame_seq, capture, &payload, MAX_CHUNK_PAYLOAD)?;
            for chunk in chunks {
                if self.scenario.chunk_drop_prob > 0.0
                    && self.rng_chunks.random::<f64>() < self.scenario.chunk_drop_prob
                {
                    self.dropped_chunks += 1;
                    continue;
                }
                let bytes = chunk.encode()?;
                self.schedule(capture + capture_delay, EventKind::Chunk(bytes));
            }
            self.frame_trial.insert((camera_id, frame_seq), idx);
        }
        let last_capture = start_us + u64::from(self.scenario.frames_per_gesture - 1) * interval;
        let window_end_us = last_capture + capture_delay + secs_to_us(self.scenario.trial_window_s);
        self.trials.push(TrialState {
            trial_id,
            camera_id,
            intended,
            confirmed: false,
            outcome: None,
        });
        self.schedule(window_end_us, EventKind::TrialWindowEnd(idx));
        Ok(trial_id)
    }

    /// Starts a gesture on `camera_id` at the next tick boundary.
    pub fn inject(&mut self, camera_id: u16, input: GestureInput) -> Result<u64, SimError> {
        if self
            .coordinator
            .config()
            .pairing_for_camera(camera_id)
            .is_none()
        {
            return Err(SimError::Scenario(format!("unknown camera {camera_id}")));
        }
        let start = self.now_us.div_ceil(self.tick_period_us) * self.tick_period_us;
        self.schedule_gesture(camera_id, input, start, ConfidenceMode::Clean, None)
    }

    /// Pins a user marker to a position, overriding any scripted path.
    pub fn move_user(&mut self, marker_id: u16, x: f64, y: f64) -> Result<(), SimError> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(SimError::Scenario("user position must be finite".into()));
        }
        let user = self
            .users
            .get_mut(&marker_id)
            .ok_or_else(|| SimError::Scenario(format!("unknown user marker {marker_id}")))?;
        user.override_pos = Some((x, y));
        Ok(())
    }

    fn pose_dropped(&self, marker_id: u16, t_s: f64) -> bool {
        self.scenario
            .pose_dropout
            .iter()
            .any(|d| d.marker_id == marker_id && t_s >= d.start_s && t_s < d.end_s)
    }

    fn publish_poses(&mut self, t: u64) -> Result<(), SimError> {
        let t_s = t as f64 / 1e6;
        let mut poses: Vec<PoseMessage> = self
            .robots
            .values()
            .map(|r| PoseMessage::planar(r.marker_id, t, r.pose.x, r.pose.y, r.pose.yaw))
            .collect();
        for (marker, u) in &self.users {
            let (x, y) = u.position(t_s);
            poses.push(PoseMessage::planar(*marker, t, x, y, 0.0));
        }
        for pose in poses {
            if self.pose_dropped(pose.marker_id, t_s) {
                continue;
            }
            let decoded = PoseMessage::decode(&pose.encode()?)?;
            self.coordinator.ingest_pose(decoded, t);
        }
        Ok(())
    }

    fn finish_trial(&mut self, idx: usize) {
        let trial = &self.trials[idx];
        if trial.outcome.is_some() {
            return;
        }
        let observed = if trial.confirmed {
            self.coordinator
                .config()
                .pairing_for_camera(trial.camera_id)
                .and_then(|p| self.robots.get(&p.robot_id))
                .map(|r| r.modality)
        } else {
            None
        };
        if let Some(intended) = trial.intended {
            let outcome = TrialOutcome::new(trial.trial_id, intended, observed);
            self.trials[idx].outcome = Some(outcome);
        }
    }

    fn deliver_command(&mut self, bytes: &[u8], t: u64) -> Result<(), SimError> {
        let cmd = CommandMessage::decode(bytes)?;
        let Some(robot) = self.robots.get_mut(&cmd.robot_id) else {
            return Ok(());
        };
        match cmd.body {
            CommandBody::Velocity {
                v_linear,
                v_angular,
            } => {
                self.robot_cmd
                    .insert(cmd.robot_id, (f64::from(v_linear), f64::from(v_angular)));
            }
            CommandBody::Modality(m) => {
                robot.modality = m;
                let ack = AckMessage {
                    robot_id: cmd.robot_id,
                    cmd_seq: cmd.cmd_seq,
                    ts_us: t,
                };
                let ack = AckMessage::decode(&ack.encode()?)?;
                if let Some(event) = self.coordinator.ingest_ack(&ack, t) {
                    let event = match event {
                        CoordinatorEvent::Latency {
                            cmd_seq,
                            mut record,
                        } => {
                            if let Some(&i) = self.cmd_trial.get(&(cmd.robot_id, cmd_seq)) {
                                record.trial_id = self.trials[i].trial_id;
                            }
                            self.latency.push(record);
                            CoordinatorEvent::Latency { cmd_seq, record }
                        }
                        other => other,
                    };
                    if let Some(c) = self.collected.as_mut() {
                        c.push(event);
                    }
                }
            }
        }
        Ok(())
    }

    fn drain(&mut self, t: u64) -> Result<(), SimError> {
        while self.queue.peek().is_some_and(|e| e.0.time_us <= t) {
            let Reverse(ev) = self.queue.pop().expect("peeked");
            match ev.kind {
                EventKind::Chunk(bytes) => {
                    if let Datagram::Frame(msg) = Datagram::decode(&bytes)? {
                        if let Some(frame) = self.reassembler.push(msg, ev.time_us) {
                            self.coordinator.ingest_frame(frame);
                        }
                    }
                }
                EventKind::Command(bytes) => self.deliver_command(&bytes, ev.time_us)?,
                EventKind::TrialWindowEnd(idx) => self.finish_trial(idx),
            }
        }
        Ok(())
    }

    fn handle_tick(&mut self, out: TickOutput) -> Result<(), SimError> {
        for event in out.events {
            match &event {
                CoordinatorEvent::Classification {
                    camera_id,
                    frame_seq,
                    decision,
                    ..
                } if decision.is_confirmed() => {
                    if let Some(&i) = self.frame_trial.get(&(*camera_id, *frame_seq)) {
                        self.trials[i].confirmed = true;
                    }
                }
                CoordinatorEvent::Command {
                    robot_id,
                    cmd_seq,
                    camera_id,
                    frame_seq,
                    ..
                } => {
                    if let Some(&i) = self.frame_trial.get(&(*camera_id, *frame_seq)) {
                        self.cmd_trial.insert((*robot_id, *cmd_seq), i);
                    }
                }
                CoordinatorEvent::SafeStop { robot_id, ts_us } => {
                    self.safe_stops.push((*robot_id, *ts_us));
                }
                _ => {}
            }
            if let Some(c) = self.collected.as_mut() {
                c.push(event);
            }
        }
        for cmd in out.commands {
            let delay = match cmd.body {
                CommandBody::Modality(_) => self.scenario.delays.command,
                CommandBody::Velocity { .. } => self.scenario.delays.velocity,
            }
            .sample_us(&mut self.rng_commands);
            let bytes = cmd.encode()?;
            self.schedule(cmd.ts_us + delay, EventKind::Command(bytes));
        }
        Ok(())
    }

    fn log_trajectory(&mut self, t: u64) {
        let t_s = t as f64 / 1e6;
        for r in self.robots.values() {
            let user_distance = self
                .coordinator
                .config()
                .pairing_for_robot(r.robot_id)
                .and_then(|p| self.users.get(&p.user_marker_id))
                .map(|u| {
                    let (x, y) = u.position(t_s);
                    (x - r.pose.x).hypot(y - r.pose.y)
                });
            self.trajectory.push(TrajectoryRow {
                t_us: t,
                kind: EntityKind::Robot,
                id: r.robot_id,
                x: r.pose.x,
                y: r.pose.y,
                yaw: r.pose.yaw,
                v_linear: r.v_linear,
                v_angular: r.v_angular,
                modality: Some(r.modality),
                user_distance,
            });
        }
        for (marker, u) in &self.users {
            let (x, y) = u.position(t_s);
            self.trajectory.push(TrajectoryRow {
                t_us: t,
                kind: EntityKind::User,
                id: *marker,
                x,
                y,
                yaw: 0.0,
                v_linear: 0.0,
                v_angular: 0.0,
                modality: None,
                user_distance: None,
            });
        }
    }

    /// Advances the world by one physics step.
    pub fn step(&mut self) -> Result<(), SimError> {
        let t = self.now_us;
        if t.is_multiple_of(self.pose_period_us) {
            self.publish_poses(t)?;
        }
        self.drain(t)?;
        if t.is_multiple_of(self.tick_period_us) {
            self.reassembler.expire(t);
            let out = self.coordinator.tick(t);
            self.handle_tick(out)?;
            self.drain(t)?;
        }
        if t.is_multiple_of(self.trajectory_period_us) {
            self.log_trajectory(t);
        }
        let dt = self.dt_us as f64 / 1e6;
        for (id, robot) in self.robots.iter_mut() {
            *robot = step_robot(robot, self.robot_cmd[id], dt);
        }
        let robots: Vec<&SimRobot> = self.robots.values().collect();
        for (i, a) in robots.iter().enumerate() {
            for b in &robots[i + 1..] {
                let d = a.pose.distance(&b.pose);
                self.min_separation = Some(self.min_separation.map_or(d, |m: f64| m.min(d)));
            }
        }
        self.now_us += self.dt_us;
        Ok(())
    }

    pub fn run_until(&mut self, t_us: u64) -> Result<(), SimError> {
        while self.now_us < t_us {
            self.step()?;
        }
        Ok(())
    }

    /// Completed trial outcomes so far, in trial id order.
    pub fn outcomes(&self) -> Vec<TrialOutcome> {
        let mut v: Vec<TrialOutcome> = self.trials.iter().filter_map(|t| t.outcome).collect();
        v.sort_by_key(|o| o.trial_id);
        v
    }

    pub fn finish(mut self) -> SimResult {
        for i in 0..self.trials.len() {
            self.finish_trial(i);
        }
        SimResult {
            scenario: self.scenario.name.clone(),
            seed: self.scenario.seed,
            duration_us: self.now_us,
            trials: self.outcomes(),
            latency: self.latency,
            trajectory: self.trajectory,
            min_separation: self.min_separation,
            safe_stops: self.safe_stops,
            counters: self.coordinator.counters(),
            reassembly: self.reassembler.stats(),
            dropped_chunks: self.dropped_chunks,
        }
    }
}

/// Runs a scripted scenario to completion on the virtual clock.
pub fn run_scenario(
    scenario: &Scenario,
    config: &CoordinatorConfig,
    probe: &LinearProbe,
) -> Result<SimResult, SimError> {
    let duration = scenario
        .effective_duration_s()
        .ok_or_else(|| SimError::Scenario("scenario is open-ended; set duration_s".into()))?;
    let mut world = World::new(scenario.clone(), config.clone(), probe.clone())?;
    world.run_until(secs_to_us(duration))?;
    Ok(world.finish())
}
