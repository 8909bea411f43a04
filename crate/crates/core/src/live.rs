//! Socket-backed server loops behind `serve`.
//!
//! [`serve_interactive`] paces a simulated [`World`] by the wall clock and
//! exposes it through the operator API. [`serve_udp`] runs the coordinator
//! against real camera, tracking and robot datagrams. Both keep the
//! coordinator on one thread; sockets are read on helper threads that only
//! hand decoded messages over channels.

use std::collections::HashSet;
use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};
use thiserror::Error;

use crate::coordinator::{Coordinator, CoordinatorConfig, CoordinatorEvent, Ports};
use crate::embeddings::orthogonal_means;
use crate::operator::{Inbound, Injection, OperatorServer, Request, RequestBody, ServerMessage};
use crate::probe::{Embedding, LinearProbe};
use crate::sim::{bundled_scenario, GestureInput, Scenario, SimError, World};
use crate::wire::{AckMessage, Datagram, PoseMessage, Reassembler};

/// Upper bound on `state` events per second.
pub const MAX_STATE_HZ: f64 = 10.0;
const RECV_POLL: Duration = Duration::from_millis(50);
const MAX_DATAGRAM: usize = 65_536;

#[derive(Debug, Error)]
pub enum LiveError {
    #[error("socket error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot resolve `{0}`")]
    Resolve(String),
}

#[derive(Debug, Clone)]
pub struct LiveOptions {
    /// Set to stop the loop at the next iteration.
    pub stop: Arc<AtomicBool>,
    /// Stop after this much wall time.
    pub max_duration: Option<Duration>,
    /// `state` event rate, clamped to [`MAX_STATE_HZ`].
    pub state_hz: f64,
}

impl Default for LiveOptions {
    fn default() -> Self {
        LiveOptions {
            stop: Arc::new(AtomicBool::new(false)),
            max_duration: None,
            state_hz: MAX_STATE_HZ,
        }
    }
}

impl LiveOptions {
    fn state_period(&self) -> Duration {
        let hz = if self.state_hz.is_finite() && self.state_hz > 0.0 {
            self.state_hz.min(MAX_STATE_HZ)
        } else {
            MAX_STATE_HZ
        };
        Duration::from_secs_f64(1.0 / hz)
    }

    fn done(&self, started: Instant) -> bool {
        self.stop.load(Ordering::Relaxed)
            || self.max_duration.is_some_and(|d| started.elapsed() >= d)
    }
}

/// Microseconds since the Unix epoch; the server clock in live mode.
pub fn wall_clock_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_micros() as u64)
}

fn broadcast_events(operator: Option<&OperatorServer>, events: Vec<CoordinatorEvent>) {
    let Some(op) = operator else { return };
    for e in events {
        if let Some(msg) = ServerMessage::from_event(e) {
            op.broadcast(&msg);
        }
    }
}

fn reply(
    operator: &OperatorServer,
    client: usize,
    id: Value,
    result: Result<Option<Value>, String>,
) {
    let msg = match result {
        Ok(result) => ServerMessage::Ok { id, result },
        Err(message) => ServerMessage::Err { id, message },
    };
    operator.send(client, &msg);
}

/// Unpacks an inbound message, answering parse failures directly.
fn accept_request(operator: &OperatorServer, inbound: Inbound) -> Option<(usize, Request)> {
    match inbound.request {
        Ok(r) => Some((inbound.client, r)),
        Err((id, message)) => {
            operator.send(inbound.client, &ServerMessage::Err { id, message });
            None
        }
    }
}

fn load_scenario(name: &str) -> Result<Scenario, String> {
    let text = bundled_scenario(name).ok_or_else(|| format!("unknown scenario `{name}`"))?;
    Scenario::from_toml_str(text).map_err(|e| e.to_string())
}

/// Everything the interactive server needs to (re)build its world.
pub struct InteractiveSetup {
    pub scenario: Scenario,
    pub config: CoordinatorConfig,
    pub probe: LinearProbe,
}

struct InteractiveState {
    world: World,
    /// Wall instant matching virtual time zero of the current world.
    anchor: Instant,
    reported_trials: HashSet<u64>,
}

impl InteractiveState {
    fn new(scenario: Scenario, setup: &InteractiveSetup) -> Result<Self, SimError> {
        let mut world = World::new(scenario, setup.config.clone(), setup.probe.clone())?;
        world.collect_events(true);
        Ok(InteractiveState {
            world,
            anchor: Instant::now(),
            reported_trials: HashSet::new(),
        })
    }

    fn handle(
        &mut self,
        body: RequestBody,
        setup: &InteractiveSetup,
    ) -> Result<Option<Value>, String> {
        match body {
            RequestBody::InjectGesture { camera_id, .. } => {
                let input = match body_injection(&body)? {
                    Injection::Class(c) => GestureInput::Class(c),
                    Injection::Embedding(v) => {
                        let dim = setup.config.provider.embed_dim;
                        GestureInput::Embedding(Embedding::new(v, dim).map_err(|e| e.to_string())?)
                    }
                };
                let trial_id = self
                    .world
                    .inject(camera_id, input)
                    .map_err(|e| e.to_string())?;
                Ok(Some(json!({ "trial_id": trial_id })))
            }
            RequestBody::SetThreshold { value } => {
                self.world
                    .coordinator_mut()
                    .set_threshold(value)
                    .map_err(|e| e.to_string())?;
                Ok(None)
            }
            RequestBody::PairOverride {
                camera_id,
                robot_id,
            } => {
                self.world
                    .coordinator_mut()
                    .pair_override(camera_id, robot_id)
                    .map_err(|e| e.to_string())?;
                Ok(None)
            }
            RequestBody::MoveUser { marker_id, x, y } => {
                self.world
                    .move_user(marker_id, x, y)
                    .map_err(|e| e.to_string())?;
                Ok(None)
            }
            RequestBody::ScenarioStart { name } => {
                let scenario = load_scenario(&name)?;
                *self = InteractiveState::new(scenario, setup).map_err(|e| e.to_string())?;
                log::info!("scenario `{name}` started");
                Ok(None)
            }
        }
    }

    /// Steps the world up to the current wall time.
    fn catch_up(&mut self, operator: &OperatorServer) -> Result<(), SimError> {
        let target = self.anchor.elapsed().as_micros() as u64;
        while self.world.now_us() < target {
            self.world.step()?;
            broadcast_events(Some(operator), self.world.drain_events());
        }
        for outcome in self.world.outcomes() {
            if self.reported_trials.insert(outcome.trial_id) {
                operator.broadcast(&ServerMessage::Trial(outcome));
            }
        }
        Ok(())
    }
}

fn body_injection(body: &RequestBody) -> Result<Injection, String> {
    body.injection()
        .unwrap_or_else(|| Err("not an inject_gesture request".into()))
}

/// Runs a simulated world in real time behind the operator API until the
/// options say stop. Returns the virtual time reached by the final world.
pub fn serve_interactive(
    setup: InteractiveSetup,
    operator: &OperatorServer,
    opts: &LiveOptions,
) -> Result<u64, LiveError> {
    let started = Instant::now();
    let mut state = InteractiveState::new(setup.scenario.clone(), &setup)?;
    let state_period = opts.state_period();
    let mut last_state: Option<Instant> = None;
    let step = Duration::from_secs_f64(state.world.scenario().physics_dt_s);
    while !opts.done(started) {
        while let Some(inbound) = operator.try_recv() {
            if let Some((client, req)) = accept_request(operator, inbound) {
                let result = state.handle(req.body, &setup);
                reply(operator, client, req.id, result);
            }
        }
        state.catch_up(operator)?;
        if last_state.is_none_or(|t| t.elapsed() >= state_period) {
            operator.broadcast(&ServerMessage::State(state.world.snapshot()));
            last_state = Some(Instant::now());
        }
        thread::sleep(step);
    }
    Ok(state.world.now_us())
}

/// Bound UDP sockets for live ingestion.
pub struct UdpLink {
    frame: UdpSocket,
    pose: UdpSocket,
    ack: UdpSocket,
    command: UdpSocket,
    robot_addr: SocketAddr,
}

#[derive(Debug, Default)]
pub struct LinkStats {
    pub datagrams: AtomicU64,
    pub decode_errors: AtomicU64,
}

impl UdpLink {
    /// Binds the frame, pose and ack ports on `ports.bind`; commands go to
    /// `ports.robot_host:ports.command`. Port 0 picks an ephemeral port.
    pub fn bind(ports: &Ports) -> Result<Self, LiveError> {
        let bind = |port: u16| UdpSocket::bind((ports.bind.as_str(), port));
        let target = format!("{}:{}", ports.robot_host, ports.command);
        let robot_addr = target
            .to_socket_addrs()
            .ok()
            .and_then(|mut a| a.next())
            .ok_or(LiveError::Resolve(target))?;
        Ok(UdpLink {
            frame: bind(ports.frame)?,
            pose: bind(ports.pose)?,
            ack: bind(ports.ack)?,
            command: UdpSocket::bind((ports.bind.as_str(), 0))?,
            robot_addr,
        })
    }

    pub fn frame_addr(&self) -> io::Result<SocketAddr> {
        self.frame.local_addr()
    }

    pub fn pose_addr(&self) -> io::Result<SocketAddr> {
        self.pose.local_addr()
    }

    pub fn ack_addr(&self) -> io::Result<SocketAddr> {
        self.ack.local_addr()
    }
}

enum Ingest {
    Frame(crate::wire::CompletedFrame),
    Pose(PoseMessage, u64),
    Ack(AckMessage, u64),
}

fn spawn_receiver(
    name: &str,
    socket: UdpSocket,
    tx: Sender<Ingest>,
    stop: Arc<AtomicBool>,
    stats: Arc<LinkStats>,
    mut handle: impl FnMut(Datagram, u64) -> Option<Ingest> + Send + 'static,
) -> io::Result<JoinHandle<()>> {
    socket.set_read_timeout(Some(RECV_POLL))?;
    thread::Builder::new().name(name.into()).spawn(move || {
        let mut buf = vec![0u8; MAX_DATAGRAM];
        while !stop.load(Ordering::Relaxed) {
            let n = match socket.recv_from(&mut buf) {
                Ok((n, _)) => n,
                Err(e)
                    if matches!(
                        e.kind(),
                        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                    ) =>
                {
                    continue
                }
                Err(e) => {
                    log::warn!("udp receive failed: {e}");
                    continue;
                }
            };
            stats.datagrams.fetch_add(1, Ordering::Relaxed);
            let rx_us = wall_clock_us();
            match Datagram::decode(&buf[..n]) {
                Ok(d) => {
                    if let Some(msg) = handle(d, rx_us) {
                        if tx.send(msg).is_err() {
                            break;
                        }
                    }
                }
                Err(e) => {
                    stats.decode_errors.fetch_add(1, Ordering::Relaxed);
                    log::debug!("dropping datagram: {e}");
                }
            }
        }
    })
}

fn inject_live(
    coordinator: &mut Coordinator,
    camera_id: u16,
    injection: Injection,
    seq: u32,
) -> Result<(), String> {
    let dim = coordinator.config().provider.embed_dim;
    let values = match injection {
        Injection::Class(c) => orthogonal_means(dim.max(3))[c.index()][..dim].to_vec(),
        Injection::Embedding(v) => v,
    };
    let embedding = Embedding::new(values, dim).map_err(|e| e.to_string())?;
    let now = wall_clock_us();
    coordinator
        .ingest_embedding(camera_id, seq, now, now, embedding)
        .map_err(|e| e.to_string())
}

fn handle_live_request(
    coordinator: &mut Coordinator,
    body: RequestBody,
    seq: &mut u32,
) -> Result<Option<Value>, String> {
    match body {
        RequestBody::InjectGesture { camera_id, .. } => {
            let injection = body_injection(&body)?;
            *seq = seq.wrapping_add(1);
            // Injected gestures fill the debounce window in one go.
            for _ in 0..coordinator.config().debounce_n {
                inject_live(coordinator, camera_id, injection.clone(), *seq)?;
            }
            Ok(None)
        }
        RequestBody::SetThreshold { value } => coordinator
            .set_threshold(value)
            .map(|_| None)
            .map_err(|e| e.to_string()),
        RequestBody::PairOverride {
            camera_id,
            robot_id,
        } => coordinator
            .pair_override(camera_id, robot_id)
            .map(|_| None)
            .map_err(|e| e.to_string()),
        RequestBody::MoveUser { .. } => Err("move_user needs the interactive scenario".into()),
        RequestBody::ScenarioStart { .. } => {
            Err("scenario_start needs the interactive scenario".into())
        }
    }
}

/// Runs the coordinator against live UDP traffic. Returns link statistics
/// once the options say stop.
pub fn serve_udp(
    mut coordinator: Coordinator,
    link: UdpLink,
    operator: Option<&OperatorServer>,
    opts: &LiveOptions,
) -> Result<Arc<LinkStats>, LiveError> {
    let started = Instant::now();
    let stats = Arc::new(LinkStats::default());
    let (tx, rx): (Sender<Ingest>, Receiver<Ingest>) = mpsc::channel();
    let recv_stop = Arc::new(AtomicBool::new(false));
    let mut reassembler = Reassembler::new(coordinator.config().reassembly);
    let handles = vec![
        spawn_receiver(
            "udp-frames",
            link.frame,
            tx.clone(),
            recv_stop.clone(),
            stats.clone(),
            move |d, rx_us| match d {
                Datagram::Frame(f) => reassembler.push(f, rx_us).map(Ingest::Frame),
                _ => None,
            },
        )?,
        spawn_receiver(
            "udp-poses",
            link.pose,
            tx.clone(),
            recv_stop.clone(),
            stats.clone(),
            |d, rx_us| match d {
                Datagram::Pose(p) => Some(Ingest::Pose(p, rx_us)),
                _ => None,
            },
        )?,
        spawn_receiver(
            "udp-acks",
            link.ack,
            tx,
            recv_stop.clone(),
            stats.clone(),
            |d, rx_us| match d {
                Datagram::Ack(a) => Some(Ingest::Ack(a, rx_us)),
                _ => None,
            },
        )?,
    ];

    let period = Duration::from_micros(coordinator.config().tick_period_us());
    let state_period = opts.state_period();
    let mut last_state: Option<Instant> = None;
    let mut inject_seq = 0u32;
    let mut next_tick = Instant::now();
    let result = loop {
        if opts.done(started) {
            break Ok(());
        }
        let mut events = Vec::new();
        while let Ok(msg) = rx.try_recv() {
            match msg {
                Ingest::Frame(f) => coordinator.ingest_frame(f),
                Ingest::Pose(p, rx_us) => coordinator.ingest_pose(p, rx_us),
                Ingest::Ack(a, rx_us) => events.extend(coordinator.ingest_ack(&a, rx_us)),
            }
        }
        if let Some(op) = operator {
            while let Some(inbound) = op.try_recv() {
                if let Some((client, req)) = accept_request(op, inbound) {
                    let result = handle_live_request(&mut coordinator, req.body, &mut inject_seq);
                    reply(op, client, req.id, result);
                }
            }
        }
        let now = wall_clock_us();
        let out = coordinator.tick(now);
        for cmd in &out.commands {
            match cmd.encode() {
                Ok(bytes) => {
                    if let Err(e) = link.command.send_to(&bytes, link.robot_addr) {
                        log::warn!("command send to {} failed: {e}", link.robot_addr);
                    }
                }
                Err(e) => log::error!("command for robot {} not encodable: {e}", cmd.robot_id),
            }
        }
        events.extend(out.events);
        broadcast_events(operator, events);
        if let Some(op) = operator {
            if last_state.is_none_or(|t| t.elapsed() >= state_period) {
                op.broadcast(&ServerMessage::State(coordinator.snapshot(now)));
                last_state = Some(Instant::now());
            }
        }
        next_tick += period;
        match next_tick.checked_duration_since(Instant::now()) {
            Some(wait) => thread::sleep(wait),
            None => next_tick = Instant::now(),
        }
    };
    recv_stop.store(true, Ordering::Relaxed);
    for h in handles {
        let _ = h.join();
    }
    result.map(|_| stats)
}
