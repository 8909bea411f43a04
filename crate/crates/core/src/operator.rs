//! Operator API: newline-delimited JSON over TCP.
//!
//! Requests carry a `type` tag and an optional `id`; every request is
//! answered with `{"type":"ok","id":..}` or `{"type":"err","id":..,
//! "message":..}`. Events (`state`, `classification`, `command`,
//! `latency`, `safe_stop`, `trial`) are broadcast to every connected client.
//!
//! ```text
//! {"id":1,"type":"inject_gesture","camera_id":1,"class":"palm"}
//! {"id":2,"type":"inject_gesture","camera_id":1,"embedding":[0.0, ...]}
//! {"id":3,"type":"set_threshold","value":0.7}
//! {"id":4,"type":"pair_override","camera_id":1,"robot_id":2}
//! {"id":5,"type":"scenario_start","name":"interactive"}
//! {"id":6,"type":"move_user","marker_id":101,"x":1.5,"y":0.0}
//! ```

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coordinator::{CoordinatorEvent, CoordinatorSnapshot, GateDecision};
use crate::probe::GestureClass;
use crate::telemetry::{LatencyRecord, TrialOutcome};
use crate::wire::Modality;

/// Longest request line accepted; longer lines are answered with `err`.
pub const MAX_REQUEST_LINE: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RequestBody {
    InjectGesture {
        camera_id: u16,
        #[serde(default)]
        class: Option<GestureClass>,
        #[serde(default)]
        embedding: Option<Vec<f64>>,
    },
    SetThreshold {
        value: f64,
    },
    PairOverride {
        camera_id: u16,
        robot_id: u16,
    },
    ScenarioStart {
        name: String,
    },
    MoveUser {
        marker_id: u16,
        x: f64,
        y: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub id: Value,
    pub body: RequestBody,
}

/// What an `inject_gesture` asks for once validated.
#[derive(Debug, Clone, PartialEq)]
pub enum Injection {
    Class(GestureClass),
    Embedding(Vec<f64>),
}

impl RequestBody {
    pub fn injection(&self) -> Option<Result<Injection, String>> {
        let RequestBody::InjectGesture {
            class, embedding, ..
        } = self
        else {
            return None;
        };
        Some(match (class, embedding) {
            (Some(c), None) => Ok(Injection::Class(*c)),
            (None, Some(e)) => Ok(Injection::Embedding(e.clone())),
            _ => Err("inject_gesture needs exactly one of `class` or `embedding`".into()),
        })
    }
}

/// Parses one request line. On failure returns the request id (if one could
/// be recovered) with a message.
pub fn parse_request(line: &str) -> Result<Request, (Value, String)> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| (Value::Null, format!("invalid JSON: {e}")))?;
    let id = value.get("id").cloned().unwrap_or(Value::Null);
    if !value.is_object() {
        return Err((id, "request must be a JSON object".into()));
    }
    let body: RequestBody =
        serde_json::from_value(value).map_err(|e| (id.clone(), e.to_string()))?;
    Ok(Request { id, body })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Ok {
        id: Value,
        #[serde(skip_serializing_if = "Option::is_none")]
        result: Option<Value>,
    },
    Err {
        id: Value,
        message: String,
    },
    State(CoordinatorSnapshot),
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
        kind: String,
        payload: Modality,
        ts_us: u64,
    },
    Latency {
        cmd_seq: u32,
        record: LatencyRecord,
    },
    SafeStop {
        robot_id: u16,
        ts_us: u64,
    },
    /// A finished simulated trial (interactive server only).
    Trial(TrialOutcome),
}

impl ServerMessage {
    pub fn ok(id: Value) -> Self {
        ServerMessage::Ok { id, result: None }
    }

    pub fn err(id: Value, message: impl Into<String>) -> Self {
        ServerMessage::Err {
            id,
            message: message.into(),
        }
    }

    /// Events that are forwarded to consoles; skipped frames stay internal.
    pub fn from_event(event: CoordinatorEvent) -> Option<Self> {
        Some(match event {
            CoordinatorEvent::Classification {
                camera_id,
                robot_id,
                frame_seq,
                class,
                confidence,
                ts_us,
                decision,
            } => ServerMessage::Classification {
                camera_id,
                robot_id,
                frame_seq,
                class,
                confidence,
                ts_us,
                decision,
            },
            CoordinatorEvent::Command {
                robot_id,
                cmd_seq,
                kind,
                payload,
                ts_us,
                ..
            } => ServerMessage::Command {
                robot_id,
                cmd_seq,
                kind: kind.to_string(),
                payload,
                ts_us,
            },
            CoordinatorEvent::Latency { cmd_seq, record } => {
                ServerMessage::Latency { cmd_seq, record }
            }
            CoordinatorEvent::SafeStop { robot_id, ts_us } => {
                ServerMessage::SafeStop { robot_id, ts_us }
            }
            CoordinatorEvent::FrameSkipped { .. } => return None,
        })
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("server messages serialize");
        s.push('\n');
        s
    }
}

/// A parsed (or rejected) request from client `client`.
#[derive(Debug)]
pub struct Inbound {
    pub client: usize,
    pub request: Result<Request, (Value, String)>,
}

type Clients = Arc<Mutex<BTreeMap<usize, Sender<Arc<str>>>>>;

/// TCP front end. Reading and writing happen on per-client threads so the
/// control loop only touches channels.
pub struct OperatorServer {
    addr: SocketAddr,
    inbound: Receiver<Inbound>,
    clients: Clients,
    shutdown: Arc<AtomicBool>,
}

impl OperatorServer {
    pub fn bind(addr: &str) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let (tx, rx) = mpsc::channel();
        let clients: Clients = Arc::new(Mutex::new(BTreeMap::new()));
        let shutdown = Arc::new(AtomicBool::new(false));
        let next_id = Arc::new(AtomicUsize::new(0));
        {
            let clients = clients.clone();
            let shutdown = shutdown.clone();
            thread::Builder::new()
                .name("operator-accept".into())
                .spawn(move || {
                    while !shutdown.load(Ordering::Relaxed) {
                        match listener.accept() {
                            Ok((stream, peer)) => {
                                let id = next_id.fetch_add(1, Ordering::Relaxed);
                                log::info!("operator client {id} connected from {peer}");
                                if let Err(e) =
                                    spawn_client(id, stream, tx.clone(), clients.clone())
                                {
                                    log::warn!("operator client {id} setup failed: {e}");
                                }
                            }
                            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                                thread::sleep(Duration::from_millis(20));
                            }
                            Err(e) => {
                                log::warn!("operator accept failed: {e}");
                                thread::sleep(Duration::from_millis(100));
                            }
                        }
                    }
                })?;
        }
        Ok(OperatorServer {
            addr: local,
            inbound: rx,
            clients,
            shutdown,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn client_count(&self) -> usize {
        self.clients.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn try_recv(&self) -> Option<Inbound> {
        self.inbound.try_recv().ok()
    }

    pub fn send(&self, client: usize, msg: &ServerMessage) {
        let line: Arc<str> = msg.to_line().into();
        let mut clients = self.clients.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(tx) = clients.get(&client) {
            if tx.send(line).is_err() {
                clients.remove(&client);
            }
        }
    }

    pub fn broadcast(&self, msg: &ServerMessage) {
        let line: Arc<str> = msg.to_line().into();
        let mut clients = self.clients.lock().unwrap_or_else(|p| p.into_inner());
        clients.retain(|_, tx| tx.send(line.clone()).is_ok());
    }
}

impl Drop for OperatorServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        self.clients
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .clear();
    }
}

fn spawn_client(
    id: usize,
    stream: TcpStream,
    tx: Sender<Inbound>,
    clients: Clients,
) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    let mut writer = stream.try_clone()?;
    writer.set_write_timeout(Some(Duration::from_secs(1)))?;
    let (out_tx, out_rx) = mpsc::channel::<Arc<str>>();
    clients
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .insert(id, out_tx);

    thread::Builder::new()
        .name(format!("operator-write-{id}"))
        .spawn(move || {
            for line in out_rx {
                if writer.write_all(line.as_bytes()).is_err() {
                    break;
                }
            }
            let _ = writer.shutdown(std::net::Shutdown::Both);
        })?;
    thread::Builder::new()
        .name(format!("operator-read-{id}"))
        .spawn(move || {
            let mut reader = BufReader::new(stream);
            let mut buf = Vec::new();
            loop {
                buf.clear();
                match Read::by_ref(&mut reader)
                    .take(MAX_REQUEST_LINE as u64 + 1)
                    .read_until(b'\n', &mut buf)
                {
                    Ok(0) | Err(_) => break,
                    Ok(_) => {}
                }
                let request = if buf.len() > MAX_REQUEST_LINE {
                    // Discard the rest of the oversized line.
                    let mut sink = Vec::new();
                    if reader.read_until(b'\n', &mut sink).is_err() {
                        break;
                    }
                    Err((Value::Null, "request line too long".to_string()))
                } else {
                    let line = String::from_utf8_lossy(&buf);
                    let line = line.trim();
                    if line.is_empty() {
                        continue;
                    }
                    parse_request(line)
                };
                if tx
                    .send(Inbound {
                        client: id,
                        request,
                    })
                    .is_err()
                {
                    break;
                }
            }
            log::info!("operator client {id} disconnected");
            clients
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .remove(&id);
        })?;
    Ok(())
}
