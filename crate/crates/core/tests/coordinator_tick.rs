use acousto_core::coordinator::{
    Coordinator, CoordinatorConfig, CoordinatorEvent, InferenceTiming, Pairing,
};
use acousto_core::embeddings::EmbeddingProvider;
use acousto_core::telemetry::{decompose, TelemetrySink};
use acousto_core::wire::{AckMessage, CommandBody, CompletedFrame, Modality, PoseMessage};
use acousto_core::{GestureClass, LinearProbe};

const DIM: usize = 3;

fn probe() -> LinearProbe {
    let mut w = vec![0.0; 9];
    for k in 0..3 {
        w[k * 3 + k] = 10.0;
    }
    LinearProbe::from_parts(DIM, GestureClass::default_names(), w, vec![0.0; 3]).unwrap()
}

fn config(debounce_n: u32) -> CoordinatorConfig {
    CoordinatorConfig {
        pairing: vec![Pairing::new(101, 1, 1), Pairing::new(102, 2, 2)],
        debounce_n,
        ..CoordinatorConfig::default()
    }
}

fn coordinator(debounce_n: u32) -> Coordinator {
    Coordinator::new(
        config(debounce_n),
        probe(),
        EmbeddingProvider::Passthrough { dim: DIM },
        InferenceTiming::Simulated(Box::new(|| 200_000)),
        TelemetrySink::new(),
    )
    .unwrap()
}

fn payload(class: GestureClass) -> Vec<u8> {
    let mut v = [0f32; DIM];
    v[class.index()] = 1.0;
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn frame(camera_id: u16, seq: u32, class: GestureClass, t: u64) -> CompletedFrame {
    CompletedFrame {
        camera_id,
        frame_seq: seq,
        capture_ts_us: t,
        completed_at_us: t,
        payload: payload(class),
    }
}

fn poses(c: &mut Coordinator, t: u64, robot2: bool) {
    c.ingest_pose(PoseMessage::planar(1, t, 0.0, 0.0, 0.0), t);
    c.ingest_pose(PoseMessage::planar(101, t, 3.0, 0.0, 0.0), t);
    if robot2 {
        c.ingest_pose(PoseMessage::planar(2, t, 0.0, 5.0, 0.0), t);
        c.ingest_pose(PoseMessage::planar(102, t, 1.0, 5.0, 0.0), t);
    }
}

fn modality_commands(out: &acousto_core::coordinator::TickOutput) -> Vec<(u16, Modality)> {
    out.commands
        .iter()
        .filter_map(|c| match c.body {
            CommandBody::Modality(m) => Some((c.robot_id, m)),
            _ => None,
        })
        .collect()
}

#[test]
fn equilibrium_yields_only_zero_velocity() {
    let mut c = coordinator(2);
    c.ingest_pose(PoseMessage::planar(1, 0, 0.0, 0.0, 0.0), 0);
    c.ingest_pose(PoseMessage::planar(101, 0, 1.0, 0.0, 0.0), 0);
    c.ingest_pose(PoseMessage::planar(2, 0, 0.0, 5.0, 0.0), 0);
    c.ingest_pose(PoseMessage::planar(102, 0, 1.0, 5.0, 0.0), 0);
    let out = c.tick(10_000);
    assert_eq!(out.commands.len(), 2);
    for cmd in &out.commands {
        assert_eq!(
            cmd.body,
            CommandBody::Velocity {
                v_linear: 0.0,
                v_angular: 0.0
            }
        );
    }
    assert!(modality_commands(&out).is_empty());
}

#[test]
fn palm_frame_commands_haptics_to_paired_robot() {
    let mut c = coordinator(1);
    poses(&mut c, 0, true);
    c.ingest_frame(frame(2, 7, GestureClass::Palm, 0));
    let out = c.tick(0);
    assert_eq!(modality_commands(&out), vec![(2, Modality::Haptics)]);
    let cmd = out
        .commands
        .iter()
        .find(|c| matches!(c.body, CommandBody::Modality(_)))
        .unwrap();
    assert_eq!(cmd.ts_us, 200_000);
    assert_eq!(c.robot(2).unwrap().pending_acks(), vec![cmd.cmd_seq]);
    assert_eq!(c.robot(2).unwrap().active_modality, Modality::Idle);

    let ack = AckMessage {
        robot_id: 2,
        cmd_seq: cmd.cmd_seq,
        ts_us: 650_000,
    };
    let event = c.ingest_ack(&ack, 650_000).unwrap();
    let CoordinatorEvent::Latency { record, .. } = event else {
        panic!("expected a latency event");
    };
    let b = decompose(&record).unwrap();
    assert_eq!((b.stage_a_s, b.stage_b_s), (0.0, 0.2));
    assert!((b.stage_c_s - 0.45).abs() < 1e-12);
    assert!((b.total_s - 0.65).abs() < 1e-12);
    assert_eq!(c.robot(2).unwrap().active_modality, Modality::Haptics);
    assert_eq!(c.sink().latency_snapshot(), vec![record]);
    assert!(c.ingest_ack(&ack, 700_000).is_none());
    assert_eq!(c.counters().unknown_acks, 1);
}

#[test]
fn stale_pose_triggers_safe_stop_within_cutoff() {
    let mut c = coordinator(2);
    poses(&mut c, 0, true);
    let mut stopped_at = None;
    let mut t = 0;
    while t <= 1_000_000 {
        poses(&mut c, t, false);
        let out = c.tick(t);
        for cmd in &out.commands {
            let CommandBody::Velocity { v_linear, .. } = cmd.body else {
                continue;
            };
            if cmd.robot_id == 1 {
                assert_eq!(v_linear, 0.5, "robot 1 keeps following at t={t}");
            }
        }
        if out
            .events
            .iter()
            .any(|e| matches!(e, CoordinatorEvent::SafeStop { robot_id: 2, .. }))
        {
            stopped_at.get_or_insert(t);
        }
        if let Some(ts) = stopped_at {
            let zero = out.commands.iter().any(|c| {
                c.robot_id == 2
                    && c.body
                        == CommandBody::Velocity {
                            v_linear: 0.0,
                            v_angular: 0.0,
                        }
            });
            assert!(zero, "robot 2 stopped since {ts}");
        }
        t += 50_000;
    }
    assert!(stopped_at.unwrap() <= 300_000);
}

#[test]
fn cmd_seq_strictly_increases_per_robot() {
    let mut c = coordinator(1);
    let mut last = [0u32; 3];
    for i in 0..40u64 {
        let t = i * 50_000;
        poses(&mut c, t, true);
        let class = GestureClass::from_index((i / 3) as usize % 3).unwrap();
        c.ingest_frame(frame(1, i as u32, class, t));
        for cmd in c.tick(t).commands {
            assert!(cmd.cmd_seq > last[cmd.robot_id as usize]);
            last[cmd.robot_id as usize] = cmd.cmd_seq;
        }
    }
    let counters = c.counters();
    assert_eq!(
        c.sink().commands_logged(),
        counters.modality_commands + counters.velocity_commands
    );
}

#[test]
fn bad_frames_are_counted_and_skipped() {
    let mut c = coordinator(1);
    c.ingest_frame(frame(9, 0, GestureClass::Palm, 0));
    let mut short = frame(1, 1, GestureClass::Palm, 0);
    short.payload.truncate(5);
    c.ingest_frame(short);
    let out = c.tick(0);
    assert!(modality_commands(&out).is_empty());
    let counters = c.counters();
    assert_eq!((counters.unpaired_frames, counters.provider_errors), (1, 1));
}

#[test]
fn pair_override_swaps_robots() {
    let mut c = coordinator(1);
    c.pair_override(1, 2).unwrap();
    assert_eq!(c.config().pairing_for_camera(1).unwrap().robot_id, 2);
    assert_eq!(c.config().pairing_for_camera(2).unwrap().robot_id, 1);
    c.ingest_frame(frame(1, 0, GestureClass::Fist, 0));
    assert_eq!(modality_commands(&c.tick(0)), vec![(2, Modality::Audio)]);
    assert!(c.pair_override(5, 1).is_err());
    assert!(c.set_threshold(0.0).is_err());
    c.set_threshold(0.9).unwrap();
    let snap = c.snapshot(0);
    assert_eq!(snap.threshold, 0.9);
    assert_eq!(snap.robots.len(), 2);
}

#[test]
fn rejects_mismatched_probe() {
    let err = Coordinator::new(
        config(1),
        probe(),
        EmbeddingProvider::Passthrough { dim: 4 },
        InferenceTiming::Measured,
        TelemetrySink::new(),
    );
    assert!(err.is_err());
}

#[test]
fn projection_provider_path_drives_transitions() {
    use acousto_core::embeddings::project_frame;
    use acousto_core::probe::{train, LabeledDataset, TrainConfig};

    let dim = 64;
    let blobs: Vec<Vec<u8>> = (0..3u8).map(|k| vec![k; 200]).collect();
    let samples = (0..30)
        .map(|i| {
            let class = GestureClass::from_index(i % 3).unwrap();
            (project_frame(&blobs[i % 3], dim).unwrap(), class)
        })
        .collect();
    let dataset = LabeledDataset::new(samples, "projected blobs").unwrap();
    let cfg = TrainConfig {
        embed_dim: dim,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let (probe, _) = train(&dataset, &cfg).unwrap();
    let mut c = Coordinator::new(
        CoordinatorConfig {
            debounce_n: 1,
            ..config(1)
        },
        probe,
        EmbeddingProvider::DeterministicProjection { dim },
        InferenceTiming::Measured,
        TelemetrySink::new(),
    )
    .unwrap();
    c.ingest_frame(CompletedFrame {
        camera_id: 1,
        frame_seq: 0,
        capture_ts_us: 0,
        completed_at_us: 0,
        payload: blobs[GestureClass::Fist.index()].clone(),
    });
    assert_eq!(modality_commands(&c.tick(0)), vec![(1, Modality::Audio)]);
}
