use std::path::{Path, PathBuf};

use acousto_core::coordinator::ProviderConfig;
use acousto_core::embeddings::sidecar::{encode_request, encode_response};
use acousto_core::embeddings::{generate_synthetic_dataset, write_dataset, SyntheticDatasetSpec};
use acousto_core::probe::{save_checkpoint, train, TrainConfig};
use acousto_core::sim::{default_sim_config, BUNDLED_SCENARIOS};
use acousto_core::telemetry::{latency_csv, trials_csv, LatencyRecord, TrialOutcome};
use acousto_core::wire::{
    chunk_frame, AckMessage, CommandBody, CommandMessage, Datagram, PoseMessage,
};
use acousto_core::{GestureClass, Modality};
use clap::Args;

use crate::{runtime, write_file, CliResult};

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// Output directory; one subdirectory per input format, named after
    /// the fuzz target that consumes it.
    #[arg(long)]
    pub out: PathBuf,
}

/// Encodes datagrams as `len u16 LE | bytes` records, the input format of
/// the reassembly fuzz target.
pub fn datagram_stream(datagrams: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::new();
    for d in datagrams {
        out.extend_from_slice(&(d.len() as u16).to_le_bytes());
        out.extend_from_slice(d);
    }
    out
}

fn put(out: &Path, target: &str, name: &str, bytes: impl AsRef<[u8]>) -> CliResult {
    write_file(&out.join(target).join(name), bytes)
}

pub fn run(a: FixtureArgs) -> CliResult {
    let out = a.out.as_path();
    let enc = |d: Datagram| d.encode().map_err(runtime);

    let frame_payload: Vec<u8> = (0..16u8).collect();
    let chunks = chunk_frame(1, 7, 1_000_000, &frame_payload, 6).map_err(runtime)?;
    put(
        out,
        "datagram",
        "frame.bin",
        enc(Datagram::Frame(chunks[0].clone()))?,
    )?;
    put(
        out,
        "datagram",
        "pose.bin",
        enc(Datagram::Pose(PoseMessage::planar(
            101, 2_000_000, 1.5, -0.5, 0.3,
        )))?,
    )?;
    put(
        out,
        "datagram",
        "command_modality.bin",
        enc(Datagram::Command(CommandMessage {
            robot_id: 1,
            cmd_seq: 3,
            ts_us: 3_000_000,
            body: CommandBody::Modality(Modality::Levitation),
        }))?,
    )?;
    put(
        out,
        "datagram",
        "command_velocity.bin",
        enc(Datagram::Command(CommandMessage {
            robot_id: 2,
            cmd_seq: 4,
            ts_us: 3_050_000,
            body: CommandBody::Velocity {
                v_linear: 0.25,
                v_angular: -0.5,
            },
        }))?,
    )?;
    put(
        out,
        "datagram",
        "ack.bin",
        enc(Datagram::Ack(AckMessage {
            robot_id: 1,
            cmd_seq: 3,
            ts_us: 3_400_000,
        }))?,
    )?;

    let mut in_order = Vec::new();
    for c in &chunks {
        in_order.push(enc(Datagram::Frame(c.clone()))?);
    }
    put(
        out,
        "reassembly",
        "in_order.bin",
        datagram_stream(&in_order),
    )?;
    let mut shuffled = in_order.clone();
    shuffled.reverse();
    shuffled.push(in_order[0].clone());
    put(
        out,
        "reassembly",
        "reversed_with_duplicate.bin",
        datagram_stream(&shuffled),
    )?;

    let ds = generate_synthetic_dataset(&SyntheticDatasetSpec::orthogonal(15, 8, 0.35, 1))
        .map_err(runtime)?;
    put(out, "dataset", "n15_dim8.csv", write_dataset(&ds))?;
    let cfg = TrainConfig {
        embed_dim: 8,
        epochs: 3,
        ..TrainConfig::default()
    };
    let (probe, mut history) = train(&ds, &cfg).map_err(runtime)?;
    put(out, "checkpoint", "dim8.acpb", save_checkpoint(&probe))?;
    for r in &mut history.records {
        r.epoch_seconds = 0.0;
    }
    put(out, "history_csv", "history.csv", history.to_csv())?;

    for (name, text) in BUNDLED_SCENARIOS {
        put(out, "scenario", &format!("{name}.toml"), text)?;
    }

    put(
        out,
        "config",
        "default.toml",
        default_sim_config().to_toml_string(),
    )?;
    let mut sidecar = default_sim_config();
    sidecar.provider = ProviderConfig {
        kind: acousto_core::embeddings::EmbeddingProviderKind::Sidecar,
        sidecar_addr: Some("127.0.0.1:9500".into()),
        ..ProviderConfig::default()
    };
    put(out, "config", "sidecar.toml", sidecar.to_toml_string())?;

    put(
        out,
        "sidecar_response",
        "dim4.bin",
        encode_response(&[0.5, -1.0, 0.0, 2.0]),
    )?;
    put(
        out,
        "sidecar_request",
        "hello.bin",
        encode_request(b"hello"),
    )?;

    let requests = [
        (
            "inject_class.json",
            r#"{"id":1,"type":"inject_gesture","camera_id":1,"class":"palm"}"#,
        ),
        (
            "inject_embedding.json",
            r#"{"id":2,"type":"inject_gesture","camera_id":2,"embedding":[0.0,1.0,0.0]}"#,
        ),
        (
            "set_threshold.json",
            r#"{"id":3,"type":"set_threshold","value":0.7}"#,
        ),
        (
            "pair_override.json",
            r#"{"id":4,"type":"pair_override","camera_id":1,"robot_id":2}"#,
        ),
        (
            "scenario_start.json",
            r#"{"id":"s","type":"scenario_start","name":"interactive"}"#,
        ),
        (
            "move_user.json",
            r#"{"id":6,"type":"move_user","marker_id":101,"x":1.5,"y":-0.25}"#,
        ),
    ];
    for (name, line) in requests {
        put(out, "operator_request", name, line)?;
    }

    let mut complete = LatencyRecord::new(0, 1, 1);
    complete.t_capture_us = Some(1_000_000);
    complete.t_frame_complete_us = Some(4_300_000);
    complete.t_infer_start_us = Some(4_300_000);
    complete.t_infer_end_us = Some(4_500_000);
    complete.t_cmd_sent_us = Some(4_500_000);
    complete.t_ack_us = Some(4_950_000);
    let mut partial = LatencyRecord::new(1, 2, 2);
    partial.t_capture_us = Some(5_000_000);
    put(
        out,
        "latency_csv",
        "two_records.csv",
        latency_csv(&[complete, partial]),
    )?;

    let trials = [
        TrialOutcome::new(0, GestureClass::ThumbsUp, Some(Modality::Levitation)),
        TrialOutcome::new(1, GestureClass::Fist, Some(Modality::Haptics)),
        TrialOutcome::new(2, GestureClass::Palm, None),
    ];
    put(out, "trials_csv", "three_trials.csv", trials_csv(&trials))?;

    println!("fixtures written to {}", out.display());
    Ok(())
}
