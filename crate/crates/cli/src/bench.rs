use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use acousto_core::coordinator::{Coordinator, CoordinatorEvent, InferenceTiming};
use acousto_core::embeddings::orthogonal_means;
use acousto_core::live::wall_clock_us;
use acousto_core::probe::Embedding;
use acousto_core::sim::default_sim_config;
use acousto_core::telemetry::{aggregate, latency_csv, StageStats, TelemetrySink};
use acousto_core::wire::{chunk_frame, AckMessage, PoseMessage, Reassembler, MAX_CHUNK_PAYLOAD};
use anyhow::anyhow;
use clap::Args;
use serde_json::json;

use crate::simulate::load_probe;
use crate::{load_config, runtime, usage, write_file, CliResult};

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Frames pushed through the pipeline.
    #[arg(long, default_value_t = 600)]
    pub frames: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Bytes per UDP chunk.
    #[arg(long, default_value_t = MAX_CHUNK_PAYLOAD)]
    pub chunk_size: usize,
    /// Output directory for latency.csv and bench.json.
    #[arg(long)]
    pub out: PathBuf,
}

fn stats_us(s: &StageStats) -> serde_json::Value {
    json!({ "mean_us": s.mean * 1e6, "std_us": s.std * 1e6, "min_us": s.min * 1e6, "max_us": s.max * 1e6 })
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx]
}

/// Times chunking, reassembly, embedding, classification, gating and
/// command generation on the wall clock, with robots acking at once.
/// Stage A here covers chunking and reassembly only.
pub fn run(a: BenchArgs) -> CliResult {
    if a.frames == 0 {
        return Err(usage(anyhow!("--frames must be at least 1")));
    }
    let config = load_config(a.config.as_ref(), default_sim_config)?;
    let probe = load_probe(a.checkpoint.as_ref(), &config)?;
    let dim = config.provider.embed_dim;
    let pairing = config.pairing[0];
    let debounce = config.debounce_n.max(1) as usize;
    let provider = config.provider.build().map_err(usage)?;
    let sink = TelemetrySink::new();
    let mut coordinator = Coordinator::new(
        config.clone(),
        probe,
        provider,
        InferenceTiming::Measured,
        sink.clone(),
    )
    .map_err(usage)?;
    let mut reassembler = Reassembler::new(config.reassembly);
    let means = orthogonal_means(dim.max(3));
    let payloads: Vec<Vec<u8>> = means
        .iter()
        .map(|m| Embedding::new(m[..dim].to_vec(), dim).map(|e| e.to_le_bytes()))
        .collect::<Result<_, _>>()
        .map_err(runtime)?;

    let mut frame_us = Vec::with_capacity(a.frames);
    for i in 0..a.frames {
        let started = Instant::now();
        let now = wall_clock_us();
        coordinator.ingest_pose(
            PoseMessage::planar(pairing.robot_marker(), now, 0.0, 0.0, 0.0),
            now,
        );
        coordinator.ingest_pose(
            PoseMessage::planar(pairing.user_marker_id, now, 1.0, 0.0, 0.0),
            now,
        );
        // Hold each class for one debounce window so every window switches.
        let class = (i / debounce) % 3;
        let chunks = chunk_frame(
            pairing.camera_id,
            i as u32,
            now,
            &payloads[class],
            a.chunk_size,
        )
        .map_err(runtime)?;
        for c in chunks {
            if let Some(frame) = reassembler.push(c, wall_clock_us()) {
                coordinator.ingest_frame(frame);
            }
        }
        let out = coordinator.tick(wall_clock_us());
        for e in out.events {
            if let CoordinatorEvent::Command {
                robot_id, cmd_seq, ..
            } = e
            {
                let ack = AckMessage {
                    robot_id,
                    cmd_seq,
                    ts_us: wall_clock_us(),
                };
                coordinator.ingest_ack(&ack, ack.ts_us);
            }
        }
        frame_us.push(started.elapsed().as_secs_f64() * 1e6);
    }

    let records = sink.latency_snapshot();
    write_file(&a.out.join("latency.csv"), latency_csv(&records))?;
    let summary = aggregate(&records).map_err(runtime)?;
    let mut sorted = frame_us.clone();
    sorted.sort_by(f64::total_cmp);
    let per_frame = StageStats::from_values(&frame_us).expect("frames > 0");
    let bench = json!({
        "frames": a.frames,
        "embed_dim": dim,
        "commands": records.len(),
        "per_frame": {
            "mean_us": per_frame.mean,
            "std_us": per_frame.std,
            "p50_us": percentile(&sorted, 0.5),
            "p99_us": percentile(&sorted, 0.99),
            "max_us": per_frame.max,
        },
        "stage_a": stats_us(&summary.stage_a),
        "stage_b": stats_us(&summary.stage_b),
        "stage_c": stats_us(&summary.stage_c),
        "total": stats_us(&summary.total),
    });
    write_file(&a.out.join("bench.json"), format!("{bench:#}\n"))?;

    let mut text = format!(
        "{} frames, {} modality commands, embed_dim {dim}\nper frame: mean {:.1} us, p50 {:.1} us, p99 {:.1} us\n",
        a.frames,
        records.len(),
        per_frame.mean,
        percentile(&sorted, 0.5),
        percentile(&sorted, 0.99)
    );
    for (name, s) in [
        ("A (reassembly)", &summary.stage_a),
        ("B (inference)", &summary.stage_b),
        ("C (ack)", &summary.stage_c),
        ("total", &summary.total),
    ] {
        let _ = writeln!(
            text,
            "  {name:<15} mean {:>9.1} us  std {:>9.1} us",
            s.mean * 1e6,
            s.std * 1e6
        );
    }
    print!("{text}");
    Ok(())
}
