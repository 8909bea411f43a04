use std::path::PathBuf;
use std::time::Duration;

use acousto_core::coordinator::{Coordinator, InferenceTiming};
use acousto_core::live::{serve_interactive, serve_udp, InteractiveSetup, LiveOptions, UdpLink};
use acousto_core::operator::OperatorServer;
use acousto_core::sim::default_sim_config;
use acousto_core::telemetry::{latency_csv, TelemetrySink};
use anyhow::anyhow;
use clap::Args;

use crate::simulate::{load_probe, load_scenario};
use crate::{load_config, runtime, usage, write_file, CliResult};

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Coordinator config [default: $ACOUSTO_CONFIG, else two built-in pairings].
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Probe checkpoint [default: the config's checkpoint, else the reference probe].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Drive a simulated world (for example `interactive`) instead of UDP.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Operator API port; overrides the config.
    #[arg(long)]
    pub operator_port: Option<u16>,
    /// Stop after this many seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Write the session's latency records here on exit (UDP mode).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(a: ServeArgs) -> CliResult {
    let mut config = load_config(a.config.as_ref(), default_sim_config)?;
    if let Some(port) = a.operator_port {
        config.ports.operator = port;
    }
    let checkpoint = a.checkpoint.clone().or_else(|| config.checkpoint.clone());
    let probe = load_probe(checkpoint.as_ref(), &config)?;
    let max_duration = match a.duration {
        Some(d) if d.is_finite() && d > 0.0 => Some(Duration::from_secs_f64(d)),
        Some(d) => return Err(usage(anyhow!("--duration must be positive, got {d}"))),
        None => None,
    };
    let opts = LiveOptions {
        max_duration,
        ..LiveOptions::default()
    };
    let op_addr = format!("{}:{}", config.ports.bind, config.ports.operator);
    let operator = OperatorServer::bind(&op_addr)
        .map_err(|e| runtime(anyhow!("operator port {op_addr}: {e}")))?;
    eprintln!("operator API listening on {}", operator.local_addr());

    if let Some(name) = a.scenario {
        let scenario = load_scenario(&name)?;
        scenario.validate(&config).map_err(usage)?;
        let setup = InteractiveSetup {
            scenario,
            config,
            probe,
        };
        let reached = serve_interactive(setup, &operator, &opts).map_err(runtime)?;
        eprintln!("stopped at simulated t = {:.1} s", reached as f64 / 1e6);
        return Ok(());
    }

    let link = UdpLink::bind(&config.ports).map_err(runtime)?;
    eprintln!(
        "frames on {}, poses on {}, acks on {}; commands to {}:{}",
        link.frame_addr().map_err(runtime)?,
        link.pose_addr().map_err(runtime)?,
        link.ack_addr().map_err(runtime)?,
        config.ports.robot_host,
        config.ports.command
    );
    let provider = config.provider.build().map_err(usage)?;
    let sink = TelemetrySink::new();
    let coordinator = Coordinator::new(
        config,
        probe,
        provider,
        InferenceTiming::Measured,
        sink.clone(),
    )
    .map_err(usage)?;
    let stats = serve_udp(coordinator, link, Some(&operator), &opts).map_err(runtime)?;
    eprintln!(
        "received {} datagrams ({} undecodable)",
        stats.datagrams.load(std::sync::atomic::Ordering::Relaxed),
        stats
            .decode_errors
            .load(std::sync::atomic::Ordering::Relaxed)
    );
    if let Some(dir) = a.out {
        write_file(
            &dir.join("latency.csv"),
            latency_csv(&sink.latency_snapshot()),
        )?;
    }
    Ok(())
}
