use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use acousto_core::coordinator::CoordinatorConfig;
use acousto_core::probe::{load_checkpoint, GestureClass, LinearProbe};
use acousto_core::sim::{
    bundled_scenario, default_sim_config, run_scenario, train_reference_probe, trajectory_csv,
    FlipProb, Scenario, SimError, SimResult,
};
use acousto_core::telemetry::{latency_csv, switching_accuracy, trials_csv, SummaryReport};
use anyhow::anyhow;
use clap::Args;
use serde_json::{json, Value};

use crate::{load_config, read_text, runtime, usage, write_file, CliResult};

/// Seed of the probe trained when no checkpoint is given.
pub const REFERENCE_PROBE_SEED: u64 = 0;

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Scenario file, or the name of a bundled scenario (table1, latency50,
    /// crossing, follow, dropout, interactive).
    #[arg(long)]
    pub scenario: String,
    /// Coordinator config [default: $ACOUSTO_CONFIG, else two built-in pairings].
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Probe checkpoint [default: train the reference probe in memory].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Runs this many consecutive seeds and aggregates them.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Disables gesture misclassification flips.
    #[arg(long)]
    pub clean: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn load_scenario(spec: &str) -> CliResult<Scenario> {
    let path = Path::new(spec);
    let text = if path.is_file() {
        read_text(path)?
    } else {
        bundled_scenario(spec)
            .ok_or_else(|| usage(anyhow!("`{spec}` is neither a file nor a bundled scenario")))?
            .to_string()
    };
    Scenario::from_toml_str(&text).map_err(|e| usage(anyhow!("scenario {spec}: {e}")))
}

pub fn load_probe(
    checkpoint: Option<&PathBuf>,
    config: &CoordinatorConfig,
) -> CliResult<LinearProbe> {
    match checkpoint {
        Some(p) => {
            let bytes =
                std::fs::read(p).map_err(|e| usage(anyhow!("cannot read {}: {e}", p.display())))?;
            load_checkpoint(&bytes).map_err(|e| usage(anyhow!("{}: {e}", p.display())))
        }
        None => {
            log::info!("no checkpoint given; training the reference probe");
            train_reference_probe(config.provider.embed_dim, REFERENCE_PROBE_SEED).map_err(runtime)
        }
    }
}

fn sim_error(e: SimError) -> crate::CliError {
    match e {
        SimError::Parse(_)
        | SimError::Scenario(_)
        | SimError::Config(_)
        | SimError::Coordinator(_) => usage(e),
        SimError::Probe(_) | SimError::Wire(_) => runtime(e),
    }
}

fn write_run(dir: &Path, result: &SimResult, report: &SummaryReport) -> CliResult {
    write_file(&dir.join("latency.csv"), latency_csv(&result.latency))?;
    write_file(&dir.join("trials.csv"), trials_csv(&result.trials))?;
    write_file(
        &dir.join("trajectory.csv"),
        trajectory_csv(&result.trajectory),
    )?;
    write_file(&dir.join("summary.txt"), render_summary(result, report))?;
    write_file(
        &dir.join("summary.json"),
        format!("{:#}\n", run_json(result, report)),
    )
}

fn run_json(result: &SimResult, report: &SummaryReport) -> Value {
    json!({
        "scenario": result.scenario,
        "seed": result.seed,
        "duration_s": result.duration_us as f64 / 1e6,
        "report": report,
        "min_separation_m": result.min_separation,
        "safe_stops": result.safe_stops.iter().map(|(r, t)| json!({"robot_id": r, "t_s": *t as f64 / 1e6})).collect::<Vec<_>>(),
        "counters": result.counters,
        "dropped_chunks": result.dropped_chunks,
    })
}

fn render_summary(result: &SimResult, report: &SummaryReport) -> String {
    let mut out = format!(
        "scenario {} seed {}: {:.1} s simulated, {} trials\n\n",
        result.scenario,
        result.seed,
        result.duration_us as f64 / 1e6,
        result.trials.len()
    );
    out.push_str(&report.render_text());
    if let Some(d) = result.min_separation {
        let _ = writeln!(out, "\nminimum robot separation: {d:.3} m");
    }
    let _ = writeln!(out, "safe stops: {}", result.safe_stops.len());
    out
}

pub fn run(a: SimArgs) -> CliResult {
    if a.seeds == 0 {
        return Err(usage(anyhow!("--seeds must be at least 1")));
    }
    let config = load_config(a.config.as_ref(), default_sim_config)?;
    let mut scenario = load_scenario(&a.scenario)?;
    if a.clean {
        scenario.noise.flip_prob = FlipProb {
            thumbs_up: 0.0,
            fist: 0.0,
            palm: 0.0,
        };
    }
    if scenario.effective_duration_s().is_none() {
        return Err(usage(anyhow!(
            "scenario `{}` is open-ended; use `serve --scenario` or set duration_s",
            scenario.name
        )));
    }
    scenario.validate(&config).map_err(sim_error)?;
    let probe = load_probe(a.checkpoint.as_ref(), &config)?;
    let base_seed = a.seed.unwrap_or(scenario.seed);

    if a.seeds == 1 {
        scenario.seed = base_seed;
        let result = run_scenario(&scenario, &config, &probe).map_err(sim_error)?;
        let report = SummaryReport::build(&result.latency, &result.trials);
        write_run(&a.out, &result, &report)?;
        print!("{}", render_summary(&result, &report));
        return Ok(());
    }

    let mut runs = Vec::new();
    let mut all_latency = Vec::new();
    let mut all_trials = Vec::new();
    let mut per_seed = Vec::new();
    for seed in base_seed..base_seed + a.seeds {
        scenario.seed = seed;
        let result = run_scenario(&scenario, &config, &probe).map_err(sim_error)?;
        let report = SummaryReport::build(&result.latency, &result.trials);
        write_run(&a.out.join(format!("seed-{seed}")), &result, &report)?;
        per_seed.push(switching_accuracy(&result.trials));
        runs.push(run_json(&result, &report));
        all_latency.extend(result.latency);
        all_trials.extend(result.trials);
    }
    let pooled = SummaryReport::build(&all_latency, &all_trials);
    let mean_of =
        |f: &dyn Fn(&acousto_core::telemetry::AccuracyTable) -> Option<f64>| -> Option<f64> {
            let v: Vec<f64> = per_seed.iter().filter_map(f).collect();
            (v.len() == per_seed.len()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
    let mut mean_accuracy = serde_json::Map::new();
    for class in GestureClass::ALL {
        mean_accuracy.insert(
            class.name().to_string(),
            json!(mean_of(&|t| t.row(class).fraction())),
        );
    }
    mean_accuracy.insert("overall".into(), json!(mean_of(&|t| t.overall.fraction())));

    let summary = json!({
        "scenario": scenario.name,
        "seeds": (base_seed..base_seed + a.seeds).collect::<Vec<_>>(),
        "clean": a.clean,
        "mean_accuracy": mean_accuracy,
        "pooled": pooled,
        "runs": runs,
    });
    write_file(&a.out.join("summary.json"), format!("{summary:#}\n"))?;

    let mut text = format!(
        "scenario {} over {} seeds ({}..={})\n\nmean per-seed accuracy:\n",
        scenario.name,
        a.seeds,
        base_seed,
        base_seed + a.seeds - 1
    );
    for class in GestureClass::ALL {
        let v = mean_of(&|t| t.row(class).fraction());
        let label = per_seed[0].row(class).label();
        let _ = writeln!(
            text,
            "  {label:<10} {}",
            v.map_or("n/a".into(), |v| format!("{:.1}%", v * 100.0))
        );
    }
    let overall = mean_of(&|t| t.overall.fraction());
    let _ = writeln!(
        text,
        "  {:<10} {}",
        "Overall",
        overall.map_or("n/a".into(), |v| format!("{:.1}%", v * 100.0))
    );
    text.push_str("\npooled over all seeds:\n");
    text.push_str(&pooled.render_text());
    write_file(&a.out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}
