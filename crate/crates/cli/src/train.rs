use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use acousto_core::embeddings::{
    generate_synthetic_dataset, parse_dataset, write_dataset, SyntheticDatasetSpec,
};
use acousto_core::probe::{
    evaluate, load_checkpoint, save_checkpoint, train, GestureClass, LabeledDataset, ProbeError,
    TrainConfig,
};
use anyhow::anyhow;
use clap::Args;

use crate::{read_text, runtime, usage, write_file, CliResult};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Embeddings file (see `gen-data`).
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch history CSV [default: history.csv next to the checkpoint].
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub weight_decay: f64,
    /// Fraction of samples used for training.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Print metrics as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 512)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.35)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn load_dataset(path: &Path) -> CliResult<LabeledDataset> {
    let text = read_text(path)?;
    parse_dataset(&text, &path.display().to_string())
        .map_err(|e| usage(anyhow!("{}: {e}", path.display())))
}

/// Configuration problems are usage errors; anything else during training
/// is a runtime failure.
fn probe_error(e: ProbeError) -> crate::CliError {
    match e {
        ProbeError::InvalidConfig(_)
        | ProbeError::DimensionMismatch { .. }
        | ProbeError::EmptySplit { .. } => usage(e),
        other => runtime(other),
    }
}

pub fn run_train(a: TrainArgs) -> CliResult {
    let ds = load_dataset(&a.data)?;
    let cfg = TrainConfig {
        embed_dim: ds.dim(),
        learning_rate: a.lr,
        weight_decay: a.weight_decay,
        epochs: a.epochs,
        batch_size: a.batch_size,
        split_ratio: a.split,
        seed: a.seed,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(probe_error)?;
    let (probe, history) = train(&ds, &cfg).map_err(probe_error)?;
    let history_path = a.history.unwrap_or_else(|| {
        a.out
            .parent()
            .map_or_else(|| PathBuf::from("history.csv"), |p| p.join("history.csv"))
    });
    write_file(&a.out, save_checkpoint(&probe))?;
    write_file(&history_path, history.to_csv())?;
    let last = history.final_record().expect("at least one epoch");
    println!(
        "trained {} samples for {} epochs: train loss {:.4} -> val loss {:.4}",
        ds.len(),
        history.records.len(),
        history.records[0].train_loss,
        last.val_loss
    );
    println!("final val accuracy: {:.4}", last.val_accuracy);
    log::info!(
        "checkpoint {} history {}",
        a.out.display(),
        history_path.display()
    );
    Ok(())
}

pub fn run_eval(a: EvalArgs) -> CliResult {
    let bytes = std::fs::read(&a.checkpoint)
        .map_err(|e| usage(anyhow!("cannot read {}: {e}", a.checkpoint.display())))?;
    let probe =
        load_checkpoint(&bytes).map_err(|e| usage(anyhow!("{}: {e}", a.checkpoint.display())))?;
    let ds = load_dataset(&a.data)?;
    let m = evaluate(&probe, &ds).map_err(probe_error)?;
    if a.json {
        let v = serde_json::json!({
            "samples": ds.len(),
            "accuracy": m.accuracy,
            "mean_loss": m.mean_loss,
            "per_class_accuracy": m.per_class_accuracy,
            "confusion": m.confusion.rows(),
        });
        println!("{v}");
        return Ok(());
    }
    let mut out = String::new();
    let _ = writeln!(out, "samples: {}", ds.len());
    let _ = writeln!(out, "accuracy: {:.4}", m.accuracy);
    let _ = writeln!(out, "mean loss: {:.4}", m.mean_loss);
    for (i, acc) in m.per_class_accuracy.iter().enumerate() {
        let name = GestureClass::from_index(i).map_or("?", |c| c.name());
        match acc {
            Some(a) => {
                let _ = writeln!(out, "  {name:<10} {a:.4}");
            }
            None => {
                let _ = writeln!(out, "  {name:<10} n/a");
            }
        }
    }
    let _ = writeln!(out, "confusion (rows = truth):");
    for row in m.confusion.rows() {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>6}")).collect();
        let _ = writeln!(out, "{}", cells.join(""));
    }
    print!("{out}");
    Ok(())
}

pub fn run_gen_data(a: GenDataArgs) -> CliResult {
    if a.n < 3 {
        return Err(usage(anyhow!("--n must be at least 3, got {}", a.n)));
    }
    let spec = SyntheticDatasetSpec::orthogonal(a.n, a.dim, a.noise_std, a.seed);
    let ds = generate_synthetic_dataset(&spec).map_err(usage)?;
    write_file(&a.out, write_dataset(&ds))?;
    let counts = ds.class_counts();
    println!(
        "wrote {} samples (dim {}, per class {}/{}/{}) to {}",
        ds.len(),
        ds.dim(),
        counts[0],
        counts[1],
        counts[2],
        a.out.display()
    );
    Ok(())
}
