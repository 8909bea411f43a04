use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use acousto_core::probe::TrainHistory;
use acousto_core::telemetry::{parse_latency_csv, parse_trials_csv, SummaryReport};
use anyhow::anyhow;
use clap::Args;
use serde_json::json;

use crate::svg::{histogram, line_chart, Series};
use crate::{read_text, usage, write_file, CliResult};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Training history CSVs, one per run, in the order to compare them.
    #[arg(long, num_args = 1..)]
    pub history: Vec<PathBuf>,
    /// Run labels, comma separated [default: derived from the file paths].
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    /// Latency CSV written by `sim` or `serve`.
    #[arg(long)]
    pub latency: Option<PathBuf>,
    /// Trials CSV written by `sim`.
    #[arg(long)]
    pub trials: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// `runs/n15/history.csv` is labelled `n15`; `n15.csv` is labelled `n15`.
fn default_label(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    if stem == "history" {
        if let Some(parent) = path
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
        {
            return parent.to_string();
        }
    }
    stem.to_string()
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

struct Run {
    label: String,
    history: TrainHistory,
}

fn histories_report(a: &ReportArgs) -> CliResult<String> {
    if !a.labels.is_empty() && a.labels.len() != a.history.len() {
        return Err(usage(anyhow!(
            "{} labels for {} histories",
            a.labels.len(),
            a.history.len()
        )));
    }
    let mut runs = Vec::new();
    for (i, path) in a.history.iter().enumerate() {
        let history = TrainHistory::from_csv(&read_text(path)?)
            .map_err(|e| usage(anyhow!("{}: {e}", path.display())))?;
        let label = a
            .labels
            .get(i)
            .cloned()
            .unwrap_or_else(|| default_label(path));
        runs.push(Run { label, history });
    }

    for run in &runs {
        let pts = |f: fn(&acousto_core::probe::EpochRecord) -> f64| -> Vec<(f64, f64)> {
            run.history
                .records
                .iter()
                .map(|r| (r.epoch as f64, f(r)))
                .collect()
        };
        let loss = line_chart(
            &format!("{}: loss", run.label),
            "epoch",
            "cross-entropy",
            &[
                Series {
                    name: "train".into(),
                    points: pts(|r| r.train_loss),
                },
                Series {
                    name: "validation".into(),
                    points: pts(|r| r.val_loss),
                },
            ],
        );
        write_file(
            &a.out.join(format!("{}_loss.svg", file_safe(&run.label))),
            loss,
        )?;
        let acc = line_chart(
            &format!("{}: validation accuracy", run.label),
            "epoch",
            "accuracy",
            &[Series {
                name: "validation".into(),
                points: pts(|r| r.val_accuracy),
            }],
        );
        write_file(
            &a.out
                .join(format!("{}_accuracy.svg", file_safe(&run.label))),
            acc,
        )?;
    }
    let overlay = |f: fn(&acousto_core::probe::EpochRecord) -> f64| -> Vec<Series> {
        runs.iter()
            .map(|run| Series {
                name: run.label.clone(),
                points: run
                    .history
                    .records
                    .iter()
                    .map(|r| (r.epoch as f64, f(r)))
                    .collect(),
            })
            .collect()
    };
    write_file(
        &a.out.join("overlay_val_loss.svg"),
        line_chart(
            "validation loss",
            "epoch",
            "cross-entropy",
            &overlay(|r| r.val_loss),
        ),
    )?;
    write_file(
        &a.out.join("overlay_val_accuracy.svg"),
        line_chart(
            "validation accuracy",
            "epoch",
            "accuracy",
            &overlay(|r| r.val_accuracy),
        ),
    )?;

    let finals: Vec<f64> = runs
        .iter()
        .map(|r| {
            r.history
                .final_record()
                .expect("parser rejects empty histories")
                .val_accuracy
        })
        .collect();
    let monotone = finals.windows(2).all(|w| w[1] >= w[0]);
    let mut md = String::from(
        "| run | epochs | initial train loss | final train loss | final val loss | final val accuracy |\n\
         |---|---:|---:|---:|---:|---:|\n",
    );
    let mut rows = Vec::new();
    for run in &runs {
        let first = &run.history.records[0];
        let last = run.history.final_record().expect("non-empty");
        let _ = writeln!(
            md,
            "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} |",
            run.label,
            run.history.records.len(),
            first.train_loss,
            last.train_loss,
            last.val_loss,
            last.val_accuracy
        );
        rows.push(json!({
            "label": run.label,
            "epochs": run.history.records.len(),
            "initial_train_loss": first.train_loss,
            "final_train_loss": last.train_loss,
            "final_val_loss": last.val_loss,
            "final_val_accuracy": last.val_accuracy,
        }));
    }
    let trend = if runs.len() < 2 {
        "single run; no trend to assess".to_string()
    } else if monotone {
        "final validation accuracy is non-decreasing across runs in the given order".to_string()
    } else {
        "final validation accuracy is not monotone across runs in the given order".to_string()
    };
    let _ = writeln!(md, "\n{trend}");
    write_file(&a.out.join("runs.md"), &md)?;
    write_file(
        &a.out.join("runs.json"),
        format!(
            "{:#}\n",
            json!({ "runs": rows, "non_decreasing": monotone })
        ),
    )?;
    Ok(md)
}

fn telemetry_report(a: &ReportArgs) -> CliResult<String> {
    let latency = match &a.latency {
        Some(p) => {
            parse_latency_csv(&read_text(p)?).map_err(|e| usage(anyhow!("{}: {e}", p.display())))?
        }
        None => Vec::new(),
    };
    let trials = match &a.trials {
        Some(p) => {
            parse_trials_csv(&read_text(p)?).map_err(|e| usage(anyhow!("{}: {e}", p.display())))?
        }
        None => Vec::new(),
    };
    let report = SummaryReport::build(&latency, &trials);
    let text = report.render_text();
    write_file(&a.out.join("summary.txt"), &text)?;
    write_file(
        &a.out.join("summary.json"),
        format!("{}\n", report.to_json()),
    )?;
    if let Some(s) = &report.latency {
        let h = &s.total.histogram;
        let bins: Vec<(f64, f64, usize)> = h
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let (lo, hi) = h.bin_edges(i);
                (lo, hi, c)
            })
            .collect();
        write_file(
            &a.out.join("latency_total.svg"),
            histogram("gesture to ack latency", "seconds", &bins),
        )?;
    }
    Ok(text)
}

pub fn run(a: ReportArgs) -> CliResult {
    if a.history.is_empty() && a.latency.is_none() && a.trials.is_none() {
        return Err(usage(anyhow!(
            "give --history files, or --latency and/or --trials"
        )));
    }
    if !a.history.is_empty() {
        print!("{}", histories_report(&a)?);
    }
    if a.latency.is_some() || a.trials.is_some() {
        print!("{}", telemetry_report(&a)?);
    }
    Ok(())
}
