use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use super::accuracy::{switching_accuracy, AccuracyTable, TrialOutcome};
use super::latency::{
    aggregate, decompose, fraction_total_below, LatencyRecord, LatencySummary, StageStats,
};
use crate::probe::GestureClass;
use crate::wire::Modality;

pub const LATENCY_CSV_HEADER: &str =
    "trial_id,camera_id,robot_id,t_capture_us,t_frame_complete_us,\
t_infer_start_us,t_infer_end_us,t_cmd_sent_us,t_ack_us,stage_a_s,stage_b_s,stage_c_s,total_s";
pub const TRIALS_CSV_HEADER: &str = "trial_id,intended,observed,correct";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct CsvError {
    pub line: usize,
    pub message: String,
}

fn csv_err(line: usize, message: impl Into<String>) -> CsvError {
    CsvError {
        line,
        message: message.into(),
    }
}

/// Derived stage columns are left empty for incomplete records.
pub fn latency_csv(records: &[LatencyRecord]) -> String {
    let mut out = String::from(LATENCY_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = write!(out, "{},{},{}", r.trial_id, r.camera_id, r.robot_id);
        for (_, v) in r.fields() {
            out.push(',');
            if let Some(v) = v {
                let _ = write!(out, "{v}");
            }
        }
        match decompose(r) {
            Ok(b) => {
                let _ = write!(
                    out,
                    ",{:.6},{:.6},{:.6},{:.6}",
                    b.stage_a_s, b.stage_b_s, b.stage_c_s, b.total_s
                );
            }
            Err(_) => out.push_str(",,,,"),
        }
        out.push('\n');
    }
    out
}

fn check_header(text: &str, header: &str) -> Result<(), CsvError> {
    match text.lines().next() {
        Some(h) if h.trim() == header => Ok(()),
        _ => Err(csv_err(1, format!("expected header `{header}`"))),
    }
}

pub fn parse_latency_csv(text: &str) -> Result<Vec<LatencyRecord>, CsvError> {
    check_header(text, LATENCY_CSV_HEADER)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 13 {
            return Err(csv_err(
                line_no,
                format!("expected 13 columns, got {}", cols.len()),
            ));
        }
        let int = |j: usize| -> Result<u64, CsvError> {
            cols[j]
                .trim()
                .parse()
                .map_err(|_| csv_err(line_no, format!("bad integer in column {}", j + 1)))
        };
        let opt = |j: usize| -> Result<Option<u64>, CsvError> {
            if cols[j].trim().is_empty() {
                Ok(None)
            } else {
                int(j).map(Some)
            }
        };
        let id16 = |j: usize| -> Result<u16, CsvError> {
            u16::try_from(int(j)?)
                .map_err(|_| csv_err(line_no, format!("column {} out of range", j + 1)))
        };
        records.push(LatencyRecord {
            trial_id: int(0)?,
            camera_id: id16(1)?,
            robot_id: id16(2)?,
            t_capture_us: opt(3)?,
            t_frame_complete_us: opt(4)?,
            t_infer_start_us: opt(5)?,
            t_infer_end_us: opt(6)?,
            t_cmd_sent_us: opt(7)?,
            t_ack_us: opt(8)?,
        });
    }
    Ok(records)
}

pub fn trials_csv(trials: &[TrialOutcome]) -> String {
    let mut out = String::from(TRIALS_CSV_HEADER);
    out.push('\n');
    for t in trials {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            t.trial_id,
            t.intended.name(),
            t.observed.map_or("none", |m| m.name()),
            t.correct
        );
    }
    out
}

pub fn parse_trials_csv(text: &str) -> Result<Vec<TrialOutcome>, CsvError> {
    check_header(text, TRIALS_CSV_HEADER)?;
    let mut trials = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(csv_err(
                line_no,
                format!("expected 4 columns, got {}", cols.len()),
            ));
        }
        let trial_id = cols[0]
            .parse()
            .map_err(|_| csv_err(line_no, "bad trial id"))?;
        let intended: GestureClass = cols[1].parse().map_err(|e: String| csv_err(line_no, e))?;
        let observed = match cols[2] {
            "none" => None,
            s => Some(s.parse::<Modality>().map_err(|e| csv_err(line_no, e))?),
        };
        let outcome = TrialOutcome::new(trial_id, intended, observed);
        let stored: bool = cols[3]
            .parse()
            .map_err(|_| csv_err(line_no, "bad correct flag"))?;
        if stored != outcome.correct {
            return Err(csv_err(
                line_no,
                "correct flag disagrees with the gesture mapping",
            ));
        }
        trials.push(outcome);
    }
    Ok(trials)
}

/// Everything the `report` subcommand prints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub latency: Option<LatencySummary>,
    pub fraction_total_under_5s: Option<f64>,
    pub accuracy: Option<AccuracyTable>,
}

impl SummaryReport {
    pub fn build(latency: &[LatencyRecord], trials: &[TrialOutcome]) -> Self {
        SummaryReport {
            latency: aggregate(latency).ok(),
            fraction_total_under_5s: fraction_total_below(latency, 5.0),
            accuracy: (!trials.is_empty()).then(|| switching_accuracy(trials)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        match &self.latency {
            Some(s) => {
                let _ = writeln!(
                    out,
                    "Latency ({} complete, {} incomplete records)",
                    s.complete, s.incomplete
                );
                let _ = writeln!(
                    out,
                    "{:<10}{:>10}{:>10}{:>10}{:>10}",
                    "stage", "mean_s", "std_s", "min_s", "max_s"
                );
                let rows: [(&str, &StageStats); 4] = [
                    ("A", &s.stage_a),
                    ("B", &s.stage_b),
                    ("C", &s.stage_c),
                    ("total", &s.total),
                ];
                for (name, st) in rows {
                    let _ = writeln!(
                        out,
                        "{:<10}{:>10.3}{:>10.3}{:>10.3}{:>10.3}",
                        name, st.mean, st.std, st.min, st.max
                    );
                }
                if let Some(f) = self.fraction_total_under_5s {
                    let _ = writeln!(out, "total under 5 s: {:.1}%", f * 100.0);
                }
                let _ = writeln!(out, "total histogram (0.25 s bins):");
                let h = &s.total.histogram;
                for (i, c) in h.counts.iter().enumerate() {
                    let (lo, hi) = h.bin_edges(i);
                    let _ = writeln!(out, "  [{lo:.2}, {hi:.2}) {c:>4} {}", "#".repeat(*c));
                }
            }
            None => out.push_str("Latency: no complete records\n"),
        }
        if let Some(table) = &self.accuracy {
            out.push('\n');
            out.push_str(&table.render_text());
        }
        out
    }
}
