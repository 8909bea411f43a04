//! Stage-decomposed latency and gesture-to-modality switching accuracy.
//!
//! Stage A runs from frame capture to reassembly completion, stage B covers
//! inference only, stage C runs from command transmission to the robot's
//! acknowledgement. Totals are always measured endpoint to endpoint
//! (`t_ack - t_capture`), so queueing between stages shows up in the total
//! but in no stage.

mod accuracy;
mod latency;
mod report;

use std::sync::{Arc, Mutex};

pub use accuracy::{switching_accuracy, AccuracyRow, AccuracyTable, TrialOutcome};
pub use latency::{
    aggregate, decompose, fraction_total_below, DecomposeError, Histogram, LatencyRecord,
    LatencySummary, StageBreakdown, StageStats, HISTOGRAM_BIN_SECONDS,
};
pub use report::{
    latency_csv, parse_latency_csv, parse_trials_csv, trials_csv, CsvError, SummaryReport,
    LATENCY_CSV_HEADER, TRIALS_CSV_HEADER,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TelemetryError {
    #[error("no complete latency records")]
    NoCompleteRecords,
}

#[derive(Debug, Default)]
struct SinkInner {
    latency: Vec<LatencyRecord>,
    commands_logged: u64,
}

/// Append-only record store shared between producers.
#[derive(Debug, Clone, Default)]
pub struct TelemetrySink {
    inner: Arc<Mutex<SinkInner>>,
}

impl TelemetrySink {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, SinkInner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn push_latency(&self, record: LatencyRecord) {
        self.lock().latency.push(record);
    }

    pub fn note_command(&self) {
        self.lock().commands_logged += 1;
    }

    pub fn commands_logged(&self) -> u64 {
        self.lock().commands_logged
    }

    /// Immutable copy for aggregation.
    pub fn latency_snapshot(&self) -> Vec<LatencyRecord> {
        self.lock().latency.clone()
    }
}
