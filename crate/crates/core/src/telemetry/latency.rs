use serde::Serialize;
use thiserror::Error;

use super::TelemetryError;

pub const HISTOGRAM_BIN_SECONDS: f64 = 0.25;

/// Per-trial timestamps in microseconds. Capture time comes from the camera
/// clock, everything else from the server clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LatencyRecord {
    pub trial_id: u64,
    pub camera_id: u16,
    pub robot_id: u16,
    pub t_capture_us: Option<u64>,
    pub t_frame_complete_us: Option<u64>,
    pub t_infer_start_us: Option<u64>,
    pub t_infer_end_us: Option<u64>,
    pub t_cmd_sent_us: Option<u64>,
    pub t_ack_us: Option<u64>,
}

impl LatencyRecord {
    pub fn new(trial_id: u64, camera_id: u16, robot_id: u16) -> Self {
        LatencyRecord {
            trial_id,
            camera_id,
            robot_id,
            t_capture_us: None,
            t_frame_complete_us: None,
            t_infer_start_us: None,
            t_infer_end_us: None,
            t_cmd_sent_us: None,
            t_ack_us: None,
        }
    }

    pub(crate) fn fields(&self) -> [(&'static str, Option<u64>); 6] {
        [
            ("t_capture_us", self.t_capture_us),
            ("t_frame_complete_us", self.t_frame_complete_us),
            ("t_infer_start_us", self.t_infer_start_us),
            ("t_infer_end_us", self.t_infer_end_us),
            ("t_cmd_sent_us", self.t_cmd_sent_us),
            ("t_ack_us", self.t_ack_us),
        ]
    }

    /// Adds `offset_us` to every present timestamp.
    pub fn shifted(mut self, offset_us: u64) -> Self {
        for t in [
            &mut self.t_capture_us,
            &mut self.t_frame_complete_us,
            &mut self.t_infer_start_us,
            &mut self.t_infer_end_us,
            &mut self.t_cmd_sent_us,
            &mut self.t_ack_us,
        ] {
            *t = t.map(|v| v + offset_us);
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageBreakdown {
    pub stage_a_s: f64,
    pub stage_b_s: f64,
    pub stage_c_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecomposeError {
    #[error("missing timestamp {0}")]
    Missing(&'static str),
    #[error("timestamp {later} precedes {earlier}")]
    NonMonotonic {
        earlier: &'static str,
        later: &'static str,
    },
}

fn seconds(us: u64) -> f64 {
    us as f64 / 1e6
}

pub fn decompose(r: &LatencyRecord) -> Result<StageBreakdown, DecomposeError> {
    let fields = r.fields();
    let mut values = [0u64; 6];
    for (i, (name, v)) in fields.iter().enumerate() {
        values[i] = v.ok_or(DecomposeError::Missing(name))?;
        if i > 0 && values[i] < values[i - 1] {
            return Err(DecomposeError::NonMonotonic {
                earlier: fields[i - 1].0,
                later: name,
            });
        }
    }
    let [capture, complete, infer_start, infer_end, sent, ack] = values;
    Ok(StageBreakdown {
        stage_a_s: seconds(complete - capture),
        stage_b_s: seconds(infer_end - infer_start),
        stage_c_s: seconds(ack - sent),
        total_s: seconds(ack - capture),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// Left edge of the first bin.
    pub start: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    fn build(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = HISTOGRAM_BIN_SECONDS;
        let start = (min / w).floor() * w;
        let bins = ((max - start) / w).floor() as usize + 1;
        let mut counts = vec![0; bins];
        for &v in values {
            let idx = (((v - start) / w).floor() as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Histogram {
            bin_width: w,
            start,
            counts,
        }
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let lo = self.start + i as f64 * self.bin_width;
        (lo, lo + self.bin_width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
}

impl StageStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(StageStats {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            histogram: Histogram::build(values),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencySummary {
    pub complete: usize,
    /// Records excluded for missing or out-of-order timestamps.
    pub incomplete: usize,
    pub stage_a: StageStats,
    pub stage_b: StageStats,
    pub stage_c: StageStats,
    pub total: StageStats,
}

pub fn aggregate(records: &[LatencyRecord]) -> Result<LatencySummary, TelemetryError> {
    let mut stages: Vec<StageBreakdown> = Vec::with_capacity(records.len());
    let mut incomplete = 0;
    for r in records {
        match decompose(r) {
            Ok(b) => stages.push(b),
            Err(_) => incomplete += 1,
        }
    }
    let pick = |f: fn(&StageBreakdown) -> f64| {
        StageStats::from_values(&stages.iter().map(f).collect::<Vec<_>>())
            .ok_or(TelemetryError::NoCompleteRecords)
    };
    Ok(LatencySummary {
        complete: stages.len(),
        incomplete,
        stage_a: pick(|b| b.stage_a_s)?,
        stage_b: pick(|b| b.stage_b_s)?,
        stage_c: pick(|b| b.stage_c_s)?,
        total: pick(|b| b.total_s)?,
    })
}

/// Fraction of complete records whose total is strictly below `seconds`.
pub fn fraction_total_below(records: &[LatencyRecord], seconds: f64) -> Option<f64> {
    let totals: Vec<f64> = records
        .iter()
        .filter_map(|r| decompose(r).ok())
        .map(|b| b.total_s)
        .collect();
    (!totals.is_empty())
        .then(|| totals.iter().filter(|&&t| t < seconds).count() as f64 / totals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(ts: [u64; 6]) -> LatencyRecord {
        LatencyRecord {
            t_capture_us: Some(ts[0]),
            t_frame_complete_us: Some(ts[1]),
            t_infer_start_us: Some(ts[2]),
            t_infer_end_us: Some(ts[3]),
            t_cmd_sent_us: Some(ts[4]),
            t_ack_us: Some(ts[5]),
            ..LatencyRecord::new(0, 1, 1)
        }
    }

    fn total_only(total_us: u64) -> LatencyRecord {
        record([0, 0, 0, 0, 0, total_us])
    }

    #[test]
    fn equal_timestamps_give_zero_stages() {
        let b = decompose(&record([5; 6])).unwrap();
        assert_eq!(
            (b.stage_a_s, b.stage_b_s, b.stage_c_s, b.total_s),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn reference_breakdown() {
        let b = decompose(&record([
            0, 3_300_000, 3_300_000, 3_500_000, 3_500_000, 3_950_000,
        ]))
        .unwrap();
        assert!((b.stage_a_s - 3.3).abs() < 1e-9);
        assert!((b.stage_b_s - 0.2).abs() < 1e-9);
        assert!((b.stage_c_s - 0.45).abs() < 1e-9);
        assert!((b.total_s - 3.95).abs() < 1e-9);
    }

    #[test]
    fn bad_records_are_flagged() {
        assert_eq!(
            decompose(&record([0, 10, 5, 20, 30, 40])),
            Err(DecomposeError::NonMonotonic {
                earlier: "t_frame_complete_us",
                later: "t_infer_start_us"
            })
        );
        let mut r = record([0; 6]);
        r.t_ack_us = None;
        assert_eq!(decompose(&r), Err(DecomposeError::Missing("t_ack_us")));
        let s = aggregate(&[r, total_only(1_000_000)]).unwrap();
        assert_eq!((s.complete, s.incomplete), (1, 1));
        assert_eq!(aggregate(&[r]), Err(TelemetryError::NoCompleteRecords));
    }

    #[test]
    fn aggregate_fixtures() {
        let s = aggregate(&[total_only(2_000_000)]).unwrap();
        assert_eq!((s.total.mean, s.total.std), (2.0, 0.0));

        let s = aggregate(&[total_only(1_000_000), total_only(3_000_000)]).unwrap();
        assert!((s.total.mean - 2.0).abs() < 1e-12);
        assert!((s.total.std - 1.0).abs() < 1e-12);
        assert_eq!(s.total.histogram.start, 1.0);
        assert_eq!(s.total.histogram.counts.len(), 9);
        assert_eq!(s.total.histogram.counts.iter().sum::<usize>(), 2);
    }

    #[test]
    fn reproduces_reference_mean_and_std() {
        // 50 totals: 3.95 +/- 0.43 * z with z = +/-1 alternating, which has
        // population mean 0 and std 1 exactly.
        let records: Vec<_> = (0..50)
            .map(|i| {
                let z = if i % 2 == 0 { 1.0 } else { -1.0 };
                total_only(((3.95 + 0.43 * z) * 1e6f64).round() as u64)
            })
            .collect();
        let s = aggregate(&records).unwrap();
        assert!((s.total.mean - 3.95).abs() < 1e-9);
        assert!((s.total.std - 0.43).abs() < 1e-9);
        assert_eq!(fraction_total_below(&records, 5.0), Some(1.0));
    }

    proptest! {
        #[test]
        fn clock_origin_invariance(
            deltas in prop::array::uniform6(0u64..5_000_000),
            offset in 0u64..1_000_000_000_000,
        ) {
            let mut ts = [0u64; 6];
            let mut acc = 0;
            for (i, d) in deltas.iter().enumerate() {
                acc += d;
                ts[i] = acc;
            }
            let a = decompose(&record(ts)).unwrap();
            let b = decompose(&record(ts).shifted(offset)).unwrap();
            prop_assert!((a.stage_a_s - b.stage_a_s).abs() < 1e-9);
            prop_assert!((a.stage_b_s - b.stage_b_s).abs() < 1e-9);
            prop_assert!((a.stage_c_s - b.stage_c_s).abs() < 1e-9);
            prop_assert!((a.total_s - b.total_s).abs() < 1e-9);
            prop_assert!(a.stage_a_s + a.stage_b_s + a.stage_c_s <= a.total_s + 1e-9);
        }

        #[test]
        fn constant_list_has_zero_std(v in 0u64..10_000_000, n in 1usize..40) {
            let s = aggregate(&vec![total_only(v); n]).unwrap();
            prop_assert!((s.total.mean - v as f64 * 1e-6).abs() < 1e-9);
            prop_assert!(s.total.std < 1e-9);
        }
    }
}
