use serde::Serialize;

use crate::coordinator::map_gesture_to_modality;
use crate::probe::GestureClass;
use crate::wire::Modality;

/// One scored trial: the gesture the operator intended and the modality the
/// robot ended up acknowledging, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialOutcome {
    pub trial_id: u64,
    pub intended: GestureClass,
    pub observed: Option<Modality>,
    pub correct: bool,
}

impl TrialOutcome {
    pub fn new(trial_id: u64, intended: GestureClass, observed: Option<Modality>) -> Self {
        TrialOutcome {
            trial_id,
            intended,
            observed,
            correct: observed == Some(map_gesture_to_modality(intended)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    /// `None` for the overall row.
    pub class: Option<GestureClass>,
    pub trials: usize,
    pub correct: usize,
}

impl AccuracyRow {
    pub fn fraction(&self) -> Option<f64> {
        (self.trials > 0).then(|| self.correct as f64 / self.trials as f64)
    }

    /// Percentage rounded to one decimal.
    pub fn percent(&self) -> Option<f64> {
        self.fraction().map(|f| (f * 1000.0).round() / 10.0)
    }

    pub fn label(&self) -> &'static str {
        match self.class {
            Some(GestureClass::ThumbsUp) => "Thumbs Up",
            Some(GestureClass::Fist) => "Fist",
            Some(GestureClass::Palm) => "Palm",
            None => "Overall",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyTable {
    pub rows: Vec<AccuracyRow>,
    pub overall: AccuracyRow,
}

impl AccuracyTable {
    pub fn row(&self, class: GestureClass) -> &AccuracyRow {
        &self.rows[class.index()]
    }

    pub fn render_text(&self) -> String {
        let mut out = format!(
            "{:<14}{:>8}{:>9}{:>14}\n",
            "Gesture Class", "Trials", "Correct", "Accuracy (%)"
        );
        for row in self.rows.iter().chain(std::iter::once(&self.overall)) {
            let pct = row
                .percent()
                .map_or_else(|| "-".to_string(), |p| format!("{p:.1}"));
            out.push_str(&format!(
                "{:<14}{:>8}{:>9}{:>14}\n",
                row.label(),
                row.trials,
                row.correct,
                pct
            ));
        }
        out
    }
}

pub fn switching_accuracy(trials: &[TrialOutcome]) -> AccuracyTable {
    let mut rows: Vec<AccuracyRow> = GestureClass::ALL
        .iter()
        .map(|&c| AccuracyRow {
            class: Some(c),
            trials: 0,
            correct: 0,
        })
        .collect();
    for t in trials {
        let row = &mut rows[t.intended.index()];
        row.trials += 1;
        row.correct += usize::from(t.correct);
    }
    let overall = AccuracyRow {
        class: None,
        trials: rows.iter().map(|r| r.trials).sum(),
        correct: rows.iter().map(|r| r.correct).sum(),
    };
    AccuracyTable { rows, overall }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcomes(class: GestureClass, n: usize, correct: usize, start: u64) -> Vec<TrialOutcome> {
        let right = map_gesture_to_modality(class);
        let wrong = Modality::ALL
            .into_iter()
            .find(|m| *m != right && *m != Modality::Idle)
            .unwrap();
        (0..n)
            .map(|i| {
                let observed = if i < correct { right } else { wrong };
                TrialOutcome::new(start + i as u64, class, Some(observed))
            })
            .collect()
    }

    #[test]
    fn reference_table() {
        let mut trials = outcomes(GestureClass::ThumbsUp, 30, 24, 0);
        trials.extend(outcomes(GestureClass::Fist, 30, 26, 100));
        trials.extend(outcomes(GestureClass::Palm, 30, 29, 200));
        let table = switching_accuracy(&trials);
        assert_eq!(table.row(GestureClass::ThumbsUp).percent(), Some(80.0));
        assert_eq!(table.row(GestureClass::Fist).percent(), Some(86.7));
        assert_eq!(table.row(GestureClass::Palm).percent(), Some(96.7));
        assert_eq!((table.overall.trials, table.overall.correct), (90, 79));
        assert_eq!(table.overall.percent(), Some(87.8));
        let text = table.render_text();
        assert!(text.contains("Overall"));
        assert!(text.contains("87.8"));
    }

    #[test]
    fn missing_observation_is_incorrect() {
        let t = TrialOutcome::new(0, GestureClass::Palm, None);
        assert!(!t.correct);
        assert!(TrialOutcome::new(1, GestureClass::Palm, Some(Modality::Haptics)).correct);
    }

    #[test]
    fn empty_class_has_no_percentage() {
        let table = switching_accuracy(&outcomes(GestureClass::Fist, 3, 3, 0));
        assert_eq!(table.row(GestureClass::Palm).percent(), None);
        assert_eq!(table.overall.percent(), Some(100.0));
    }
}
