use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::optim::{adamw_step, AdamW, AdamWState};
use super::split::{split_dataset, LabeledDataset};
use super::{argmax, GestureClass, LinearProbe, ProbeError, DEFAULT_EMBED_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub split_ratio: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = AdamW::default();
        TrainConfig {
            embed_dim: DEFAULT_EMBED_DIM,
            learning_rate: opt.learning_rate,
            weight_decay: opt.weight_decay,
            beta1: opt.beta1,
            beta2: opt.beta2,
            eps: opt.eps,
            epochs: 50,
            batch_size: 5,
            split_ratio: 0.8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ProbeError> {
        let bad = |msg: String| Err(ProbeError::InvalidConfig(msg));
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} not in (0, 1)", self.split_ratio));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!(
                "weight_decay {} must be non-negative",
                self.weight_decay
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive".into());
        }
        if self.embed_dim == 0 {
            return bad("embed_dim must be positive".into());
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the training split for the parameters entering this
    /// epoch; epoch 0 therefore reports the loss of the initial probe.
    pub train_loss: f64,
    /// Validation metrics of the probe after the epoch's last update.
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub epoch_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct HistoryParseError {
    pub line: usize,
    pub message: String,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,val_accuracy,epoch_seconds";

impl TrainHistory {
    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6}",
                r.epoch, r.train_loss, r.val_loss, r.val_accuracy, r.epoch_seconds
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, HistoryParseError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == HISTORY_HEADER => {}
            _ => {
                return Err(HistoryParseError {
                    line: 1,
                    message: format!("expected header `{HISTORY_HEADER}`"),
                })
            }
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| HistoryParseError {
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", fields.len())));
            }
            let num = |idx: usize| -> Result<f64, HistoryParseError> {
                fields[idx]
                    .parse::<f64>()
                    .map_err(|e| err(format!("field {}: {e}", idx + 1)))
            };
            records.push(EpochRecord {
                epoch: fields[0]
                    .parse()
                    .map_err(|e| err(format!("field 1: {e}")))?,
                train_loss: num(1)?,
                val_loss: num(2)?,
                val_accuracy: num(3)?,
                epoch_seconds: num(4)?,
            });
        }
        if records.is_empty() {
            return Err(HistoryParseError {
                line: 1,
                message: "no epoch rows".into(),
            });
        }
        Ok(TrainHistory { records })
    }
}

fn accuracy(probe: &LinearProbe, ds: &LabeledDataset) -> Result<f64, ProbeError> {
    let mut correct = 0usize;
    for (e, label) in ds.pairs() {
        if argmax(&probe.forward(e)?) == Some(label) {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

/// Trains a zero-initialised probe with mini-batch AdamW.
///
/// The split uses `cfg.seed`; per-epoch shuffles draw from a second ChaCha
/// stream of the same seed, so a run is bitwise reproducible from
/// `(dataset, cfg)`.
pub fn train(
    ds: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(LinearProbe, TrainHistory), ProbeError> {
    cfg.validate()?;
    if ds.dim() != cfg.embed_dim {
        return Err(ProbeError::DimensionMismatch {
            expected: cfg.embed_dim,
            actual: ds.dim(),
        });
    }
    let (train_set, val_set) = split_dataset(ds, cfg.split_ratio, cfg.seed)?;
    let mut probe = LinearProbe::zeros(cfg.embed_dim, GestureClass::default_names())?;
    let mut state = AdamWState::new(probe.params().len());
    let opt = cfg.optimizer();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let train_pairs: Vec<_> = train_set.pairs().collect();
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let train_loss = probe.mean_loss(train_pairs.iter().copied())?;
        order.shuffle(&mut rng);
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<_> = chunk.iter().map(|&i| train_pairs[i]).collect();
            let wrap = |source: ProbeError| ProbeError::Diverged {
                epoch,
                batch: batch_idx,
                source: Box::new(source),
            };
            let (_, grad) = probe.loss_and_grad(&batch).map_err(wrap)?;
            adamw_step(probe.params_mut(), &grad, &mut state, &opt).map_err(wrap)?;
        }
        let val_loss = probe.mean_loss(val_set.pairs())?;
        let val_accuracy = accuracy(&probe, &val_set)?;
        history.records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
            epoch_seconds: started.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch}: train {train_loss:.4} val {val_loss:.4} acc {val_accuracy:.3}");
    }
    Ok((probe, history))
}
