use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{metrics, EvalReport, Predictions};
use crate::data::MultimodalSequence;
use crate::model::{Marn, Task};
use crate::optim::{Adam, AdamConfig};
use crate::params::ParamStore;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] crate::Error),
    #[error("training diverged: non-finite {what} at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize, what: &'static str },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("invalid training configuration: {0}")]
    Config(String),
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_clip() -> f64 {
    1.0
}
fn default_patience() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Global gradient-norm bound; `0` disables clipping.
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    /// Epochs without validation improvement before stopping; `0` disables.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) || !(self.clip_norm >= 0.0) {
            return bad("eps must be positive and clip_norm non-negative");
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// validation accuracy (classification) or MAE (regression)
    pub val_metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// parameters from the epoch with the lowest validation loss
    pub params: ParamStore,
    pub history: Vec<EpochRecord>,
    /// 0 when no epoch ran
    pub best_epoch: usize,
}

fn mean_loss(model: &Marn, store: &ParamStore, seqs: &[MultimodalSequence]) -> crate::Result<f64> {
    let mut total = 0.0;
    for s in seqs {
        total += model.loss_value(store, s)?;
    }
    Ok(total / seqs.len() as f64)
}

/// Mini-batch Adam on `train`, keeping the parameters of the best
/// validation-loss epoch. Batches are reduced in a fixed order, so a run is
/// a deterministic function of its inputs and `cfg.seed`.
pub fn train(
    model: &Marn,
    init: &ParamStore,
    train: &[MultimodalSequence],
    validation: &[MultimodalSequence],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(HarnessError::EmptySplit("train"));
    }
    if validation.is_empty() {
        return Err(HarnessError::EmptySplit("validation"));
    }
    let mut params = init.clone();
    let mut best = init.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut optimizer = Adam::new(cfg.adam(), &params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            params.zero_grad();
            let mut batch_loss = 0.0;
            for &i in chunk {
                batch_loss += model.accumulate_gradients(&mut params, &train[i])?;
            }
            if !batch_loss.is_finite() {
                return Err(HarnessError::Divergence { epoch, batch, what: "loss" });
            }
            params.scale_grads(1.0 / chunk.len() as f64);
            let norm = if cfg.clip_norm > 0.0 { params.clip_grad_norm(cfg.clip_norm) } else { params.grad_norm() };
            if !norm.is_finite() {
                return Err(HarnessError::Divergence { epoch, batch, what: "gradient" });
            }
            optimizer.step(&mut params);
            epoch_loss += batch_loss;
        }
        let val_loss = mean_loss(model, &params, validation)?;
        if !val_loss.is_finite() {
            return Err(HarnessError::Divergence { epoch, batch: 0, what: "validation loss" });
        }
        let val_metric = evaluate(model, &params, validation)?.primary();
        history.push(EpochRecord { epoch, train_loss: epoch_loss / train.len() as f64, val_loss, val_metric });
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best.copy_values_from(&params);
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome { params: best, history, best_epoch })
}

/// Class index (argmax of logits, lowest index on ties) or regression value.
pub fn predict(model: &Marn, store: &ParamStore, seq: &MultimodalSequence) -> crate::Result<f64> {
    let out = model.run(store, seq, false)?;
    Ok(match model.config().task {
        Task::Classification { .. } => {
            let logits = out.prediction.data();
            let mut best = 0;
            for (i, &v) in logits.iter().enumerate() {
                if v > logits[best] {
                    best = i;
                }
            }
            best as f64
        }
        Task::Regression => out.prediction.data()[0],
    })
}

/// Single deterministic pass over `seqs`; parameters are not touched.
pub fn evaluate(model: &Marn, store: &ParamStore, seqs: &[MultimodalSequence]) -> Result<EvalReport, HarnessError> {
    if seqs.is_empty() {
        return Err(HarnessError::EmptySplit("evaluation"));
    }
    let preds = seqs.iter().map(|s| predict(model, store, s)).collect::<crate::Result<Vec<_>>>()?;
    let labels: Vec<f64> = seqs.iter().map(|s| s.label).collect();
    let task = model.config().task;
    let preds = match task {
        Task::Classification { .. } => Predictions::Classes(preds.iter().map(|&p| p as usize).collect()),
        Task::Regression => Predictions::Values(preds),
    };
    Ok(metrics(&preds, &labels, task)?)
}
