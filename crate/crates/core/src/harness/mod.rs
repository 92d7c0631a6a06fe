//! Losses, metrics, training and evaluation.

mod metrics;
mod train;

pub use metrics::{metrics, EvalReport, Predictions};
pub use train::{evaluate, predict, train, EpochRecord, HarnessError, TrainConfig, TrainOutcome};

use std::io::Write;

/// Writes `epoch,train_loss,val_loss,val_metric` rows.
pub fn write_history_csv(mut sink: impl Write, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(sink, "epoch,train_loss,val_loss,val_metric")?;
    for r in history {
        writeln!(sink, "{},{:?},{:?},{:?}", r.epoch, r.train_loss, r.val_loss, r.val_metric)?;
    }
    sink.flush()
}

/// `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> crate::Result<f64> {
    if logits.len() < 2 || label >= logits.len() {
        return Err(crate::Error::LabelOutOfRange { label, classes: logits.len() });
    }
    Ok(crate::tape::log_sum_exp(logits) - logits[label])
}

pub fn mse(pred: f64, target: f64) -> f64 {
    (pred - target) * (pred - target)
}

/// Mean squared error over paired slices.
pub fn mean_mse(preds: &[f64], targets: &[f64]) -> f64 {
    preds.iter().zip(targets).map(|(p, t)| mse(*p, *t)).sum::<f64>() / preds.len() as f64
}
