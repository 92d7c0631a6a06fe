use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{class_index, Task};

/// Pearson correlation, or a marker when either series has zero variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correlation {
    Defined(f64),
    Undefined,
}

impl Correlation {
    pub fn value(self) -> Option<f64> {
        match self {
            Correlation::Defined(r) => Some(r),
            Correlation::Undefined => None,
        }
    }
}

impl Serialize for Correlation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Correlation::Defined(r) => s.serialize_f64(*r),
            Correlation::Undefined => s.serialize_str("undefined"),
        }
    }
}

/// Model outputs reduced to what the metrics need.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    /// binary F1 on class 1 for two classes, macro average otherwise
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pearson_r: Option<Correlation>,
    /// label counts per class (classification only)
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub class_counts: Vec<usize>,
}

impl EvalReport {
    /// Accuracy for classification, MAE for regression.
    pub fn primary(&self) -> f64 {
        self.accuracy.or(self.mae).unwrap_or(f64::NAN)
    }
}

fn f1_from_counts(tp: usize, fp: usize, fne: usize) -> f64 {
    let denom = 2 * tp + fp + fne;
    if denom == 0 {
        // the class never occurs and is never predicted
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

fn pearson(x: &[f64], y: &[f64]) -> Correlation {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Correlation::Undefined;
    }
    Correlation::Defined((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Task metrics over paired predictions and labels.
pub fn metrics(preds: &Predictions, labels: &[f64], task: Task) -> Result<EvalReport> {
    let n = labels.len();
    let len = match preds {
        Predictions::Classes(p) => p.len(),
        Predictions::Values(p) => p.len(),
    };
    if n == 0 || len != n {
        return Err(Error::Config(format!("metrics need equal non-empty lengths, got {len} and {n}")));
    }
    match (task, preds) {
        (Task::Classification { classes }, Predictions::Classes(p)) => {
            let truth = labels.iter().map(|&l| class_index(l, classes)).collect::<Result<Vec<_>>>()?;
            if let Some(&bad) = p.iter().find(|&&c| c >= classes) {
                return Err(Error::LabelOutOfRange { label: bad, classes });
            }
            let mut confusion = vec![vec![0usize; classes]; classes];
            for (&t, &q) in truth.iter().zip(p) {
                confusion[t][q] += 1;
            }
            let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
            let per_class = |c: usize| {
                let tp = confusion[c][c];
                let fp: usize = (0..classes).map(|t| confusion[t][c]).sum::<usize>() - tp;
                let fne: usize = confusion[c].iter().sum::<usize>() - tp;
                (tp, fp, fne)
            };
            let f1 = if classes == 2 {
                let (tp, fp, fne) = per_class(1);
                f1_from_counts(tp, fp, fne)
            } else {
                let present: Vec<usize> = (0..classes)
                    .filter(|&c| {
                        let (tp, fp, fne) = per_class(c);
                        tp + fp + fne > 0
                    })
                    .collect();
                present
                    .iter()
                    .map(|&c| {
                        let (tp, fp, fne) = per_class(c);
                        f1_from_counts(tp, fp, fne)
                    })
                    .sum::<f64>()
                    / present.len() as f64
            };
            Ok(EvalReport {
                n,
                accuracy: Some(correct as f64 / n as f64),
                f1: Some(f1),
                mae: None,
                pearson_r: None,
                class_counts: confusion.iter().map(|row| row.iter().sum()).collect(),
            })
        }
        (Task::Regression, Predictions::Values(p)) => {
            let mae = p.iter().zip(labels).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64;
            Ok(EvalReport {
                n,
                accuracy: None,
                f1: None,
                mae: Some(mae),
                pearson_r: Some(pearson(p, labels)),
                class_counts: Vec::new(),
            })
        }
        _ => Err(Error::Config("prediction kind does not match task".into())),
    }
}
