//! Classification metrics, the per-channel correlation report and the
//! epoch-time benchmark.

mod benchmark;
mod correlation;
mod pearson;
mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use benchmark::{benchmark_epoch_time, BenchmarkConfig, BenchmarkResult, EpochTiming};
pub use correlation::{channel_correlation_report, ClassCorrelation, CorrelationReport, CORRELATION_THRESHOLD};
pub use pearson::{pearson, OVERSHOOT_TOLERANCE};
pub use report::{confusion_csv, correlation_csv, f1_csv, write_csv, write_json};

/// F1 of a class with no true and no predicted samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsentClass {
    /// Vacuous success: the classifier made no mistake on it.
    #[default]
    One,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// `confusion[truth][prediction]` counts.
    pub confusion: Vec<Vec<usize>>,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
}

impl EvaluationReport {
    pub fn classes(&self) -> usize {
        self.confusion.len()
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    /// Fraction of samples on the diagonal; 0 for an empty report.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let hits: usize = (0..self.classes()).map(|i| self.confusion[i][i]).sum();
        hits as f64 / total as f64
    }

    /// Rows scaled to percentages of each true class; all-zero rows stay 0.
    pub fn confusion_percent(&self) -> Vec<Vec<f64>> {
        self.confusion
            .iter()
            .map(|row| {
                let n: usize = row.iter().sum();
                row.iter()
                    .map(|&c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 })
                    .collect()
            })
            .collect()
    }
}

pub fn f1_and_confusion(predictions: &[usize], truths: &[usize], classes: usize) -> Result<EvaluationReport> {
    f1_and_confusion_with(predictions, truths, classes, AbsentClass::One)
}

/// Per-class `2TP / (2TP + FP + FN)` and its unweighted mean.
pub fn f1_and_confusion_with(
    predictions: &[usize],
    truths: &[usize],
    classes: usize,
    absent: AbsentClass,
) -> Result<EvaluationReport> {
    if predictions.len() != truths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truths.len()
        )));
    }
    if classes == 0 {
        return Err(Error::InvalidArgument("zero classes".into()));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &t) in predictions.iter().zip(truths) {
        if p >= classes || t >= classes {
            return Err(Error::InvalidArgument(format!(
                "label {} out of range for {classes} classes",
                p.max(t)
            )));
        }
        confusion[t][p] += 1;
    }
    let per_class_f1: Vec<f64> = (0..classes)
        .map(|k| {
            let tp = confusion[k][k];
            let fn_ = confusion[k].iter().sum::<usize>() - tp;
            let fp = (0..classes).map(|t| confusion[t][k]).sum::<usize>() - tp;
            let denom = 2 * tp + fp + fn_;
            if denom == 0 {
                match absent {
                    AbsentClass::One => 1.0,
                    AbsentClass::Zero => 0.0,
                }
            } else {
                2.0 * tp as f64 / denom as f64
            }
        })
        .collect();
    let macro_f1 = per_class_f1.iter().sum::<f64>() / classes as f64;
    Ok(EvaluationReport {
        confusion,
        per_class_f1,
        macro_f1,
    })
}

/// F1 of `positive` against everything else.
pub fn one_vs_rest_f1(predictions: &[usize], truths: &[usize], positive: usize) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truths.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &t) in predictions.iter().zip(truths) {
        match (p == positive, t == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    Ok(if denom == 0 { 1.0 } else { 2.0 * tp as f64 / denom as f64 })
}
