use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{AdamConfig, ClassifierEpoch, ClassifierLog, OptimizerState};
use crate::datasets::WindowedDataset;
use crate::error::{Error, Result};
use crate::evaluation::{f1_and_confusion, EvaluationReport};
use crate::models::{Classify, ModelParams, ModelSpec, Role};
use crate::nn::{loss, Mode};
use crate::rng::seeded;
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    /// Stop once validation macro-F1 reaches this value.
    pub stop_at_f1: Option<f64>,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            optimizer: AdamConfig::classifier(),
            stop_at_f1: None,
            seed: 0,
        }
    }
}

/// Stacks the windows at `idx` into `[B, C, L]` plus their labels.
pub(crate) fn batch(ds: &WindowedDataset, idx: &[usize]) -> Result<(Tensor, Vec<usize>)> {
    let refs: Vec<&Tensor> = idx.iter().map(|&i| &ds.windows[i].data).collect();
    Ok((Tensor::stack(&refs)?, idx.iter().map(|&i| ds.windows[i].label).collect()))
}

pub fn evaluate_classifier(model: &dyn Classify, ds: &WindowedDataset, classes: usize) -> Result<EvaluationReport> {
    let preds = model.predict(&ds.tensors())?;
    f1_and_confusion(&preds, &ds.labels(), classes)
}

/// Mini-batch cross-entropy training. Returns the parameters of the epoch
/// with the best validation macro-F1 (the initial parameters when no epoch
/// ran), the per-epoch log and the report of the returned parameters on
/// `val`.
pub fn train_classifier(
    spec: &ModelSpec,
    train: &WindowedDataset,
    val: &WindowedDataset,
    config: &ClassifierTrainConfig,
) -> Result<(ModelParams, ClassifierLog, EvaluationReport)> {
    if spec.role() != Role::Classifier {
        return Err(Error::Config(format!("{} is not a classifier", spec.arch())));
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data(format!(
            "empty split: {} training and {} validation windows",
            train.len(),
            val.len()
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let dims = spec.dims();
    for ds in [train, val] {
        if ds.channels != dims.channels || ds.length != dims.length {
            return Err(Error::shape("train_classifier", &[ds.channels, ds.length], &[dims.channels, dims.length]));
        }
        if let Some(&bad) = ds.labels().iter().find(|&&l| l >= dims.classes) {
            return Err(Error::Data(format!("label {bad} out of range for {} classes", dims.classes)));
        }
    }

    let mut rng = seeded(config.seed);
    let mut model = ModelParams::init(spec.clone(), &mut rng)?;
    let mut opt = OptimizerState::new(config.optimizer, &model.params)?;
    let mut log = ClassifierLog::default();
    let mut best = (f64::NEG_INFINITY, model.params.clone());
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            let (x, y) = batch(train, idx)?;
            let mut tape = Tape::new();
            let p = model.params.bind(&mut tape, true);
            let xv = tape.constant(x);
            let logits = spec.forward(&mut tape, &p, xv, Mode::Train, &mut rng)?;
            let l = loss::cross_entropy(&mut tape, logits, &y)?;
            let value = tape.value(l).item()?;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("classifier loss {value} at epoch {epoch}")));
            }
            tape.backward(l)?;
            opt.step(&mut model.params, p.gradients(&tape))?;
            total += value * idx.len() as f64;
        }
        let f1 = evaluate_classifier(&model, val, dims.classes)?.macro_f1;
        if f1 > best.0 {
            best = (f1, model.params.clone());
        }
        log.entries.push(ClassifierEpoch {
            epoch,
            loss: total / train.len() as f64,
            val_macro_f1: f1,
            seconds: start.elapsed().as_secs_f64(),
        });
        if config.stop_at_f1.is_some_and(|t| f1 >= t) {
            break;
        }
    }
    model.params = best.1;
    let report = evaluate_classifier(&model, val, dims.classes)?;
    Ok((model, log, report))
}
