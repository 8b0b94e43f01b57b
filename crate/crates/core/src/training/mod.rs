//! Optimizer, classifier training, per-class adversarial training and the
//! validation gate that decides whether a generator has converged.

mod classifier;
mod gan;
mod log;
mod optimizer;

pub use classifier::{evaluate_classifier, train_classifier, ClassifierTrainConfig};
pub use gan::{
    train_gan, train_gan_with_retries, validation_gate, CollapseDetector, GanOutcome,
    GanTrainConfig, GanTrainer,
};
pub use log::{ClassifierEpoch, ClassifierLog, EpochRecord, Timing, TrainLog, TRAIN_LOG_HEADER};
pub use optimizer::{AdamConfig, OptimizerState};
