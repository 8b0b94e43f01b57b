use serde::{Deserialize, Serialize};

use super::pearson;
use crate::datasets::WindowedDataset;
use crate::error::{Error, Result};
use crate::models::Generate;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// r at or above this counts as a well-correlated channel.
pub const CORRELATION_THRESHOLD: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCorrelation {
    pub class_id: usize,
    /// Windows averaged on each side.
    pub sample_count: usize,
    pub r: Vec<f64>,
    pub pass: Vec<bool>,
}

impl ClassCorrelation {
    pub fn passing(&self) -> usize {
        self.pass.iter().filter(|&&p| p).count()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rows: Vec<ClassCorrelation>,
}

/// Compares the element-wise mean of the first `x` real windows of
/// `class_id` (dataset order) with the mean of `x` generated windows, one
/// Pearson r per channel.
pub fn channel_correlation_report(
    real: &WindowedDataset,
    generator: &dyn Generate,
    class_id: usize,
    x: usize,
    rng: &mut Rng,
) -> Result<ClassCorrelation> {
    if x == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let picked: Vec<&Tensor> = real
        .windows
        .iter()
        .filter(|w| w.label == class_id)
        .take(x)
        .map(|w| &w.data)
        .collect();
    if picked.len() < x {
        return Err(Error::Data(format!(
            "class {class_id} has {} real windows, {x} needed",
            picked.len()
        )));
    }
    let synth = generator.generate(x, rng)?;
    let shape = [real.channels, real.length];
    if let Some(bad) = synth.iter().find(|t| t.shape() != shape) {
        return Err(Error::shape("channel_correlation_report", bad.shape(), &shape));
    }
    let real_mean = mean_window(&picked, real.channels * real.length);
    let synth_mean = mean_window(&synth.iter().collect::<Vec<_>>(), real.channels * real.length);

    let l = real.length;
    let r = (0..real.channels)
        .map(|c| pearson(&real_mean[c * l..(c + 1) * l], &synth_mean[c * l..(c + 1) * l]))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ClassCorrelation {
        class_id,
        sample_count: x,
        pass: r.iter().map(|&v| v >= CORRELATION_THRESHOLD).collect(),
        r,
    })
}

fn mean_window(windows: &[&Tensor], numel: usize) -> Vec<f64> {
    let mut acc = vec![0.0; numel];
    for w in windows {
        for (a, v) in acc.iter_mut().zip(w.data()) {
            *a += v;
        }
    }
    let n = windows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}
