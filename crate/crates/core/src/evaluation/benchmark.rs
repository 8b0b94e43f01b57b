use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    /// Epochs run first and discarded.
    pub warmup: usize,
    /// Timed epochs, at least 3.
    pub epochs: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { warmup: 2, epochs: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochTiming {
    pub name: String,
    pub seconds: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub warmup: usize,
    pub epochs: usize,
    pub baseline: EpochTiming,
    pub candidate: EpochTiming,
    /// `baseline.mean / candidate.mean`
    pub speedup: f64,
}

/// Times whole epochs of two runs, one after the other: `warmup` untimed
/// calls, then `epochs` timed ones each. Each closure runs one epoch.
pub fn benchmark_epoch_time<A, B>(
    baseline: (&str, A),
    candidate: (&str, B),
    config: BenchmarkConfig,
) -> Result<BenchmarkResult>
where
    A: FnMut() -> Result<()>,
    B: FnMut() -> Result<()>,
{
    if config.epochs < 3 {
        return Err(Error::InvalidArgument(format!(
            "at least 3 timed epochs required, got {}",
            config.epochs
        )));
    }
    let baseline_timing = time_epochs(baseline.0, baseline.1, config)?;
    let candidate_timing = time_epochs(candidate.0, candidate.1, config)?;
    if candidate_timing.mean <= 0.0 {
        return Err(Error::NonFinite(format!("{} epoch time is zero", candidate_timing.name)));
    }
    Ok(BenchmarkResult {
        warmup: config.warmup,
        epochs: config.epochs,
        speedup: baseline_timing.mean / candidate_timing.mean,
        baseline: baseline_timing,
        candidate: candidate_timing,
    })
}

fn time_epochs(name: &str, mut run: impl FnMut() -> Result<()>, config: BenchmarkConfig) -> Result<EpochTiming> {
    for _ in 0..config.warmup {
        run()?;
    }
    let mut seconds = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let start = Instant::now();
        run()?;
        seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(EpochTiming {
        name: name.to_string(),
        mean: seconds.iter().sum::<f64>() / seconds.len() as f64,
        min: seconds.iter().copied().fold(f64::INFINITY, f64::min),
        max: seconds.iter().copied().fold(0.0, f64::max),
        seconds,
    })
}
