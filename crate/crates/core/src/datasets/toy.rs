use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::RecordStream;
use crate::rng::{derive, standard_normal};

/// Generated two-class corpus: activity 0 is a sine, activity 1 a square
/// wave of the same period, each channel phase-shifted, plus Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub subjects: u32,
    pub channels: usize,
    /// Samples per activity segment; a multiple of `period` keeps every
    /// segment starting at phase 0.
    pub segment_len: usize,
    pub period: usize,
    pub noise_std: f64,
    pub sample_rate: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            subjects: 3,
            channels: 6,
            segment_len: 1000,
            period: 25,
            noise_std: 0.2,
            sample_rate: 50.0,
        }
    }
}

/// One stream per subject (ids 1..=subjects): a sine segment, then a square
/// segment, recorded without gaps. Amplitude varies a little per subject.
pub fn toy_corpus(config: &ToyConfig, seed: u64) -> Vec<RecordStream> {
    (1..=config.subjects)
        .map(|subject| {
            let mut rng = derive(seed, u64::from(subject));
            let amplitude = 1.0 + 0.1 * (f64::from(subject) - 1.0);
            let n = 2 * config.segment_len;
            let mut channels = vec![Vec::with_capacity(n); config.channels];
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let class = i / config.segment_len;
                labels.push(class as i64);
                let k = (i % config.segment_len) as f64;
                for (c, series) in channels.iter_mut().enumerate() {
                    let phase = TAU * (k / config.period as f64 + c as f64 / config.channels as f64);
                    let clean = if class == 0 { phase.sin() } else { phase.sin().signum() };
                    series.push(amplitude * clean + config.noise_std * standard_normal(&mut rng));
                }
            }
            RecordStream {
                subject_id: subject,
                sample_rate: config.sample_rate,
                channel_names: (0..config.channels).map(|c| format!("ch_{c}")).collect(),
                channels,
                labels,
                timestamps: (0..n).map(|i| i as f64 / config.sample_rate).collect(),
            }
        })
        .collect()
}
