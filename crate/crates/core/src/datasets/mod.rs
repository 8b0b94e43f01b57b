//! Sensor recordings, fixed-size windows, normalization and partitions.

mod canonical;
mod pamap2;
mod store;
mod toy;
mod window;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Dims;
use crate::tensor::Tensor;

pub use canonical::load_canonical_csv;
pub use pamap2::{load_pamap2, PAMAP2_COLUMNS, PAMAP2_WIDTH};
pub use store::{load_dataset, save_dataset, Manifest, MANIFEST_FILE, MANIFEST_VERSION};
pub use toy::{toy_corpus, ToyConfig};
pub use window::{make_windows, window_starts};

/// One subject's continuous recording.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordStream {
    pub subject_id: u32,
    pub sample_rate: f64,
    pub channel_names: Vec<String>,
    /// One series per channel.
    pub channels: Vec<Vec<f64>>,
    /// Activity id per sample.
    pub labels: Vec<i64>,
    /// Sample times in seconds, strictly increasing.
    pub timestamps: Vec<f64>,
}

impl RecordStream {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) {
            return Err(Error::Data(format!("sample rate {} is not positive", self.sample_rate)));
        }
        if self.channel_names.len() != self.channels.len() {
            return Err(Error::Data("channel names and series differ in count".into()));
        }
        let n = self.labels.len();
        if self.timestamps.len() != n || self.channels.iter().any(|c| c.len() != n) {
            return Err(Error::Data(format!(
                "subject {}: channels, labels and timestamps differ in length",
                self.subject_id
            )));
        }
        Ok(())
    }
}

/// Window geometry, channel names and the activity ids kept as classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub name: String,
    pub channel_names: Vec<String>,
    pub length: usize,
    pub sample_rate: f64,
    /// Raw activity ids; class index `i` is `activities[i]`.
    pub activities: Vec<i64>,
}

impl DatasetProfile {
    /// 27 IMU channels, 100-sample windows. The seven activities (lying,
    /// sitting, standing, walking, ascending and descending stairs, vacuum
    /// cleaning) are an assumption; override them in the run config.
    pub fn pamap2() -> Self {
        let mut names = Vec::with_capacity(27);
        for imu in ["hand", "chest", "ankle"] {
            for sensor in ["acc", "gyro", "mag"] {
                for axis in ["x", "y", "z"] {
                    names.push(format!("{imu}_{sensor}_{axis}"));
                }
            }
        }
        Self {
            name: "pamap2".into(),
            channel_names: names,
            length: 100,
            sample_rate: 100.0,
            activities: vec![1, 2, 3, 4, 12, 13, 16],
        }
    }

    /// Six channels, 50-sample windows, activities 0..8.
    pub fn rwhar() -> Self {
        Self {
            name: "rwhar".into(),
            channel_names: ["acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z"]
                .map(String::from)
                .to_vec(),
            length: 50,
            sample_rate: 50.0,
            activities: (0..8).collect(),
        }
    }

    /// Two-class sine/square corpus shape, see [`toy_corpus`].
    pub fn toy() -> Self {
        Self {
            name: "toy".into(),
            channel_names: (0..6).map(|c| format!("ch_{c}")).collect(),
            length: 50,
            sample_rate: 50.0,
            activities: vec![0, 1],
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "pamap2" => Ok(Self::pamap2()),
            "rwhar" => Ok(Self::rwhar()),
            "toy" => Ok(Self::toy()),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn classes(&self) -> usize {
        self.activities.len()
    }

    pub fn dims(&self) -> Dims {
        Dims {
            channels: self.channels(),
            length: self.length,
            classes: self.classes(),
        }
    }

    pub fn class_index(&self, activity: i64) -> Option<usize> {
        self.activities.iter().position(|&a| a == activity)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes() < 2 {
            return Err(Error::Config(format!("profile {}: needs at least 2 activities", self.name)));
        }
        let unique: HashSet<&i64> = self.activities.iter().collect();
        if unique.len() != self.activities.len() {
            return Err(Error::Config(format!("profile {}: duplicate activity ids", self.name)));
        }
        let names: HashSet<&String> = self.channel_names.iter().collect();
        if names.len() != self.channel_names.len() || names.is_empty() {
            return Err(Error::Config(format!("profile {}: channel names must be unique", self.name)));
        }
        if self.length == 0 || !(self.sample_rate > 0.0) {
            return Err(Error::Config(format!("profile {}: invalid length or sample rate", self.name)));
        }
        Ok(())
    }
}

/// A `[C, L]` window, its class index within the profile and its subject.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorWindow {
    pub data: Tensor,
    pub label: usize,
    pub subject_id: u32,
}

/// Windows sharing one `[C, L]` shape.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    pub channels: usize,
    pub length: usize,
    pub windows: Vec<SensorWindow>,
}

impl WindowedDataset {
    pub fn new(channels: usize, length: usize) -> Self {
        Self {
            channels,
            length,
            windows: Vec::new(),
        }
    }

    pub fn from_windows(channels: usize, length: usize, windows: Vec<SensorWindow>) -> Result<Self> {
        let mut ds = Self::new(channels, length);
        for w in windows {
            ds.push(w)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, window: SensorWindow) -> Result<()> {
        if window.data.shape() != [self.channels, self.length] {
            return Err(Error::Data(format!(
                "window shape {:?} does not match dataset shape [{}, {}]",
                window.data.shape(),
                self.channels,
                self.length
            )));
        }
        self.windows.push(window);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.windows.iter().map(|w| w.label).collect()
    }

    pub fn subjects(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.windows.iter().map(|w| w.subject_id).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.windows.iter().map(|w| w.data.clone()).collect()
    }

    /// Appends all windows of `other`.
    pub fn extend(&mut self, other: WindowedDataset) -> Result<()> {
        for w in other.windows {
            self.push(w)?;
        }
        Ok(())
    }

    fn filtered(&self, keep: impl Fn(&SensorWindow) -> bool) -> Self {
        Self {
            channels: self.channels,
            length: self.length,
            windows: self.windows.iter().filter(|w| keep(w)).cloned().collect(),
        }
    }
}

/// Per-channel z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Per-channel mean and population standard deviation over every sample of
/// every window.
pub fn fit_normalize(train: &WindowedDataset) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::Data("cannot fit normalization on an empty split".into()));
    }
    let (c, l) = (train.channels, train.length);
    let n = (train.len() * l) as f64;
    let mut mean = vec![0.0; c];
    for w in &train.windows {
        for (ch, row) in w.data.data().chunks(l).enumerate() {
            mean[ch] += row.iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; c];
    for w in &train.windows {
        for (ch, row) in w.data.data().chunks(l).enumerate() {
            var[ch] += row.iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
        }
    }
    let mut std = Vec::with_capacity(c);
    for (ch, v) in var.into_iter().enumerate() {
        let s = (v / n).sqrt();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Data(format!("channel {ch} has zero variance in the training split")));
        }
        std.push(s);
    }
    Ok(NormStats { mean, std })
}

fn map_channels(ds: &WindowedDataset, stats: &NormStats, f: impl Fn(f64, f64, f64) -> f64) -> Result<WindowedDataset> {
    if stats.mean.len() != ds.channels || stats.std.len() != ds.channels {
        return Err(Error::Data(format!(
            "normalization stats cover {} channels, dataset has {}",
            stats.mean.len(),
            ds.channels
        )));
    }
    let mut out = ds.clone();
    for w in &mut out.windows {
        let l = ds.length;
        for (ch, row) in w.data.data_mut().chunks_mut(l).enumerate() {
            row.iter_mut().for_each(|v| *v = f(*v, stats.mean[ch], stats.std[ch]));
        }
    }
    Ok(out)
}

pub fn apply_normalize(ds: &WindowedDataset, stats: &NormStats) -> Result<WindowedDataset> {
    map_channels(ds, stats, |v, m, s| (v - m) / s)
}

pub fn denormalize(ds: &WindowedDataset, stats: &NormStats) -> Result<WindowedDataset> {
    map_channels(ds, stats, |v, m, s| v * s + m)
}

/// `(train, validation)` with validation holding exactly `held_out`'s windows.
pub fn loso_split(ds: &WindowedDataset, held_out: u32) -> Result<(WindowedDataset, WindowedDataset)> {
    if !ds.windows.iter().any(|w| w.subject_id == held_out) {
        return Err(Error::Data(format!("subject {held_out} has no windows")));
    }
    Ok((
        ds.filtered(|w| w.subject_id != held_out),
        ds.filtered(|w| w.subject_id == held_out),
    ))
}

/// Windows bucketed by class, each bucket in input order.
pub fn partition_by_class(ds: &WindowedDataset) -> BTreeMap<usize, WindowedDataset> {
    let mut out: BTreeMap<usize, WindowedDataset> = BTreeMap::new();
    for w in &ds.windows {
        out.entry(w.label)
            .or_insert_with(|| WindowedDataset::new(ds.channels, ds.length))
            .windows
            .push(w.clone());
    }
    out
}

/// Replaces non-finite samples by linear interpolation between the nearest
/// finite neighbours; runs at either end take the nearest finite value.
pub(crate) fn interpolate_gaps(series: &mut [f64], what: &str) -> Result<()> {
    if series.is_empty() {
        return Ok(());
    }
    let finite: Vec<usize> = (0..series.len()).filter(|&i| series[i].is_finite()).collect();
    let (&first, &last) = match (finite.first(), finite.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Data(format!("{what}: no finite samples"))),
    };
    let head = series[first];
    series[..first].iter_mut().for_each(|v| *v = head);
    let tail = series[last];
    series[last + 1..].iter_mut().for_each(|v| *v = tail);
    for pair in finite.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b > a + 1 {
            let (va, vb) = (series[a], series[b]);
            for i in a + 1..b {
                let t = (i - a) as f64 / (b - a) as f64;
                series[i] = va + t * (vb - va);
            }
        }
    }
    Ok(())
}
