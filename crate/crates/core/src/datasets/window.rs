use super::{DatasetProfile, RecordStream, SensorWindow, WindowedDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Consecutive samples further apart than this many nominal periods mark a
/// break in the recording.
const GAP_PERIODS: f64 = 1.5;

/// Start offsets of the windows kept from `stream`: every `stride`-th
/// offset whose `length` samples carry one label, that label is one of the
/// profile's activities, and no recording gap falls inside.
pub fn window_starts(stream: &RecordStream, profile: &DatasetProfile, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let (n, l) = (stream.len(), profile.length);
    if n < l {
        return Ok(Vec::new());
    }
    let max_dt = GAP_PERIODS / stream.sample_rate;
    // Index of the next label change / gap at or after each position makes
    // each window test O(1).
    let mut break_after = vec![n; n];
    for i in (0..n.saturating_sub(1)).rev() {
        let broken = stream.labels[i] != stream.labels[i + 1]
            || stream.timestamps[i + 1] - stream.timestamps[i] > max_dt;
        break_after[i] = if broken { i } else { break_after[i + 1] };
    }
    Ok((0..=n - l)
        .step_by(stride)
        .filter(|&s| break_after[s] >= s + l - 1 && profile.class_index(stream.labels[s]).is_some())
        .collect())
}

/// Slides a `length`-sample window over `stream` with the given stride.
pub fn make_windows(stream: &RecordStream, profile: &DatasetProfile, stride: usize) -> Result<WindowedDataset> {
    stream.validate()?;
    let c = profile.channels();
    if stream.channels.len() != c {
        return Err(Error::Data(format!(
            "subject {}: stream has {} channels, profile {} expects {c}",
            stream.subject_id,
            stream.channels.len(),
            profile.name
        )));
    }
    let l = profile.length;
    let mut ds = WindowedDataset::new(c, l);
    for s in window_starts(stream, profile, stride)? {
        let mut data = Vec::with_capacity(c * l);
        for ch in &stream.channels {
            data.extend_from_slice(&ch[s..s + l]);
        }
        ds.windows.push(SensorWindow {
            data: Tensor::new(&[c, l], data)?,
            label: profile.class_index(stream.labels[s]).expect("filtered"),
            subject_id: stream.subject_id,
        });
    }
    Ok(ds)
}
