use std::fs;
use std::path::{Path, PathBuf};

use super::{interpolate_gaps, DatasetProfile, RecordStream};
use crate::error::{Error, Result};

/// Columns per row in the public per-subject `.dat` files.
pub const PAMAP2_WIDTH: usize = 54;

/// 0-based source columns of the 27 channels, in [`DatasetProfile::pamap2`]
/// order: for each IMU (hand, chest, ankle) the ±16 g accelerometer,
/// gyroscope and magnetometer x/y/z.
pub const PAMAP2_COLUMNS: [usize; 27] = [
    4, 5, 6, 10, 11, 12, 13, 14, 15, // hand
    21, 22, 23, 27, 28, 29, 30, 31, 32, // chest
    38, 39, 40, 44, 45, 46, 47, 48, 49, // ankle
];

const TIMESTAMP: usize = 0;
const ACTIVITY: usize = 1;

/// Loads every `*.dat` file in `dir` as one subject. The subject id is the
/// number in the file name (`subject105.dat` -> 105). Samples whose
/// activity is not in `profile.activities` (including the transient id 0)
/// are dropped.
pub fn load_pamap2(dir: &Path, profile: &DatasetProfile) -> Result<Vec<RecordStream>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "dat"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("{}: no .dat files", dir.display())));
    }
    if profile.channels() != PAMAP2_COLUMNS.len() {
        return Err(Error::Config(format!(
            "profile {} has {} channels, the PAMAP2 adapter yields {}",
            profile.name,
            profile.channels(),
            PAMAP2_COLUMNS.len()
        )));
    }
    files.iter().map(|f| load_file(f, profile)).collect()
}

fn subject_id(path: &Path) -> Result<u32> {
    let stem = path.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
    let digits: String = stem.chars().filter(char::is_ascii_digit).collect();
    digits
        .parse()
        .map_err(|_| Error::Data(format!("{}: no subject number in file name", path.display())))
}

fn load_file(path: &Path, profile: &DatasetProfile) -> Result<RecordStream> {
    let text = fs::read_to_string(path)?;
    let mut stream = RecordStream {
        subject_id: subject_id(path)?,
        sample_rate: profile.sample_rate,
        channel_names: profile.channel_names.clone(),
        channels: vec![Vec::new(); PAMAP2_COLUMNS.len()],
        labels: Vec::new(),
        timestamps: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: String| Error::Data(format!("{}:{}: {what}", path.display(), i + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != PAMAP2_WIDTH {
            return Err(bad(format!("expected {PAMAP2_WIDTH} columns, found {}", fields.len())));
        }
        let num = |col: usize| -> Result<f64> {
            let v = fields[col];
            if v.eq_ignore_ascii_case("nan") {
                Ok(f64::NAN)
            } else {
                v.parse().map_err(|_| bad(format!("column {col} is not a number")))
            }
        };
        let activity = num(ACTIVITY)?;
        if activity.fract() != 0.0 {
            return Err(bad("activity id is not an integer".into()));
        }
        let activity = activity as i64;
        if activity == 0 || profile.class_index(activity).is_none() {
            continue;
        }
        let t = num(TIMESTAMP)?;
        if !t.is_finite() || stream.timestamps.last().is_some_and(|&p| t <= p) {
            return Err(bad("timestamps must be finite and increasing".into()));
        }
        stream.timestamps.push(t);
        stream.labels.push(activity);
        for (ch, &col) in PAMAP2_COLUMNS.iter().enumerate() {
            stream.channels[ch].push(num(col)?);
        }
    }
    for (ch, series) in stream.channels.iter_mut().enumerate() {
        interpolate_gaps(series, &format!("{} {}", path.display(), profile.channel_names[ch]))?;
    }
    Ok(stream)
}
