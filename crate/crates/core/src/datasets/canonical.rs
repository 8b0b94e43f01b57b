use std::collections::BTreeMap;
use std::path::Path;

use super::{interpolate_gaps, RecordStream};
use crate::error::{Error, Result};

/// Reads `subject,activity,t,<channel>...` rows into one stream per subject,
/// ordered by subject id. Within a subject `t` (seconds) must strictly
/// increase; non-finite or empty channel cells are interpolated.
pub fn load_canonical_csv(path: &Path, sample_rate: f64) -> Result<Vec<RecordStream>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = reader.headers()?.clone();
    let fixed = ["subject", "activity", "t"];
    if header.len() < 4 || header.iter().take(3).ne(fixed) {
        return Err(Error::Data(format!(
            "{}: header must start with subject,activity,t and list at least one channel",
            path.display()
        )));
    }
    let names: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
    if names.iter().any(String::is_empty) {
        return Err(Error::Data(format!("{}: empty channel name in header", path.display())));
    }

    let mut by_subject: BTreeMap<u32, RecordStream> = BTreeMap::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let bad = |what: &str| Error::Data(format!("{}:{line}: {what}", path.display()));
        if record.len() != header.len() {
            return Err(bad("wrong number of fields"));
        }
        let subject: u32 = record[0].parse().map_err(|_| bad("subject is not an integer"))?;
        let activity: i64 = record[1].parse().map_err(|_| bad("activity is not an integer"))?;
        let t: f64 = record[2].parse().map_err(|_| bad("t is not a number"))?;
        if !t.is_finite() {
            return Err(bad("t is not finite"));
        }
        let stream = by_subject.entry(subject).or_insert_with(|| RecordStream {
            subject_id: subject,
            sample_rate,
            channel_names: names.clone(),
            channels: vec![Vec::new(); names.len()],
            labels: Vec::new(),
            timestamps: Vec::new(),
        });
        if stream.timestamps.last().is_some_and(|&prev| t <= prev) {
            return Err(bad("time is not increasing for this subject"));
        }
        stream.timestamps.push(t);
        stream.labels.push(activity);
        for (ch, cell) in record.iter().skip(3).enumerate() {
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|_| bad("channel value is not a number"))?
            };
            stream.channels[ch].push(v);
        }
    }

    let mut streams: Vec<RecordStream> = by_subject.into_values().collect();
    for s in &mut streams {
        for (ch, series) in s.channels.iter_mut().enumerate() {
            interpolate_gaps(series, &format!("subject {} channel {}", s.subject_id, names[ch]))?;
        }
        s.validate()?;
    }
    Ok(streams)
}
