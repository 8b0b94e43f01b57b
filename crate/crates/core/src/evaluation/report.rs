//! JSON and flat CSV renderings of the evaluation outputs.

use std::path::Path;

use serde::Serialize;

use super::{CorrelationReport, EvaluationReport};
use crate::error::Result;
use crate::io::write_atomic;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Writes `header` and `rows` as CSV, atomically.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// `truth,predicted,value` rows; counts, or percentages of each true class.
pub fn confusion_csv(path: &Path, report: &EvaluationReport, percent: bool) -> Result<()> {
    let pct = report.confusion_percent();
    let mut rows = Vec::new();
    for t in 0..report.classes() {
        for p in 0..report.classes() {
            let value = if percent {
                pct[t][p].to_string()
            } else {
                report.confusion[t][p].to_string()
            };
            rows.push(vec![t.to_string(), p.to_string(), value]);
        }
    }
    write_csv(path, &["truth", "predicted", if percent { "percent" } else { "count" }], &rows)
}

/// `class,f1` rows plus a final `macro` row.
pub fn f1_csv(path: &Path, report: &EvaluationReport) -> Result<()> {
    let mut rows: Vec<Vec<String>> = report
        .per_class_f1
        .iter()
        .enumerate()
        .map(|(k, f)| vec![k.to_string(), f.to_string()])
        .collect();
    rows.push(vec!["macro".into(), report.macro_f1.to_string()]);
    write_csv(path, &["class", "f1"], &rows)
}

/// `class,channel,r,pass` rows.
pub fn correlation_csv(path: &Path, report: &CorrelationReport, channel_names: &[String]) -> Result<()> {
    let mut rows = Vec::new();
    for row in &report.rows {
        for (c, (r, pass)) in row.r.iter().zip(&row.pass).enumerate() {
            let channel = channel_names.get(c).cloned().unwrap_or_else(|| c.to_string());
            rows.push(vec![row.class_id.to_string(), channel, r.to_string(), pass.to_string()]);
        }
    }
    write_csv(path, &["class", "channel", "r", "pass"], &rows)
}
