use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::write_atomic;

pub const TRAIN_LOG_HEADER: &str = "epoch,d_loss,g_loss,seconds,gate_f1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub seconds: f64,
    pub gate_f1: Option<f64>,
}

/// Whether the wall-clock column is filled in. Everything else in a log is
/// a function of config and seed, so [`Timing::Omit`] gives a file that is
/// byte-identical across reruns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    #[default]
    Wall,
    Omit,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_seconds(&self) -> f64 {
        self.entries.iter().map(|e| e.seconds).sum()
    }

    pub fn gate_scores(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().filter_map(|e| e.gate_f1.map(|f| (e.epoch, f)))
    }

    /// `epoch,d_loss,g_loss,seconds,gate_f1`; floats in shortest round-trip
    /// form, empty cells for absent values.
    pub fn to_csv(&self, timing: Timing) -> String {
        let mut out = String::from(TRAIN_LOG_HEADER);
        out.push('\n');
        for e in &self.entries {
            let seconds = match timing {
                Timing::Wall => e.seconds.to_string(),
                Timing::Omit => String::new(),
            };
            let gate = e.gate_f1.map(|f| f.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{seconds},{gate}", e.epoch, e.d_loss, e.g_loss);
        }
        out
    }

    pub fn write_csv(&self, path: &Path, timing: Timing) -> Result<()> {
        write_atomic(path, self.to_csv(timing).as_bytes())
    }
}

/// Per-epoch classifier progress.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub val_macro_f1: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierLog {
    pub entries: Vec<ClassifierEpoch>,
}

impl ClassifierLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_csv(&self, timing: Timing) -> String {
        let mut out = String::from("epoch,loss,val_macro_f1,seconds\n");
        for e in &self.entries {
            let seconds = match timing {
                Timing::Wall => e.seconds.to_string(),
                Timing::Omit => String::new(),
            };
            let _ = writeln!(out, "{},{},{},{seconds}", e.epoch, e.loss, e.val_macro_f1);
        }
        out
    }

    pub fn write_csv(&self, path: &Path, timing: Timing) -> Result<()> {
        write_atomic(path, self.to_csv(timing).as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let log = TrainLog {
            entries: vec![
                EpochRecord {
                    epoch: 1,
                    d_loss: 1.25,
                    g_loss: 0.5,
                    seconds: 0.125,
                    gate_f1: None,
                },
                EpochRecord {
                    epoch: 2,
                    d_loss: 0.1,
                    g_loss: 2.0,
                    seconds: 0.25,
                    gate_f1: Some(1.0),
                },
            ],
        };
        assert_eq!(
            log.to_csv(Timing::Wall),
            "epoch,d_loss,g_loss,seconds,gate_f1\n1,1.25,0.5,0.125,\n2,0.1,2,0.25,1\n"
        );
        assert_eq!(
            log.to_csv(Timing::Omit),
            "epoch,d_loss,g_loss,seconds,gate_f1\n1,1.25,0.5,,\n2,0.1,2,,1\n"
        );
        assert_eq!(log.total_seconds(), 0.375);
        assert_eq!(log.gate_scores().collect::<Vec<_>>(), vec![(2, 1.0)]);
    }
}
