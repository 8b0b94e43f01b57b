//! Checkpoint files: one JSON header line, then every tensor as
//! little-endian f64 in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{ModelParams, ModelSpec};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::params::ParamSet;
use crate::rng::seeded;
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Model parameters plus free-form run metadata (class id, normalization
/// statistics, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams,
    pub meta: Map<String, Value>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    #[serde(flatten)]
    spec: ModelSpec,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    meta: Map<String, Value>,
}

impl Checkpoint {
    pub fn new(model: ModelParams) -> Self {
        Self {
            model,
            meta: Map::new(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            spec: self.model.spec.clone(),
            tensors: self
                .model
                .params
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
            meta: self.meta.clone(),
        };
        let mut out = serde_json::to_vec(&header)?;
        out.push(b'\n');
        for (_, t) in self.model.params.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
        let probe: Value = serde_json::from_slice(&bytes[..split])?;
        let version = probe.get("format_version").and_then(Value::as_u64);
        if version != Some(u64::from(CHECKPOINT_VERSION)) {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {version:?}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let header: Header = serde_json::from_value(probe)?;

        // The stored layout must be exactly what the spec builds.
        let expected = header.spec.init(&mut seeded(0))?;
        let layout_ok = expected.len() == header.tensors.len()
            && expected
                .iter()
                .zip(&header.tensors)
                .all(|((n, t), e)| n == e.name && t.shape() == e.shape.as_slice());
        if !layout_ok {
            return Err(Error::Checkpoint(format!(
                "tensor table does not match architecture {}",
                header.spec.arch()
            )));
        }

        let mut body = &bytes[split + 1..];
        let mut params = ParamSet::new();
        for entry in header.tensors {
            let n: usize = entry.shape.iter().product();
            if body.len() < n * 8 {
                return Err(Error::Checkpoint(format!("truncated data for `{}`", entry.name)));
            }
            let (chunk, rest) = body.split_at(n * 8);
            let data = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            params.insert(entry.name, Tensor::new(&entry.shape, data)?)?;
            body = rest;
        }
        if !body.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", body.len())));
        }
        Ok(Self {
            model: ModelParams {
                spec: header.spec,
                params,
            },
            meta: header.meta,
        })
    }
}

/// Writes atomically: a sibling temporary file renamed into place.
pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    write_atomic(path, &checkpoint.to_bytes()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
