//! On-disk window sets: `manifest.json` plus `windows_NNN.bin` shards of
//! little-endian f64 window data, each window `C*L` values channel-major.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetProfile, NormStats, SensorWindow, WindowedDataset};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
const SHARD_WINDOWS: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shard {
    pub file: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub profile: Option<DatasetProfile>,
    pub channels: usize,
    pub length: usize,
    pub count: usize,
    pub labels: Vec<usize>,
    pub subjects: Vec<u32>,
    pub shards: Vec<Shard>,
    /// Statistics the windows were normalized with, if any.
    pub norm: Option<NormStats>,
}

/// Writes `ds` under `dir`, replacing any previous dataset there. Shards
/// are written first and the manifest last, each atomically; shards the new
/// manifest does not reference are removed afterwards.
pub fn save_dataset(
    dir: &Path,
    ds: &WindowedDataset,
    profile: Option<&DatasetProfile>,
    norm: Option<&NormStats>,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut shards = Vec::new();
    for (i, chunk) in ds.windows.chunks(SHARD_WINDOWS).enumerate() {
        let file = format!("windows_{i:03}.bin");
        let mut bytes = Vec::with_capacity(chunk.len() * ds.channels * ds.length * 8);
        for w in chunk {
            for v in w.data.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        write_atomic(&dir.join(&file), &bytes)?;
        shards.push(Shard {
            file,
            count: chunk.len(),
        });
    }
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        profile: profile.cloned(),
        channels: ds.channels,
        length: ds.length,
        count: ds.len(),
        labels: ds.labels(),
        subjects: ds.windows.iter().map(|w| w.subject_id).collect(),
        shards,
        norm: norm.cloned(),
    };
    let path = dir.join(MANIFEST_FILE);
    write_atomic(&path, &serde_json::to_vec_pretty(&manifest)?)?;

    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().to_string();
        let is_shard = name.starts_with("windows_") && name.ends_with(".bin");
        if is_shard && !manifest.shards.iter().any(|s| s.file == name) {
            fs::remove_file(dir.join(name))?;
        }
    }
    Ok(path)
}

pub fn load_dataset(dir: &Path) -> Result<(WindowedDataset, Manifest)> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_slice(&text)?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported format_version {}",
            path.display(),
            manifest.format_version
        )));
    }
    let (c, l) = (manifest.channels, manifest.length);
    let shard_total: usize = manifest.shards.iter().map(|s| s.count).sum();
    if manifest.labels.len() != manifest.count || manifest.subjects.len() != manifest.count || shard_total != manifest.count {
        return Err(Error::Data(format!("{}: inconsistent counts", path.display())));
    }
    let mut ds = WindowedDataset::new(c, l);
    let mut idx = 0;
    for shard in &manifest.shards {
        let bytes = fs::read(dir.join(&shard.file))?;
        if bytes.len() != shard.count * c * l * 8 {
            return Err(Error::Data(format!("{}: unexpected size", shard.file)));
        }
        for chunk in bytes.chunks_exact(c * l * 8) {
            let data = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            ds.windows.push(SensorWindow {
                data: Tensor::new(&[c, l], data)?,
                label: manifest.labels[idx],
                subject_id: manifest.subjects[idx],
            });
            idx += 1;
        }
    }
    Ok((ds, manifest))
}
