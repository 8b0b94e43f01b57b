//! The JSON run config shared by every subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use hargan::datasets::DatasetProfile;
use hargan::models::{
    ConvLstmConfig, GanSpec, ModelSpec, RganConfig, TganConfig, TransformerClassifierConfig,
};
use hargan::training::{ClassifierTrainConfig, GanTrainConfig};
use hargan::{Error, Result};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

/// A profile by name (`pamap2`, `rwhar`, `toy`) or spelled out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileRef {
    Name(String),
    Inline(DatasetProfile),
}

impl ProfileRef {
    pub fn resolve(&self) -> Result<DatasetProfile> {
        let p = match self {
            ProfileRef::Name(n) => DatasetProfile::by_name(n)?,
            ProfileRef::Inline(p) => p.clone(),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Rgan,
    #[default]
    Tgan,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierArch {
    #[default]
    Transformer,
    ConvLstm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub seed: Option<u64>,
    pub profile: Option<ProfileRef>,
    /// Ingested window set (a directory with `manifest.json`).
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Subject held out for validation; the largest subject id by default.
    pub holdout_subject: Option<u32>,
    #[serde(default)]
    pub classifier_arch: ClassifierArch,
    /// Full classifier spec; overrides `classifier_arch`.
    pub classifier: Option<ModelSpec>,
    #[serde(default)]
    pub classifier_training: ClassifierTrainConfig,
    pub classifier_checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub family: Family,
    /// Full GAN spec; overrides `family`.
    pub gan: Option<GanSpec>,
    #[serde(default)]
    pub gan_training: GanTrainConfig,
    /// Seeds tried per class before giving up.
    #[serde(default = "one")]
    pub attempts: usize,
}

fn one() -> usize {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: None,
            profile: None,
            dataset: None,
            out: None,
            holdout_subject: None,
            classifier_arch: ClassifierArch::default(),
            classifier: None,
            classifier_training: ClassifierTrainConfig::default(),
            classifier_checkpoint: None,
            family: Family::default(),
            gan: None,
            gan_training: GanTrainConfig::default(),
            attempts: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "{}: config version {} is not supported (expected {CONFIG_VERSION})",
                path.display(),
                cfg.version
            )));
        }
        // relative paths in a config file are relative to the file
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = cfg;
        for p in [&mut cfg.dataset, &mut cfg.out, &mut cfg.classifier_checkpoint].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Seed is mandatory: nothing draws from OS entropy.
    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("no seed: pass --seed or set `seed` in the config".into()))
    }

    pub fn profile(&self) -> Result<DatasetProfile> {
        self.profile
            .as_ref()
            .ok_or_else(|| Error::Config("no profile: pass --profile or set `profile` in the config".into()))?
            .resolve()
    }

    pub fn out(&self) -> Result<PathBuf> {
        self.out
            .clone()
            .ok_or_else(|| Error::Config("no output directory: pass --out or set `out`".into()))
    }

    pub fn dataset(&self) -> Result<PathBuf> {
        self.dataset
            .clone()
            .ok_or_else(|| Error::Config("no dataset: pass --dataset or set `dataset`".into()))
    }

    pub fn classifier_spec(&self, profile: &DatasetProfile) -> Result<ModelSpec> {
        let dims = profile.dims();
        let spec = self.classifier.clone().unwrap_or_else(|| match self.classifier_arch {
            ClassifierArch::Transformer => ModelSpec::TransformerClassifier(TransformerClassifierConfig::new(dims)),
            ClassifierArch::ConvLstm => ModelSpec::ConvLstm(ConvLstmConfig::new(dims)),
        });
        if spec.dims() != dims {
            return Err(Error::Config(format!(
                "classifier dims {:?} do not match profile {} {:?}",
                spec.dims(),
                profile.name,
                dims
            )));
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn gan_spec(&self, profile: &DatasetProfile) -> Result<GanSpec> {
        let dims = profile.dims();
        let spec = self.gan.clone().unwrap_or_else(|| match self.family {
            Family::Rgan => GanSpec::Rgan(RganConfig::new(dims)),
            Family::Tgan => GanSpec::Tgan(TganConfig::new(dims)),
        });
        if spec.dims() != dims {
            return Err(Error::Config(format!(
                "GAN dims {:?} do not match profile {} {:?}",
                spec.dims(),
                profile.name,
                dims
            )));
        }
        spec.validate()?;
        Ok(spec)
    }
}
