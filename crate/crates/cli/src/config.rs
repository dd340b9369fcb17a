//! Run configuration: a TOML file, then command-line overrides.

use std::path::{Path, PathBuf};

use charnet::model::Head;
use charnet::text::{DatasetFormat, EncodingConfig};
use charnet::training::Hyperparams;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub scale: f64,
    pub head: Head,
    /// Taken from the training data when absent.
    pub n_classes: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { scale: 0.25, head: Head::Sigmoid, n_classes: None }
    }
}

/// Either a labeled file (`train`, optional `val`) or the two email corpora
/// (`enron`, `fraud`, `per_class` records each).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub format: DatasetFormat,
    /// Held-out share split off the training data when `val` is absent.
    pub val_fraction: f64,
    pub enron: Option<PathBuf>,
    pub fraud: Option<PathBuf>,
    pub per_class: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: None,
            val: None,
            format: DatasetFormat::Csv,
            val_fraction: 0.2,
            enron: None,
            fraud: None,
            per_class: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Rayon worker count; 0 lets rayon decide.
    pub threads: usize,
    pub encoding: EncodingConfig,
    pub model: ModelConfig,
    pub hyperparams: Hyperparams,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("charnet-out"),
            threads: 0,
            encoding: EncodingConfig::default(),
            model: ModelConfig::default(),
            hyperparams: Hyperparams::default(),
            data: DataConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.encoding.validate()?;
        self.hyperparams.validate()?;
        if !(self.model.scale > 0.0 && self.model.scale <= 1.0) {
            return Err(CliError::Usage(format!("model.scale {} not in (0, 1]", self.model.scale)));
        }
        if !(0.0..1.0).contains(&self.data.val_fraction) {
            return Err(CliError::Usage(format!("data.val_fraction {} not in [0, 1)", self.data.val_fraction)));
        }
        if self.hyperparams.head != self.model.head {
            return Err(CliError::Usage("hyperparams.head and model.head disagree".into()));
        }
        Ok(())
    }
}

/// What a run wrote and how to repeat it. Loading a manifest as a config
/// ignores the `[run]` table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(flatten)]
    pub config: RunConfig,
    pub run: RunInfo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunInfo {
    pub command: String,
    pub argv: Vec<String>,
    pub charnet_version: String,
    pub checkpoint_format: u32,
    pub outputs: Vec<String>,
}

pub fn manifest_text(m: &Manifest) -> String {
    toml::to_string(m).expect("manifest serializes")
}
