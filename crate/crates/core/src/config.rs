//! Run configuration: one JSON document with a section per subsystem.
//! Every field has a default, and unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::BenchConfig;
use crate::error::{Error, Result};
use crate::flow::FluidSpec;
use crate::model::{CnnConfig, ModelConfig, VimConfig, VitConfig};
use crate::synth::SynthConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Vim,
    Vit,
    Cnn,
}

/// Hyperparameters of all three architectures plus the one in use.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub vim: VimConfig,
    pub vit: VitConfig,
    pub cnn: CnnConfig,
}

impl ModelSection {
    pub fn selected(&self) -> ModelConfig {
        match self.kind {
            ModelKind::Vim => ModelConfig::Vim(self.vim.clone()),
            ModelKind::Vit => ModelConfig::Vit(self.vit.clone()),
            ModelKind::Cnn => ModelConfig::Cnn(self.cnn.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Train, valid and test fractions.
    pub split: [f64; 3],
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { split: [0.8, 0.1, 0.1] }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub data: DataSection,
    pub flow: FluidSpec,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub bench: BenchConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Format {
                path: path.to_path_buf(),
                detail: j.to_string(),
            },
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies a master seed to every seeded subsystem.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.synth.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.flow.validate()?;
        self.train.validate()?;
        self.model.selected().validate()?;
        crate::manifest::split_counts(0, self.data.split)?;
        Ok(())
    }
}
