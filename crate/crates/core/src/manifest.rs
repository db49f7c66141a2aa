//! Dataset manifest: a JSON array binding voxel files to seeds, porosity,
//! permeability and split membership.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxel::VoxelGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    /// Voxel file, relative to the manifest's directory.
    pub file: String,
    pub seed: u64,
    pub porosity: f64,
    #[serde(rename = "permeability_mD")]
    pub permeability_md: Option<f64>,
    pub split: Split,
    /// Why the permeability is missing, when simulation failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetManifest {
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn split(&self, split: Split) -> Vec<&SampleRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.records.iter().filter(|r| r.split == split).count()
    }

    /// Fails with the ids of every record in `splits` lacking a permeability.
    pub fn require_permeability(&self, splits: &[Split]) -> Result<()> {
        let missing: Vec<&str> = self
            .records
            .iter()
            .filter(|r| splits.contains(&r.split) && r.permeability_md.is_none())
            .map(|r| r.id.as_str())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "missing permeability targets for samples: {}",
                missing.join(", ")
            )))
        }
    }
}

/// Directory that manifest-relative voxel paths resolve against.
pub fn base_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

pub fn load_grid(base: &Path, record: &SampleRecord) -> Result<VoxelGrid> {
    VoxelGrid::read(&base.join(&record.file))
}

/// Train/valid/test counts for `count` samples: train and valid are
/// rounded, test takes the remainder.
pub fn split_counts(count: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be in [0, 1] and sum to 1"
        )));
    }
    let train = ((count as f64 * fractions[0]).round() as usize).min(count);
    let valid = ((count as f64 * fractions[1]).round() as usize).min(count - train);
    Ok([train, valid, count - train - valid])
}
