//! JSON checkpoints of trained models, with enough provenance to re-evaluate
//! them on the same test split.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bp::BpModel;
use crate::error::{GffError, Result};
use crate::fftrain::GffModel;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum TrainedModel {
    Gff(GffModel),
    Bp(BpModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub dataset: String,
    pub data_dir: PathBuf,
    pub dataset_hash: String,
    pub fractions: [f64; 3],
    pub seed: u64,
    #[serde(flatten)]
    pub model: TrainedModel,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| GffError::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|e| GffError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| GffError::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| GffError::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.format_version != FORMAT_VERSION {
            return Err(GffError::Checkpoint(format!(
                "format version {} is not supported (expected {FORMAT_VERSION})",
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }
}
