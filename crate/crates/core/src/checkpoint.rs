//! Versioned JSON checkpoints of a trained seed.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::RelationInventory;
use crate::diff::{AdamState, ParameterSet};
use crate::embeddings::WordEmbeddingTable;
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::model::Model;
use crate::training::{SeedRun, TrainConfig};

pub const CHECKPOINT_FORMAT: &str = "relex-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub manifest: RunManifest,
    pub config: TrainConfig,
    pub relations: Vec<String>,
    pub seed: u64,
    pub epoch: usize,
    pub val_auc: f64,
    /// Digest of the frozen word-vector table the model was trained with.
    pub table_digest: String,
    pub params: ParameterSet,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn from_run(
        manifest: RunManifest,
        config: &TrainConfig,
        relations: &RelationInventory,
        run: &SeedRun,
        table: &WordEmbeddingTable,
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            manifest,
            config: config.clone(),
            relations: relations.names().to_vec(),
            seed: run.seed,
            epoch: run.best_epoch,
            val_auc: run.best_val_auc,
            table_digest: table.digest(),
            params: run.model.params.clone(),
            adam: run.adam.clone(),
        }
    }

    pub fn model(&self) -> Result<Model> {
        Model::from_params(self.config.model.clone(), self.params.clone())
    }

    pub fn relations(&self) -> Result<RelationInventory> {
        RelationInventory::new(self.relations.iter().cloned())
    }

    /// Fails if `table` is not the table the model was trained with.
    pub fn check_table(&self, table: &WordEmbeddingTable) -> Result<()> {
        let digest = table.digest();
        if digest != self.table_digest {
            return Err(Error::InvalidArgument(format!(
                "word-vector table digest {digest} does not match the checkpoint ({})",
                self.table_digest
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))?;
        let found = format!(
            "{} v{}",
            value.get("format").and_then(|v| v.as_str()).unwrap_or("?"),
            value.get("version").and_then(|v| v.as_u64()).unwrap_or(0)
        );
        let expected = format!("{CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}");
        if found != expected {
            return Err(Error::FormatVersion {
                path: path.into(),
                found,
                expected,
            });
        }
        let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| Error::Serde(e.to_string()))?;
        ckpt.params.ensure_finite()?;
        Ok(ckpt)
    }
}
