//! Versioned JSON checkpoints holding everything needed to resume or
//! evaluate a run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{RelationIndex, Vocab};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::Model;
use crate::optim::AdamState;
use crate::params::ParamSet;
use crate::rng::Rng64;
use crate::training::Trainer;

pub const FORMAT_VERSION: u32 = 1;

/// Parameter and moment maps are ordered by name, so equal runs give equal bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub vocab: Vocab,
    pub relations: RelationIndex,
    pub epochs_done: usize,
    pub params: ParamSet,
    pub adam: AdamState,
    pub rng: Rng64,
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer, vocab: &Vocab, relations: &RelationIndex) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            config: trainer.model.config.clone(),
            vocab: vocab.clone(),
            relations: relations.clone(),
            epochs_done: trainer.epochs_done,
            params: trainer.model.params.clone(),
            adam: trainer.adam.clone(),
            rng: trainer.rng.clone(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    /// Reads a checkpoint and checks its parameters against its own config.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: format version {} (this build reads {FORMAT_VERSION})",
                path.display(),
                ckpt.format_version
            )));
        }
        ckpt.model().check_shapes()?;
        Ok(ckpt)
    }

    pub fn model(&self) -> Model {
        Model { config: self.config.clone(), num_relations: self.relations.len(), params: self.params.clone() }
    }

    /// Trainer state continuing exactly where the checkpoint left off.
    pub fn into_trainer(self) -> Trainer {
        let model = self.model();
        Trainer { model, adam: self.adam, rng: self.rng, epochs_done: self.epochs_done }
    }
}
