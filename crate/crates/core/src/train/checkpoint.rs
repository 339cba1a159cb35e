use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Config;
use super::model::Model;
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::params::Adam;
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Early-stopping bookkeeping carried across resumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopState {
    pub best_val_mae: Option<f64>,
    pub best_epoch: usize,
    pub stale_epochs: usize,
}

impl Default for StopState {
    fn default() -> Self {
        Self {
            best_val_mae: None,
            best_epoch: 0,
            stale_epochs: 0,
        }
    }
}

/// Versioned model container: named parameter segments plus everything
/// needed to rebuild and resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: Config,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: usize,
    pub node_ids: Vec<NodeId>,
    pub segments: BTreeMap<String, BTreeMap<String, Tensor>>,
    pub optimizer: Option<Adam>,
    pub stop: StopState,
}

impl Checkpoint {
    pub fn capture(model: &Model, epoch: usize, optimizer: Option<&Adam>, stop: &StopState) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            seed: model.config.train.seed,
            epoch,
            node_ids: model.node_ids().to_vec(),
            segments: model.store.segments(),
            optimizer: optimizer.cloned(),
            stop: stop.clone(),
        }
    }

    pub fn model(&self) -> Result<Model> {
        Model::from_segments(self.config.clone(), self.node_ids.clone(), &self.segments)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        Ok(ck)
    }
}
