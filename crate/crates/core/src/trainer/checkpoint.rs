//! Versioned JSON checkpoints. Floats are written with shortest round-trip
//! formatting and parsed exactly, so a save/load cycle is bitwise lossless.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::ClassifierModel;
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::losses::LossConfig;
use crate::numerics::Mat64;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub feature_dim: usize,
    pub class_count: usize,
    pub hidden: bool,
    pub hidden_dim: Option<usize>,
    /// Row-major `class_count × (hidden_dim or feature_dim)`.
    pub weights: Vec<f64>,
    /// Row-major `hidden_dim × feature_dim`.
    pub hidden_weights: Option<Vec<f64>>,
    pub loss: LossConfig,
    pub seed: u64,
}

impl Checkpoint {
    pub fn from_model(model: &ClassifierModel, loss: LossConfig, seed: u64) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            feature_dim: model.feature_dim(),
            class_count: model.class_count(),
            hidden: model.hidden.is_some(),
            hidden_dim: model.hidden.as_ref().map(Mat64::rows),
            weights: model.weights.as_slice().to_vec(),
            hidden_weights: model.hidden.as_ref().map(|h| h.as_slice().to_vec()),
            loss,
            seed,
        }
    }

    pub fn to_model(&self) -> Result<ClassifierModel> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.format_version
            )));
        }
        if self.hidden != self.hidden_dim.is_some() || self.hidden != self.hidden_weights.is_some()
        {
            return Err(Error::Config(
                "checkpoint hidden-layer fields disagree".into(),
            ));
        }
        let head_in = self.hidden_dim.unwrap_or(self.feature_dim);
        let weights = Mat64::new(self.class_count, head_in, self.weights.clone())?;
        let hidden = match (&self.hidden_weights, self.hidden_dim) {
            (Some(h), Some(dim)) => Some(Mat64::new(dim, self.feature_dim, h.clone())?),
            _ => None,
        };
        ClassifierModel::new(weights, hidden)
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    write_json(path, checkpoint)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_json(path)
}
