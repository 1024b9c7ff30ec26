//! Model file: a trained ensemble with its normalization, training
//! metadata and error-metric calibration, stored as JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anomaly::Histogram;
use crate::dataset::{NormStats, WINDOW_LEN};
use crate::error::{Error, Result};
use crate::mlp::{Ensemble, Mlp, TrainConfig};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberEntry {
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_rmse_c: f64,
    pub weights: Mlp,
}

/// Distribution of filtered normalized errors over the training day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub ema_alpha: f64,
    /// 99th percentile of all modules' EMA(AE_norm) values.
    pub ema_p99: f64,
    pub n_values: usize,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub input_len: usize,
    pub hidden_layers: [usize; 2],
    pub norm: NormStats,
    pub train_seed: u64,
    pub training: TrainConfig,
    pub members: Vec<MemberEntry>,
    pub calibration: Option<Calibration>,
}

impl ModelFile {
    pub fn ensemble(&self) -> Ensemble {
        Ensemble {
            members: self.members.iter().map(|m| m.weights.clone()).collect(),
            norm: self.norm,
            member_seeds: self.members.iter().map(|m| m.seed).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.input_len != WINDOW_LEN {
            return Err(Error::Dimension { expected: WINDOW_LEN, actual: self.input_len });
        }
        if self.members.is_empty() {
            return Err(Error::Data("model has no members".into()));
        }
        if !self.norm.is_valid() {
            return Err(Error::Data("invalid normalization statistics".into()));
        }
        for m in &self.members {
            m.weights.validate()?;
            let dims = [m.weights.hidden1.n_out, m.weights.hidden2.n_out];
            if m.weights.n_inputs() != self.input_len || dims != self.hidden_layers {
                return Err(Error::Data(format!("member {} does not match the declared architecture", m.seed)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
