//! Mini-batch training of single members with validation checkpointing.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::network::Mlp;
use crate::dataset::{NormStats, Sample, WINDOW_LEN};
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub n_members: usize,
    pub train_fraction: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            hidden1: 128,
            hidden2: 64,
            n_members: 10,
            train_fraction: 0.8,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::Config("epochs, batch size and layer widths must be >= 1".into()));
        }
        if self.n_members == 0 {
            return Err(Error::Config("ensemble needs at least one member".into()));
        }
        if !(self.adam.learning_rate > 0.0 && self.adam.epsilon > 0.0) {
            return Err(Error::Config("learning rate and epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Normalized samples packed into one row-major input matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub n_inputs: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl TrainingSet {
    pub fn from_samples(samples: &[Sample], norm: &NormStats) -> Self {
        let mut inputs = Vec::with_capacity(samples.len() * WINDOW_LEN);
        for s in samples {
            inputs.extend(s.window.iter().map(|&x| norm.normalize_input(x)));
        }
        Self {
            n_inputs: samples.first().map_or(WINDOW_LEN, |s| s.window.len()),
            inputs,
            targets: samples.iter().map(|s| norm.normalize_target(s.target)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.n_inputs..(i + 1) * self.n_inputs]
    }
}

/// Training history of one member. MSE values are in normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberReport {
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
}

/// Trains one network from a seed-determined initialization, reshuffling
/// the training rows every epoch, and returns the weights of the epoch with
/// the lowest validation MSE.
pub fn train_member(
    train: &TrainingSet,
    val: &TrainingSet,
    seed: u64,
    config: &TrainConfig,
) -> Result<(Mlp, MemberReport)> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidInput("training and validation sets must be non-empty".into()));
    }
    if train.n_inputs != val.n_inputs {
        return Err(Error::Dimension { expected: train.n_inputs, actual: val.n_inputs });
    }
    let mut rng = seeded_rng(seed, Stream::Member);
    let mut weights = Mlp::glorot(train.n_inputs, config.hidden1, config.hidden2, &mut rng);
    let mut adam = AdamState::new(&weights, config.adam);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch_x = Vec::with_capacity(config.batch_size * train.n_inputs);
    let mut batch_y = Vec::with_capacity(config.batch_size);
    let mut best = weights.clone();
    let mut report = MemberReport {
        seed,
        best_epoch: 0,
        best_val_mse: f64::INFINITY,
        train_mse: Vec::with_capacity(config.epochs),
        val_mse: Vec::with_capacity(config.epochs),
    };

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.extend_from_slice(train.row(i));
                batch_y.push(train.targets[i]);
            }
            let (loss, grads) = weights.loss_and_grad(&batch_x, &batch_y)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { seed, epoch, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            adam.step(&mut weights, &grads);
        }
        let val_mse = weights.mse(&val.inputs, &val.targets)?;
        if !val_mse.is_finite() {
            return Err(Error::Diverged { seed, epoch, loss: val_mse });
        }
        report.train_mse.push(loss_sum / train.len() as f64);
        report.val_mse.push(val_mse);
        if val_mse < report.best_val_mse {
            report.best_val_mse = val_mse;
            report.best_epoch = epoch;
            best.clone_from(&weights);
        }
        log::debug!("member seed {seed} epoch {epoch}: val mse {val_mse:.3e}");
    }
    Ok((best, report))
}
