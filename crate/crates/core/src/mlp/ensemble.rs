//! Ensembles of independently initialized networks, their predictive
//! spread and t-based confidence intervals.

use statrs::distribution::{ContinuousCDF, StudentsT};

use super::network::Mlp;
use super::train::{train_member, MemberReport, TrainConfig, TrainingSet};
use crate::dataset::{NormStats, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<Mlp>,
    pub norm: NormStats,
    pub member_seeds: Vec<u64>,
}

/// Ensemble output for one window, in °C.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    /// Sample standard deviation across members (N − 1 denominator).
    pub std: f64,
    pub members: Vec<f64>,
}

impl Prediction {
    pub fn from_members(members: Vec<f64>) -> Self {
        let (mean, std) = mean_and_sample_std(&members);
        Self { mean, std, members }
    }
}

/// Mean and N−1 standard deviation; the spread of a single value is 0.
pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Trains `config.n_members` networks with seeds `base_seed + i`. Members
/// share the data and normalization and differ only in initialization and
/// shuffle order, so any member can be reproduced on its own.
pub fn train_ensemble(
    train: &[Sample],
    val: &[Sample],
    base_seed: u64,
    config: &TrainConfig,
) -> Result<(Ensemble, Vec<MemberReport>)> {
    config.validate()?;
    let norm = NormStats::compute(train)?;
    if val.is_empty() {
        return Err(Error::InvalidInput("validation set is empty".into()));
    }
    let train_set = TrainingSet::from_samples(train, &norm);
    let val_set = TrainingSet::from_samples(val, &norm);
    let member_seeds: Vec<u64> = (0..config.n_members as u64).map(|i| base_seed.wrapping_add(i)).collect();
    let mut members = Vec::with_capacity(config.n_members);
    let mut reports = Vec::with_capacity(config.n_members);
    for &seed in &member_seeds {
        let (net, report) = train_member(&train_set, &val_set, seed, config)?;
        log::info!(
            "member seed {seed}: best validation RMSE {:.4} °C at epoch {}",
            report.best_val_mse.sqrt() * norm.target_std,
            report.best_epoch
        );
        members.push(net);
        reports.push(report);
    }
    Ok((Ensemble { members, norm, member_seeds }, reports))
}

impl Ensemble {
    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.members.first().map_or(0, Mlp::n_inputs)
    }

    /// Prediction for one raw-unit loss window.
    pub fn predict(&self, window: &[f64]) -> Result<Prediction> {
        Ok(self.predict_batch(window)?.remove(0))
    }

    /// Predictions for consecutive raw-unit windows packed row-major.
    pub fn predict_batch(&self, windows: &[f64]) -> Result<Vec<Prediction>> {
        let n_in = self.n_inputs();
        if n_in == 0 || windows.is_empty() || windows.len() % n_in != 0 {
            return Err(Error::Dimension { expected: n_in, actual: windows.len() });
        }
        let normalized: Vec<f64> = windows.iter().map(|&x| self.norm.normalize_input(x)).collect();
        let per_member = self
            .members
            .iter()
            .map(|m| m.forward_batch(&normalized))
            .collect::<Result<Vec<_>>>()?;
        let n = windows.len() / n_in;
        Ok((0..n)
            .map(|i| {
                Prediction::from_members(
                    per_member.iter().map(|p| self.norm.denormalize_target(p[i])).collect(),
                )
            })
            .collect())
    }

    /// Per-member validation RMSE in °C on raw-unit samples.
    pub fn member_rmse(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        let set = TrainingSet::from_samples(samples, &self.norm);
        self.members
            .iter()
            .map(|m| Ok(m.mse(&set.inputs, &set.targets)?.sqrt() * self.norm.target_std))
            .collect()
    }
}

/// Two-sided Student-t critical value for a confidence `level` and `dof`
/// degrees of freedom.
pub fn t_critical(level: f64, dof: usize) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("confidence level must be in (0, 1), got {level}")));
    }
    if dof == 0 {
        return Err(Error::InvalidInput("t distribution needs at least one degree of freedom".into()));
    }
    let t = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(t.inverse_cdf((1.0 + level) / 2.0))
}

/// `mean ± t · s / √n` interval for the ensemble-mean prediction.
pub fn confidence_interval(mean: f64, std: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("confidence interval needs n >= 2, got {n}")));
    }
    let half = t_critical(level, n - 1)? * std / (n as f64).sqrt();
    Ok((mean - half, mean + half))
}
