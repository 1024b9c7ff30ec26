//! Time-aligned loss/temperature records, training windows and
//! normalization statistics.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of past loss samples fed to the networks (15 min at 7.2 s).
pub const WINDOW_LEN: usize = 125;

pub const DATASET_HEADER: [&str; 5] = ["step", "time_s", "module_id", "p_loss_w", "t_hs_c"];

/// One row of the dataset CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub step: usize,
    pub time_s: f64,
    pub module_id: usize,
    #[serde(rename = "p_loss_w")]
    pub p_loss: f64,
    #[serde(rename = "t_hs_c")]
    pub t_hs: f64,
}

/// Contiguous per-module series.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleSeries {
    pub module_id: usize,
    pub first_step: usize,
    pub time_s: Vec<f64>,
    pub p_loss: Vec<f64>,
    pub t_hs: Vec<f64>,
}

impl ModuleSeries {
    pub fn len(&self) -> usize {
        self.p_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_loss.is_empty()
    }
}

/// A day (or any span) of simulation output, one series per module,
/// ordered by module id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub modules: Vec<ModuleSeries>,
}

impl Dataset {
    pub fn n_records(&self) -> usize {
        self.modules.iter().map(ModuleSeries::len).sum()
    }

    pub fn module(&self, module_id: usize) -> Option<&ModuleSeries> {
        self.modules.iter().find(|m| m.module_id == module_id)
    }

    /// Groups rows by module, checking that steps are contiguous and values
    /// physical.
    pub fn from_records(records: &[Record]) -> Result<Self> {
        let mut modules: Vec<ModuleSeries> = Vec::new();
        let mut sorted: Vec<&Record> = records.iter().collect();
        sorted.sort_by_key(|r| (r.module_id, r.step));
        for r in sorted {
            if !(r.p_loss.is_finite() && r.p_loss >= 0.0) {
                return Err(Error::Data(format!(
                    "module {} step {}: power loss must be finite and >= 0, got {}",
                    r.module_id, r.step, r.p_loss
                )));
            }
            if !r.t_hs.is_finite() || !r.time_s.is_finite() {
                return Err(Error::Data(format!(
                    "module {} step {}: non-finite value",
                    r.module_id, r.step
                )));
            }
            match modules.last_mut() {
                Some(m) if m.module_id == r.module_id => {
                    let expected = m.first_step + m.len();
                    if r.step != expected {
                        return Err(Error::Data(format!(
                            "module {}: expected step {expected}, found {}",
                            r.module_id, r.step
                        )));
                    }
                    m.time_s.push(r.time_s);
                    m.p_loss.push(r.p_loss);
                    m.t_hs.push(r.t_hs);
                }
                _ => modules.push(ModuleSeries {
                    module_id: r.module_id,
                    first_step: r.step,
                    time_s: vec![r.time_s],
                    p_loss: vec![r.p_loss],
                    t_hs: vec![r.t_hs],
                }),
            }
        }
        Ok(Self { modules })
    }

    /// Rows in step-major, module-minor order.
    pub fn records(&self) -> Vec<Record> {
        let mut rows: Vec<Record> = self
            .modules
            .iter()
            .flat_map(|m| {
                (0..m.len()).map(move |i| Record {
                    step: m.first_step + i,
                    time_s: m.time_s[i],
                    module_id: m.module_id,
                    p_loss: m.p_loss[i],
                    t_hs: m.t_hs[i],
                })
            })
            .collect();
        rows.sort_by_key(|r| (r.step, r.module_id));
        rows
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        csv.write_record(DATASET_HEADER)?;
        for r in self.records() {
            csv.write_record(&[
                r.step.to_string(),
                r.time_s.to_string(),
                r.module_id.to_string(),
                r.p_loss.to_string(),
                r.t_hs.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::Reader::from_reader(reader);
        let header = csv.headers()?.clone();
        if header.iter().ne(DATASET_HEADER.iter().copied()) {
            return Err(Error::Data(format!(
                "unexpected dataset header {:?}, expected {}",
                header.iter().collect::<Vec<_>>(),
                DATASET_HEADER.join(",")
            )));
        }
        let records = csv.deserialize().collect::<std::result::Result<Vec<Record>, _>>()?;
        Self::from_records(&records)
    }
}

/// Network input window and its temperature target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub module_id: usize,
    pub step: usize,
    /// Power losses ending at `step`, oldest first, W.
    pub window: Vec<f64>,
    pub target: f64,
}

/// One sample per module and step. Windows reaching before the first
/// record are left-padded with zeros (the station starts cold).
pub fn make_samples(dataset: &Dataset) -> Vec<Sample> {
    let mut samples = Vec::with_capacity(dataset.n_records());
    for m in &dataset.modules {
        for k in 0..m.len() {
            samples.push(Sample {
                module_id: m.module_id,
                step: m.first_step + k,
                window: loss_window(&m.p_loss, k),
                target: m.t_hs[k],
            });
        }
    }
    samples
}

/// The `WINDOW_LEN` losses ending at index `k`, zero-padded on the left.
pub fn loss_window(losses: &[f64], k: usize) -> Vec<f64> {
    let mut window = vec![0.0; WINDOW_LEN];
    let available = (k + 1).min(WINDOW_LEN);
    window[WINDOW_LEN - available..].copy_from_slice(&losses[k + 1 - available..=k]);
    window
}

/// Random partition into `floor(train_frac · N)` training items and the rest.
pub fn split<T, R: Rng + ?Sized>(items: Vec<T>, train_frac: f64, rng: &mut R) -> Result<(Vec<T>, Vec<T>)> {
    if items.len() < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 samples to split, got {}", items.len())));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidInput(format!("train fraction must be in (0, 1), got {train_frac}")));
    }
    let n_train = (train_frac * items.len() as f64).floor() as usize;
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    let mut order: Vec<usize> = (0..slots.len()).collect();
    order.shuffle(rng);
    let mut take = |idx: &[usize]| -> Vec<T> { idx.iter().map(|&i| slots[i].take().expect("index used once")).collect() };
    let train = take(&order[..n_train]);
    let val = take(&order[n_train..]);
    Ok((train, val))
}

/// Z-score statistics shared by every window entry and by the targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub input_mean: f64,
    pub input_std: f64,
    pub target_mean: f64,
    pub target_std: f64,
}

fn mean_and_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (sum, n) = values.clone().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

fn floored(std: f64, mean: f64, what: &str) -> f64 {
    let floor = 1e-6 * mean.abs().max(1.0);
    if std < floor {
        log::warn!("{what} standard deviation {std:e} floored to {floor:e}");
        floor
    } else {
        std
    }
}

impl NormStats {
    /// Population moments over the given (training) samples only.
    pub fn compute(train: &[Sample]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidInput("cannot compute normalization of an empty set".into()));
        }
        let (input_mean, input_std) = mean_and_std(train.iter().flat_map(|s| s.window.iter().copied()));
        let (target_mean, target_std) = mean_and_std(train.iter().map(|s| s.target));
        Ok(Self {
            input_mean,
            input_std: floored(input_std, input_mean, "input"),
            target_mean,
            target_std: floored(target_std, target_mean, "target"),
        })
    }

    pub fn normalize_input(&self, x: f64) -> f64 {
        (x - self.input_mean) / self.input_std
    }

    pub fn denormalize_input(&self, z: f64) -> f64 {
        z * self.input_std + self.input_mean
    }

    pub fn normalize_target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    pub fn denormalize_target(&self, z: f64) -> f64 {
        z * self.target_std + self.target_mean
    }

    pub fn apply(&self, sample: &Sample) -> Sample {
        Sample {
            window: sample.window.iter().map(|&x| self.normalize_input(x)).collect(),
            target: self.normalize_target(sample.target),
            ..sample.clone()
        }
    }

    pub fn invert(&self, sample: &Sample) -> Sample {
        Sample {
            window: sample.window.iter().map(|&z| self.denormalize_input(z)).collect(),
            target: self.denormalize_target(sample.target),
            ..sample.clone()
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.input_mean, self.input_std, self.target_mean, self.target_std].iter().all(|v| v.is_finite())
            && self.input_std > 0.0
            && self.target_std > 0.0
    }
}

/// Convenience wrapper matching [`NormStats::compute`].
pub fn compute_norm_stats(train: &[Sample]) -> Result<NormStats> {
    NormStats::compute(train)
}

/// Convenience wrapper matching [`NormStats::apply`].
pub fn apply_norm(sample: &Sample, stats: &NormStats) -> Sample {
    stats.apply(sample)
}
