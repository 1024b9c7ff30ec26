//! End-to-end orchestration: simulate a station day, train an ensemble on
//! it, and score another day for anomalous modules.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::anomaly::{self, AnomalyReport, DecisionRule, FilterParams, MetricSeries, Verdict};
use crate::config::SimConfig;
use crate::dataset::{loss_window, make_samples, split, Dataset, ModuleSeries, WINDOW_LEN};
use crate::error::{Error, Result};
use crate::mlp::{confidence_interval, train_ensemble, Ensemble, MemberReport, Prediction, TrainConfig};
use crate::model::{Calibration, MemberEntry, ModelFile, MODEL_FORMAT_VERSION};
use crate::rng::{seeded_rng, Stream};
use crate::station::{
    allocate_modules, build_post_loads, sample_sessions, AllocationResult, EvSession, StationConfig,
};
use crate::thermal::{sample_params, simulate_module, ThermalParams};

pub const ALLOCATION_HEADER: [&str; 5] = ["step", "time_s", "module_id", "assigned_w", "loss_w"];
pub const METRICS_HEADER: [&str; 7] = ["step", "module_id", "ae", "ae_norm", "sma", "cma", "ema"];
pub const PREDICTIONS_HEADER: [&str; 7] = ["step", "module_id", "t_hs_c", "mean_c", "std_c", "ci_lo_c", "ci_hi_c"];

/// A heat-sink resistance fault injected into one module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub module_id: usize,
    pub r_hs_scale: f64,
}

impl Anomaly {
    pub fn validate(&self, n_modules: usize) -> Result<()> {
        if self.module_id >= n_modules {
            return Err(Error::InvalidInput(format!(
                "anomaly module {} out of range (station has {n_modules} modules)",
                self.module_id
            )));
        }
        if !(self.r_hs_scale > 0.0 && self.r_hs_scale.is_finite()) {
            return Err(Error::InvalidInput(format!("r_hs_scale must be positive, got {}", self.r_hs_scale)));
        }
        Ok(())
    }
}

/// Draws thermal parameters for every module of the station.
pub fn sample_station_params(config: &SimConfig, seed: u64) -> Result<Vec<ThermalParams>> {
    let mut rng = seeded_rng(seed, Stream::ThermalParams);
    (0..config.station.n_modules())
        .map(|_| sample_params(&mut rng, &config.thermal, config.station.ambient_temp_c))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub sessions: Vec<EvSession>,
    pub post_loads: Vec<Vec<f64>>,
    pub allocation: AllocationResult,
    /// Parameters before any injected fault.
    pub base_params: Vec<ThermalParams>,
    /// Parameters actually simulated.
    pub params: Vec<ThermalParams>,
    pub dataset: Dataset,
}

/// Simulates one horizon of station operation. Loads are drawn from `seed`;
/// thermal parameters come from `base_params` when given, otherwise they are
/// sampled from the same seed.
pub fn simulate_day(
    config: &SimConfig,
    seed: u64,
    base_params: Option<&[ThermalParams]>,
    anomaly: Option<Anomaly>,
) -> Result<SimulationOutput> {
    config.validate()?;
    let station = &config.station;
    let base_params = match base_params {
        Some(p) => {
            if p.len() != station.n_modules() {
                return Err(Error::Dimension { expected: station.n_modules(), actual: p.len() });
            }
            if let Some(bad) = p.iter().find(|p| !p.is_valid()) {
                return Err(Error::InvalidInput(format!("invalid thermal parameters {bad:?}")));
            }
            p.to_vec()
        }
        None => sample_station_params(config, seed)?,
    };
    let mut params = base_params.clone();
    if let Some(a) = anomaly {
        a.validate(station.n_modules())?;
        params[a.module_id] = params[a.module_id].with_r_hs_scaled(a.r_hs_scale);
    }

    let sessions = sample_sessions(&config.sessions, station, &mut seeded_rng(seed, Stream::Sessions))?;
    let post_loads = build_post_loads(&sessions, station)?;
    let allocation = allocate_modules(&post_loads, station, &config.efficiency)?;

    let time_s: Vec<f64> = (0..station.n_steps()).map(|k| station.time_of_step(k)).collect();
    let modules = allocation
        .module_loss
        .iter()
        .zip(&params)
        .enumerate()
        .map(|(module_id, (losses, p))| {
            Ok(ModuleSeries {
                module_id,
                first_step: 0,
                time_s: time_s.clone(),
                p_loss: losses.clone(),
                t_hs: simulate_module(losses, p, station.sample_period_s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SimulationOutput {
        sessions,
        post_loads,
        allocation,
        base_params,
        params,
        dataset: Dataset { modules },
    })
}

pub fn write_allocation_csv<W: Write>(allocation: &AllocationResult, station: &StationConfig, writer: W) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    csv.write_record(ALLOCATION_HEADER)?;
    for step in 0..station.n_steps() {
        for module in 0..station.n_modules() {
            csv.write_record(&[
                step.to_string(),
                station.time_of_step(step).to_string(),
                module.to_string(),
                allocation.assigned_power[module][step].to_string(),
                allocation.module_loss[module][step].to_string(),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}

/// Ensemble predictions for every step of one module series.
pub fn predict_series(ensemble: &Ensemble, series: &ModuleSeries) -> Result<Vec<Prediction>> {
    const CHUNK: usize = 2048;
    let mut out = Vec::with_capacity(series.len());
    let mut windows = Vec::with_capacity(CHUNK * WINDOW_LEN);
    for start in (0..series.len()).step_by(CHUNK) {
        windows.clear();
        for k in start..(start + CHUNK).min(series.len()) {
            windows.extend(loss_window(&series.p_loss, k));
        }
        out.extend(ensemble.predict_batch(&windows)?);
    }
    Ok(out)
}

/// Error metrics of one module against the ensemble.
pub fn module_metrics(ensemble: &Ensemble, series: &ModuleSeries, filters: FilterParams) -> Result<(Vec<Prediction>, MetricSeries)> {
    let preds = predict_series(ensemble, series)?;
    let mean: Vec<f64> = preds.iter().map(|p| p.mean).collect();
    let std: Vec<f64> = preds.iter().map(|p| p.std).collect();
    let metrics = MetricSeries::compute(&series.t_hs, &mean, &std, filters)?;
    Ok((preds, metrics))
}

/// EMA(AE_norm) distribution over a whole dataset.
pub fn calibrate(ensemble: &Ensemble, dataset: &Dataset, filters: FilterParams, bin_width: f64) -> Result<Calibration> {
    let mut values = Vec::with_capacity(dataset.n_records());
    for series in &dataset.modules {
        values.extend(module_metrics(ensemble, series, filters)?.1.ema);
    }
    Ok(Calibration {
        ema_alpha: filters.ema_alpha,
        ema_p99: anomaly::percentile(&values, 99.0)?,
        n_values: values.len(),
        histogram: anomaly::histogram(&values, bin_width)?,
    })
}

/// Trains the ensemble on a healthy dataset and calibrates the error metric
/// on the same day.
pub fn train_model(dataset: &Dataset, seed: u64, config: &TrainConfig) -> Result<(ModelFile, Vec<MemberReport>)> {
    let samples = make_samples(dataset);
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 samples to train, got {}", samples.len())));
    }
    let (train, val) = split(samples, config.train_fraction, &mut seeded_rng(seed, Stream::Split))?;
    let (ensemble, reports) = train_ensemble(&train, &val, seed, config)?;
    drop((train, val));
    let calibration = calibrate(&ensemble, dataset, FilterParams::default(), anomaly::DEFAULT_BIN_WIDTH)?;
    let members = ensemble
        .members
        .into_iter()
        .zip(&reports)
        .map(|(weights, r)| MemberEntry {
            seed: r.seed,
            best_epoch: r.best_epoch,
            best_val_rmse_c: r.best_val_mse.sqrt() * ensemble.norm.target_std,
            weights,
        })
        .collect();
    let model = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        input_len: WINDOW_LEN,
        hidden_layers: [config.hidden1, config.hidden2],
        norm: ensemble.norm,
        train_seed: seed,
        training: *config,
        members,
        calibration: Some(calibration),
    };
    Ok((model, reports))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectOptions {
    pub rule: DecisionRule,
    pub filters: FilterParams,
    pub bin_width: f64,
    pub ci_level: f64,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            rule: DecisionRule::default(),
            filters: FilterParams::default(),
            bin_width: anomaly::DEFAULT_BIN_WIDTH,
            ci_level: 0.99,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModuleDetection {
    pub module_id: usize,
    pub steps: Vec<usize>,
    pub t_hs: Vec<f64>,
    pub predictions: Vec<Prediction>,
    /// Confidence bounds of the mean prediction, one pair per step.
    pub intervals: Vec<(f64, f64)>,
    pub metrics: MetricSeries,
    pub report: AnomalyReport,
    /// Same rule evaluated at the training-day 99th percentile threshold.
    pub calibrated_report: Option<AnomalyReport>,
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub options: DetectOptions,
    pub calibrated_threshold: Option<f64>,
    pub modules: Vec<ModuleDetection>,
}

pub fn detect(model: &ModelFile, dataset: &Dataset, options: DetectOptions) -> Result<Detection> {
    if dataset.modules.is_empty() {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    let ensemble = model.ensemble();
    let calibrated_threshold = model.calibration.as_ref().map(|c| {
        if c.ema_alpha != options.filters.ema_alpha {
            log::warn!(
                "calibration used EMA alpha {} but detection uses {}; calibrated threshold is indicative only",
                c.ema_alpha,
                options.filters.ema_alpha
            );
        }
        c.ema_p99
    });
    let n = ensemble.n_members();
    let mut modules = Vec::with_capacity(dataset.modules.len());
    for series in &dataset.modules {
        let (predictions, metrics) = module_metrics(&ensemble, series, options.filters)?;
        let intervals = if n >= 2 {
            predictions
                .iter()
                .map(|p| confidence_interval(p.mean, p.std, n, options.ci_level))
                .collect::<Result<Vec<_>>>()?
        } else {
            predictions.iter().map(|p| (p.mean, p.mean)).collect()
        };
        let report = anomaly::classify(series.module_id, &metrics.ema, options.rule, options.bin_width)?;
        let calibrated_report = calibrated_threshold
            .map(|threshold| {
                let rule = DecisionRule { threshold, ..options.rule };
                anomaly::classify(series.module_id, &metrics.ema, rule, options.bin_width)
            })
            .transpose()?;
        modules.push(ModuleDetection {
            module_id: series.module_id,
            steps: (series.first_step..series.first_step + series.len()).collect(),
            t_hs: series.t_hs.clone(),
            predictions,
            intervals,
            metrics,
            report,
            calibrated_report,
        });
    }
    Ok(Detection { options, calibrated_threshold, modules })
}

impl Detection {
    pub fn anomalous_modules(&self) -> Vec<usize> {
        self.modules.iter().filter(|m| m.report.verdict == Verdict::Anomalous).map(|m| m.module_id).collect()
    }

    pub fn module(&self, module_id: usize) -> Option<&ModuleDetection> {
        self.modules.iter().find(|m| m.module_id == module_id)
    }

    pub fn summary(&self) -> DetectionSummary {
        DetectionSummary {
            rule: self.options.rule,
            filters: self.options.filters,
            ci_level: self.options.ci_level,
            calibrated_threshold: self.calibrated_threshold,
            anomalous_modules: self.anomalous_modules(),
            modules: self
                .modules
                .iter()
                .map(|m| ModuleSummary {
                    module_id: m.module_id,
                    n_steps: m.metrics.len(),
                    warmup_steps: m.metrics.warmup_steps(),
                    mean_signed_error_c: m
                        .predictions
                        .iter()
                        .zip(&m.t_hs)
                        .map(|(p, t)| p.mean - t)
                        .sum::<f64>()
                        / m.t_hs.len() as f64,
                    report: m.report.clone(),
                    calibrated: m.calibrated_report.as_ref().map(|r| CalibratedVerdict {
                        threshold: r.threshold,
                        fraction_above_threshold: r.fraction_above_threshold,
                        verdict: r.verdict,
                    }),
                })
                .collect(),
        }
    }

    pub fn write_metrics_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        csv.write_record(METRICS_HEADER)?;
        for m in &self.modules {
            let s = &m.metrics;
            for i in 0..s.len() {
                csv.write_record(&[
                    m.steps[i].to_string(),
                    m.module_id.to_string(),
                    s.ae[i].to_string(),
                    s.ae_norm[i].to_string(),
                    s.sma[i].to_string(),
                    s.cma[i].to_string(),
                    s.ema[i].to_string(),
                ])?;
            }
        }
        csv.flush()?;
        Ok(())
    }

    pub fn write_predictions_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        csv.write_record(PREDICTIONS_HEADER)?;
        for m in &self.modules {
            for i in 0..m.predictions.len() {
                let (lo, hi) = m.intervals[i];
                csv.write_record(&[
                    m.steps[i].to_string(),
                    m.module_id.to_string(),
                    m.t_hs[i].to_string(),
                    m.predictions[i].mean.to_string(),
                    m.predictions[i].std.to_string(),
                    lo.to_string(),
                    hi.to_string(),
                ])?;
            }
        }
        csv.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedVerdict {
    pub threshold: f64,
    pub fraction_above_threshold: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleSummary {
    pub module_id: usize,
    pub n_steps: usize,
    pub warmup_steps: usize,
    /// Mean of (prediction − truth) over the day.
    pub mean_signed_error_c: f64,
    pub report: AnomalyReport,
    pub calibrated: Option<CalibratedVerdict>,
}

/// Machine-readable detection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub rule: DecisionRule,
    pub filters: FilterParams,
    pub ci_level: f64,
    pub calibrated_threshold: Option<f64>,
    pub anomalous_modules: Vec<usize>,
    pub modules: Vec<ModuleSummary>,
}
