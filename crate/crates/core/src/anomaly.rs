//! Prediction-error anomaly metrics, moving-average filters and the
//! fraction-above-threshold decision rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound on the ensemble spread when normalizing errors, °C.
pub const S_FLOOR: f64 = 1e-3;
/// One hour of 7.2 s samples.
pub const DEFAULT_SMA_WINDOW: usize = 500;
pub const DEFAULT_EMA_ALPHA: f64 = 4e-3;
pub const DEFAULT_THRESHOLD: f64 = 30.0;
pub const DEFAULT_FRACTION_RULE: f64 = 0.20;
pub const DEFAULT_BIN_WIDTH: f64 = 2.0;

pub fn ae(t_true: f64, mean_pred: f64) -> f64 {
    (t_true - mean_pred).abs()
}

/// Absolute error in units of the ensemble spread, floored at [`S_FLOOR`].
pub fn ae_norm(t_true: f64, mean_pred: f64, s: f64) -> f64 {
    ae(t_true, mean_pred) / s.max(S_FLOOR)
}

/// Compensated (Neumaier) accumulator for long running sums.
#[derive(Debug, Default, Clone, Copy)]
struct RunningSum {
    sum: f64,
    compensation: f64,
}

impl RunningSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Trailing mean over the last `n` samples; during warm-up the mean of the
/// available prefix.
pub fn sma(series: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("SMA window must be >= 1".into()));
    }
    let mut acc = RunningSum::default();
    Ok(series
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            acc.add(x);
            if k >= n {
                acc.add(-series[k - n]);
            }
            acc.value() / (k + 1).min(n) as f64
        })
        .collect())
}

/// Prefix mean.
pub fn cma(series: &[f64]) -> Vec<f64> {
    let mut acc = RunningSum::default();
    series
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            acc.add(x);
            acc.value() / (k + 1) as f64
        })
        .collect()
}

/// `EMA_1 = x_1`, `EMA_k = α·x_k + (1 − α)·EMA_{k−1}`.
pub fn ema(series: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("EMA alpha must be in (0, 1], got {alpha}")));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut prev = None;
    for &x in series {
        let next = match prev {
            None => x,
            Some(p) => alpha * x + (1.0 - alpha) * p,
        };
        out.push(next);
        prev = Some(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub sma_window: usize,
    pub ema_alpha: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { sma_window: DEFAULT_SMA_WINDOW, ema_alpha: DEFAULT_EMA_ALPHA }
    }
}

/// Per-step error metrics of one module. The filters smooth `ae_norm`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub ae: Vec<f64>,
    pub ae_norm: Vec<f64>,
    pub sma: Vec<f64>,
    pub cma: Vec<f64>,
    pub ema: Vec<f64>,
    pub params: FilterParams,
}

impl MetricSeries {
    pub fn compute(t_true: &[f64], mean_pred: &[f64], std_pred: &[f64], params: FilterParams) -> Result<Self> {
        if t_true.len() != mean_pred.len() || t_true.len() != std_pred.len() {
            return Err(Error::Dimension { expected: t_true.len(), actual: mean_pred.len().min(std_pred.len()) });
        }
        if std_pred.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidInput("prediction spread must be >= 0".into()));
        }
        let ae_series: Vec<f64> = t_true.iter().zip(mean_pred).map(|(&t, &m)| ae(t, m)).collect();
        let norm: Vec<f64> =
            t_true.iter().zip(mean_pred).zip(std_pred).map(|((&t, &m), &s)| ae_norm(t, m, s)).collect();
        Ok(Self {
            sma: sma(&norm, params.sma_window)?,
            cma: cma(&norm),
            ema: ema(&norm, params.ema_alpha)?,
            ae: ae_series,
            ae_norm: norm,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.ae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ae.is_empty()
    }

    /// Leading samples whose SMA averages fewer than `sma_window` values.
    pub fn warmup_steps(&self) -> usize {
        self.params.sma_window.saturating_sub(1).min(self.len())
    }
}

/// Right-open bins `[i·w, (i+1)·w)` starting at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        (0..=self.counts.len()).map(|i| i as f64 * self.bin_width).collect()
    }
}

pub fn histogram(values: &[f64], bin_width: f64) -> Result<Histogram> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidInput(format!("bin width must be positive, got {bin_width}")));
    }
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidInput(format!("histogram values must be finite and >= 0, got {bad}")));
    }
    let mut counts = Vec::new();
    for &v in values {
        let bin = (v / bin_width).floor() as usize;
        if bin >= counts.len() {
            counts.resize(bin + 1, 0);
        }
        counts[bin] += 1;
    }
    Ok(Histogram { bin_width, counts })
}

/// `q`-th percentile (0–100) with linear interpolation between order
/// statistics.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("percentile of an empty set".into()));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::InvalidInput(format!("percentile must be in [0, 100], got {q}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64))
}

/// Fraction of values strictly above `threshold`.
pub fn fraction_above(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v > threshold).count() as f64 / values.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Healthy,
    Anomalous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub threshold: f64,
    pub fraction_rule: f64,
}

impl Default for DecisionRule {
    fn default() -> Self {
        Self { threshold: DEFAULT_THRESHOLD, fraction_rule: DEFAULT_FRACTION_RULE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub module_id: usize,
    pub fraction_above_threshold: f64,
    pub threshold: f64,
    pub fraction_rule: f64,
    pub verdict: Verdict,
    pub histogram: Histogram,
}

/// Flags a module when strictly more than `fraction_rule` of its filtered
/// values lie strictly above `threshold`.
pub fn classify(module_id: usize, ema_series: &[f64], rule: DecisionRule, bin_width: f64) -> Result<AnomalyReport> {
    let fraction = fraction_above(ema_series, rule.threshold);
    let verdict = if fraction > rule.fraction_rule { Verdict::Anomalous } else { Verdict::Healthy };
    Ok(AnomalyReport {
        module_id,
        fraction_above_threshold: fraction,
        threshold: rule.threshold,
        fraction_rule: rule.fraction_rule,
        verdict,
        histogram: histogram(ema_series, bin_width)?,
    })
}
