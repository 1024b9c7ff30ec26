use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};

use evcs_thermal::anomaly::{self, DecisionRule, FilterParams, Verdict};
use evcs_thermal::dataset::Dataset;
use evcs_thermal::mlp::{MemberReport, TrainConfig};
use evcs_thermal::model::ModelFile;
use evcs_thermal::pipeline::{
    self, simulate_day, train_model, Anomaly, DetectOptions, Detection, DetectionSummary, SimulationOutput,
};
use evcs_thermal::thermal::ThermalParams;
use evcs_thermal::SimConfig;

use crate::manifest::{self, FileEntry, RunManifest, Seeds};
use crate::plot::{self, Band, HistogramChart, HistogramGroup, Line, LineChart, PALETTE};
use crate::UsageError;

pub const DATASET_FILE: &str = "dataset.csv";
pub const ALLOCATION_FILE: &str = "allocation.csv";
pub const PARAMS_FILE: &str = "params.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const REPORT_FILE: &str = "report.json";
pub const PLOTS_DIR: &str = "plots";

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parses `module=<id> r_hs_scale=<f>`, given as separate tokens or as one
/// comma-separated token.
pub fn parse_anomaly(tokens: &[String]) -> Result<Anomaly> {
    let mut module_id = None;
    let mut scale = None;
    for part in tokens.iter().flat_map(|t| t.split(',')).map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) =
            part.split_once('=').ok_or_else(|| usage(format!("anomaly spec `{part}` is not key=value")))?;
        match key {
            "module" => {
                module_id = Some(value.parse::<usize>().map_err(|_| usage(format!("bad anomaly module id `{value}`")))?)
            }
            "r_hs_scale" => {
                scale = Some(value.parse::<f64>().map_err(|_| usage(format!("bad anomaly r_hs_scale `{value}`")))?)
            }
            other => return Err(usage(format!("unknown anomaly key `{other}`"))),
        }
    }
    let anomaly = Anomaly {
        module_id: module_id.ok_or_else(|| usage("anomaly spec needs module=<id>"))?,
        r_hs_scale: scale.ok_or_else(|| usage("anomaly spec needs r_hs_scale=<f>"))?,
    };
    if !(anomaly.r_hs_scale > 0.0 && anomaly.r_hs_scale.is_finite()) {
        return Err(usage(format!("r_hs_scale must be positive, got {}", anomaly.r_hs_scale)));
    }
    Ok(anomaly)
}

/// Thermal parameters of one simulation. `base` holds the healthy values and
/// is what `--params` reads back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub base: Vec<ThermalParams>,
    pub simulated: Vec<ThermalParams>,
    pub anomaly: Option<Anomaly>,
}

impl ParamsFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading parameter file {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing parameter file {}", path.display()))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).with_context(|| format!("opening dataset {}", path.display()))?;
    Dataset::read_csv(BufReader::new(file)).with_context(|| format!("reading dataset {}", path.display()))
}

fn file_entries(paths: &[PathBuf]) -> Result<Vec<FileEntry>> {
    paths.iter().map(|p| FileEntry::from_path(p)).collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulateArgs {
    pub config: Option<PathBuf>,
    /// Defaults to the configuration's `rng_seed`.
    pub seed: Option<u64>,
    pub params: Option<PathBuf>,
    pub anomaly: Option<Anomaly>,
    pub out: PathBuf,
}

#[derive(Debug)]
pub struct SimulateOutcome {
    pub seed: u64,
    pub output: SimulationOutput,
    pub manifest: RunManifest,
}

pub fn simulate(args: &SimulateArgs) -> Result<SimulateOutcome> {
    let started_at = manifest::timestamp();
    let config = match &args.config {
        Some(path) => SimConfig::load(path)
            .map_err(|e| usage(format!("invalid configuration {}: {e}", path.display())))?,
        None => SimConfig::default(),
    };
    config.validate().map_err(|e| usage(format!("invalid configuration: {e}")))?;
    if let Some(a) = &args.anomaly {
        a.validate(config.station.n_modules()).map_err(|e| usage(e.to_string()))?;
    }
    let seed = args.seed.unwrap_or(config.station.rng_seed);
    let base = match &args.params {
        Some(path) => Some(ParamsFile::load(path)?.base),
        None => None,
    };
    let output = simulate_day(&config, seed, base.as_deref(), args.anomaly)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let dataset_path = args.out.join(DATASET_FILE);
    let allocation_path = args.out.join(ALLOCATION_FILE);
    let params_path = args.out.join(PARAMS_FILE);
    let config_path = args.out.join(CONFIG_FILE);

    let mut w = create_writer(&dataset_path)?;
    output.dataset.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create_writer(&allocation_path)?;
    pipeline::write_allocation_csv(&output.allocation, &config.station, &mut w)?;
    w.flush()?;
    let params = ParamsFile { base: output.base_params.clone(), simulated: output.params.clone(), anomaly: args.anomaly };
    write_json(&params_path, &params)?;
    let config_text = config.to_toml_string()?;
    fs::write(&config_path, &config_text).with_context(|| format!("writing {}", config_path.display()))?;

    let mut inputs: Vec<PathBuf> = args.config.iter().cloned().collect();
    inputs.extend(args.params.iter().cloned());
    let manifest = RunManifest {
        tool: "evcs".into(),
        version: manifest::TOOL_VERSION.into(),
        command: "simulate".into(),
        run_dir: args.out.clone(),
        config_digest: manifest::sha256_hex(config_text.as_bytes()),
        config: serde_json::json!({
            "simulation": serde_json::to_value(&config)?,
            "anomaly": args.anomaly,
        }),
        seeds: Seeds { simulation: Some(seed), training: None },
        inputs: file_entries(&inputs)?,
        outputs: file_entries(&[dataset_path, allocation_path, params_path, config_path])?,
        started_at,
        finished_at: manifest::timestamp(),
    };
    manifest.write(&args.out.join(MANIFEST_FILE))?;
    Ok(SimulateOutcome { seed, output, manifest })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainArgs {
    pub data: PathBuf,
    pub seed: u64,
    pub out: PathBuf,
    pub config: TrainConfig,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: ModelFile,
    pub reports: Vec<MemberReport>,
    pub manifest_path: PathBuf,
    pub manifest: RunManifest,
}

impl TrainOutcome {
    /// Best validation RMSE of each member in °C.
    pub fn member_rmse_c(&self) -> Vec<f64> {
        self.model.members.iter().map(|m| m.best_val_rmse_c).collect()
    }
}

/// Manifest path written next to a model file: `model.json` gives
/// `model.manifest.json`.
pub fn model_manifest_path(model: &Path) -> PathBuf {
    let stem = model.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    model.with_file_name(format!("{stem}.manifest.json"))
}

pub fn train(args: &TrainArgs) -> Result<TrainOutcome> {
    let started_at = manifest::timestamp();
    args.config.validate().map_err(|e| usage(format!("invalid training configuration: {e}")))?;
    let dataset = read_dataset(&args.data)?;
    let (model, reports) = train_model(&dataset, args.seed, &args.config)?;

    let run_dir = args.out.parent().map(Path::to_path_buf).unwrap_or_default();
    if !run_dir.as_os_str().is_empty() {
        fs::create_dir_all(&run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
    }
    model.save(&args.out).with_context(|| format!("writing model {}", args.out.display()))?;

    let config_json = serde_json::to_string(&args.config)?;
    let manifest_path = model_manifest_path(&args.out);
    let manifest = RunManifest {
        tool: "evcs".into(),
        version: manifest::TOOL_VERSION.into(),
        command: "train".into(),
        run_dir,
        config_digest: manifest::sha256_hex(config_json.as_bytes()),
        config: serde_json::to_value(args.config)?,
        seeds: Seeds { simulation: None, training: Some(args.seed) },
        inputs: file_entries(std::slice::from_ref(&args.data))?,
        outputs: file_entries(std::slice::from_ref(&args.out))?,
        started_at,
        finished_at: manifest::timestamp(),
    };
    manifest.write(&manifest_path)?;
    Ok(TrainOutcome { model, reports, manifest_path, manifest })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
    pub options: DetectOptions,
}

impl DetectArgs {
    pub fn new(model: PathBuf, data: PathBuf, out: PathBuf) -> Self {
        Self { model, data, out, options: DetectOptions::default() }
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectReport {
    pub version: String,
    pub model_sha256: String,
    pub dataset_sha256: String,
    pub train_seed: u64,
    pub member_val_rmse_c: Vec<f64>,
    pub summary: DetectionSummary,
}

#[derive(Debug)]
pub struct DetectOutcome {
    pub detection: Detection,
    pub report: DetectReport,
    pub manifest: RunManifest,
}

impl DetectOutcome {
    pub fn anomalous_modules(&self) -> &[usize] {
        &self.report.summary.anomalous_modules
    }
}

fn validate_options(options: &DetectOptions) -> Result<()> {
    let DecisionRule { threshold, fraction_rule } = options.rule;
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(usage(format!("threshold must be a non-negative number, got {threshold}")));
    }
    if !(0.0..=1.0).contains(&fraction_rule) {
        return Err(usage(format!("fraction must lie in [0, 1], got {fraction_rule}")));
    }
    let FilterParams { sma_window, ema_alpha } = options.filters;
    if sma_window == 0 {
        return Err(usage("SMA window must be at least 1 step"));
    }
    if !(ema_alpha > 0.0 && ema_alpha <= 1.0) {
        return Err(usage(format!("EMA alpha must lie in (0, 1], got {ema_alpha}")));
    }
    if !(options.ci_level > 0.0 && options.ci_level < 1.0) {
        return Err(usage(format!("confidence level must lie in (0, 1), got {}", options.ci_level)));
    }
    if !(options.bin_width > 0.0 && options.bin_width.is_finite()) {
        return Err(usage(format!("histogram bin width must be positive, got {}", options.bin_width)));
    }
    Ok(())
}

/// Scores a dataset against a trained model. Inputs are fully read and
/// validated before anything is written.
pub fn detect(args: &DetectArgs) -> Result<DetectOutcome> {
    let started_at = manifest::timestamp();
    validate_options(&args.options)?;
    let model_bytes = fs::read(&args.model).with_context(|| format!("reading model {}", args.model.display()))?;
    let model = ModelFile::from_json(
        std::str::from_utf8(&model_bytes).map_err(|e| anyhow!("model {} is not UTF-8: {e}", args.model.display()))?,
    )
    .with_context(|| format!("loading model {}", args.model.display()))?;
    let dataset_bytes = fs::read(&args.data).with_context(|| format!("reading dataset {}", args.data.display()))?;
    let dataset =
        Dataset::read_csv(dataset_bytes.as_slice()).with_context(|| format!("reading dataset {}", args.data.display()))?;
    let detection = pipeline::detect(&model, &dataset, args.options)?;

    let report = DetectReport {
        version: manifest::TOOL_VERSION.into(),
        model_sha256: manifest::sha256_hex(&model_bytes),
        dataset_sha256: manifest::sha256_hex(&dataset_bytes),
        train_seed: model.train_seed,
        member_val_rmse_c: model.members.iter().map(|m| m.best_val_rmse_c).collect(),
        summary: detection.summary(),
    };

    let plots_dir = args.out.join(PLOTS_DIR);
    fs::create_dir_all(&plots_dir).with_context(|| format!("creating {}", plots_dir.display()))?;
    let metrics_path = args.out.join(METRICS_FILE);
    let predictions_path = args.out.join(PREDICTIONS_FILE);
    let report_path = args.out.join(REPORT_FILE);
    let mut w = create_writer(&metrics_path)?;
    detection.write_metrics_csv(&mut w)?;
    w.flush()?;
    let mut w = create_writer(&predictions_path)?;
    detection.write_predictions_csv(&mut w)?;
    w.flush()?;
    write_json(&report_path, &report)?;

    let mut outputs = vec![metrics_path, predictions_path, report_path];
    for (name, svg) in render_plots(&detection, &dataset, &model)? {
        let path = plots_dir.join(name);
        fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
        outputs.push(path);
    }

    let options_json = serde_json::to_string(&args.options)?;
    let manifest = RunManifest {
        tool: "evcs".into(),
        version: manifest::TOOL_VERSION.into(),
        command: "detect".into(),
        run_dir: args.out.clone(),
        config_digest: manifest::sha256_hex(options_json.as_bytes()),
        config: serde_json::to_value(args.options)?,
        seeds: Seeds { simulation: None, training: Some(model.train_seed) },
        inputs: file_entries(&[args.model.clone(), args.data.clone()])?,
        outputs: file_entries(&outputs)?,
        started_at,
        finished_at: manifest::timestamp(),
    };
    manifest.write(&args.out.join(MANIFEST_FILE))?;
    Ok(DetectOutcome { detection, report, manifest })
}

fn hours(dataset: &Dataset, module_id: usize, n: usize) -> Vec<f64> {
    match dataset.module(module_id) {
        Some(series) => series.time_s.iter().map(|t| t / 3600.0).collect(),
        None => (0..n).map(|i| i as f64).collect(),
    }
}

/// Prediction band and metric traces per module, plus the EMA histogram.
pub fn render_plots(detection: &Detection, dataset: &Dataset, model: &ModelFile) -> Result<Vec<(String, String)>> {
    let mut plots = Vec::new();
    let level = detection.options.ci_level * 100.0;
    for m in &detection.modules {
        let x = hours(dataset, m.module_id, m.t_hs.len());
        let band = LineChart {
            title: format!("Module {}: heat-sink temperature and ensemble prediction", m.module_id),
            x_label: "time [h]".into(),
            y_label: "temperature [°C]".into(),
            bands: vec![Band {
                label: format!("{level:.0}% CI"),
                color: PALETTE[0].into(),
                x: x.clone(),
                lo: m.intervals.iter().map(|i| i.0).collect(),
                hi: m.intervals.iter().map(|i| i.1).collect(),
            }],
            lines: vec![
                Line { label: "ground truth".into(), color: PALETTE[5].into(), x: x.clone(), y: m.t_hs.clone(), dashed: false },
                Line {
                    label: "mean prediction".into(),
                    color: PALETTE[0].into(),
                    x: x.clone(),
                    y: m.predictions.iter().map(|p| p.mean).collect(),
                    dashed: true,
                },
            ],
            rules: vec![],
            y_limits: None,
        };
        plots.push((format!("prediction_module_{}.svg", m.module_id), band.render()));

        let s = &m.metrics;
        let mut rules = vec![(format!("threshold {}", detection.options.rule.threshold), detection.options.rule.threshold)];
        if let Some(t) = detection.calibrated_threshold {
            rules.push((format!("training p99 {t:.3}"), t));
        }
        let filtered_max = s.sma.iter().chain(&s.cma).chain(&s.ema).chain(rules.iter().map(|r| &r.1)).fold(0.0, |a: f64, &b| a.max(b));
        let traces = LineChart {
            title: format!("Module {}: normalized absolute error and moving averages", m.module_id),
            x_label: "time [h]".into(),
            y_label: "AE_norm".into(),
            bands: vec![],
            lines: vec![
                Line { label: "AE_norm".into(), color: "#c7c7c7".into(), x: x.clone(), y: s.ae_norm.clone(), dashed: false },
                Line { label: "SMA".into(), color: PALETTE[2].into(), x: x.clone(), y: s.sma.clone(), dashed: false },
                Line { label: "CMA".into(), color: PALETTE[3].into(), x: x.clone(), y: s.cma.clone(), dashed: false },
                Line { label: "EMA".into(), color: PALETTE[1].into(), x, y: s.ema.clone(), dashed: false },
            ],
            rules,
            y_limits: Some((0.0, 1.5 * filtered_max.max(1.0))),
        };
        plots.push((format!("metrics_module_{}.svg", m.module_id), traces.render()));
    }

    let bin_width = detection.options.bin_width;
    let pooled = |verdict: Verdict| -> Vec<f64> {
        detection
            .modules
            .iter()
            .filter(|m| m.report.verdict == verdict)
            .flat_map(|m| m.metrics.ema.iter().copied())
            .collect()
    };
    let mut groups = Vec::new();
    if let Some(cal) = &model.calibration {
        if cal.histogram.bin_width == bin_width {
            groups.push(HistogramGroup {
                label: "training day".into(),
                color: PALETTE[5].into(),
                freq: plot::frequencies(&cal.histogram.counts),
            });
        }
    }
    for (label, verdict, color) in [("healthy modules", Verdict::Healthy, PALETTE[2]), ("flagged modules", Verdict::Anomalous, PALETTE[1])] {
        let values = pooled(verdict);
        if !values.is_empty() {
            let h = anomaly::histogram(&values, bin_width)?;
            groups.push(HistogramGroup { label: label.into(), color: color.into(), freq: plot::frequencies(&h.counts) });
        }
    }
    let hist = HistogramChart {
        title: "EMA of normalized absolute error".into(),
        x_label: "EMA(AE_norm)".into(),
        bin_width,
        groups,
    };
    plots.push(("histogram.svg".into(), hist.render()));
    Ok(plots)
}
