use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use evcs_cli::{DetectArgs, SimulateArgs, TrainArgs, EXIT_ANOMALY};
use evcs_thermal::anomaly::{self, DecisionRule, FilterParams, Verdict};
use evcs_thermal::mlp::TrainConfig;
use evcs_thermal::pipeline::DetectOptions;

/// Thermal anomaly detection for EV charging-station converter modules.
#[derive(Debug, Parser)]
#[command(name = "evcs", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one day of station operation and write the dataset.
    Simulate(SimulateCmd),
    /// Train the prediction ensemble on a healthy dataset.
    Train(TrainCmd),
    /// Score a dataset against a trained model and flag anomalous modules.
    Detect(DetectCmd),
}

#[derive(Debug, Args)]
struct SimulateCmd {
    /// TOML configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Simulation seed; defaults to the configuration's rng_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Reuse healthy thermal parameters from an earlier run's params.json.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Inject a heat-sink fault, e.g. `--anomaly module=4 r_hs_scale=1.2`.
    #[arg(long, num_args = 1..=2, value_names = ["module=<id>", "r_hs_scale=<f>"])]
    anomaly: Option<Vec<String>>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainCmd {
    /// Dataset CSV from `simulate`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().n_members)]
    members: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
}

#[derive(Debug, Args)]
struct DetectCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = anomaly::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = anomaly::DEFAULT_FRACTION_RULE)]
    fraction: f64,
    #[arg(long, default_value_t = anomaly::DEFAULT_EMA_ALPHA)]
    ema_alpha: f64,
    #[arg(long, default_value_t = anomaly::DEFAULT_SMA_WINDOW)]
    sma_window: usize,
    /// Confidence level of the prediction interval.
    #[arg(long, default_value_t = 0.99)]
    ci_level: f64,
    /// Histogram bin width.
    #[arg(long, default_value_t = anomaly::DEFAULT_BIN_WIDTH)]
    bin_width: f64,
}

fn run_simulate(cmd: SimulateCmd) -> Result<i32> {
    let anomaly = cmd.anomaly.as_deref().map(evcs_cli::parse_anomaly).transpose()?;
    let outcome = evcs_cli::simulate(&SimulateArgs {
        config: cmd.config,
        seed: cmd.seed,
        params: cmd.params,
        anomaly,
        out: cmd.out.clone(),
    })?;
    println!(
        "simulated {} sessions, {} records (seed {}) -> {}",
        outcome.output.sessions.len(),
        outcome.output.dataset.n_records(),
        outcome.seed,
        cmd.out.display()
    );
    Ok(0)
}

fn run_train(cmd: TrainCmd) -> Result<i32> {
    let config = TrainConfig { epochs: cmd.epochs, n_members: cmd.members, batch_size: cmd.batch_size, ..Default::default() };
    let outcome = evcs_cli::train(&TrainArgs { data: cmd.data, seed: cmd.seed, out: cmd.out.clone(), config })?;
    println!("member  seed  best_epoch  best_val_rmse_c");
    for m in &outcome.model.members {
        println!("{:>6}  {:>4}  {:>10}  {:.4}", m.seed - outcome.model.train_seed, m.seed, m.best_epoch, m.best_val_rmse_c);
    }
    println!("model -> {}", cmd.out.display());
    Ok(0)
}

fn run_detect(cmd: DetectCmd) -> Result<i32> {
    let options = DetectOptions {
        rule: DecisionRule { threshold: cmd.threshold, fraction_rule: cmd.fraction },
        filters: FilterParams { sma_window: cmd.sma_window, ema_alpha: cmd.ema_alpha },
        bin_width: cmd.bin_width,
        ci_level: cmd.ci_level,
    };
    let outcome = evcs_cli::detect(&DetectArgs { model: cmd.model, data: cmd.data, out: cmd.out.clone(), options })?;
    let summary = &outcome.report.summary;
    println!("module  frac>{:<8} verdict    frac>p99  verdict", summary.rule.threshold);
    for m in &summary.modules {
        let (cal_frac, cal_verdict) = match &m.calibrated {
            Some(c) => (format!("{:.4}", c.fraction_above_threshold), verdict_name(c.verdict)),
            None => ("-".into(), "-"),
        };
        println!(
            "{:>6}  {:<13.4} {:<10} {:<9} {}",
            m.module_id,
            m.report.fraction_above_threshold,
            verdict_name(m.report.verdict),
            cal_frac,
            cal_verdict
        );
    }
    if let Some(t) = summary.calibrated_threshold {
        println!("training p99 threshold: {t:.4}");
    }
    println!("report -> {}", cmd.out.display());
    Ok(if outcome.anomalous_modules().is_empty() { 0 } else { EXIT_ANOMALY })
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Healthy => "healthy",
        Verdict::Anomalous => "anomalous",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(cmd) => run_simulate(cmd),
        Command::Train(cmd) => run_train(cmd),
        Command::Detect(cmd) => run_detect(cmd),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(evcs_cli::exit_code(&err) as u8)
        }
    }
}
