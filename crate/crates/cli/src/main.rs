use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rkn_cli::commands::{self, EvalArgs, FilterArgs, GenerateArgs, PlotArgs, TrainArgs};
use rkn_cli::estimator::{parse_estimator_list, EstimatorSpec};
use rkn_cli::{CliError, CliResult};
use rkn_core::train::TrainConfig;

/// Recursive KalmanNet experiments on the constant-velocity benchmark.
#[derive(Parser)]
#[command(name = "rkn-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate train/val/test datasets.
    Generate {
        /// s1, s2, s3, or one regime: s2a, s2b, s3a, s3b.
        #[arg(long)]
        scenario: String,
        /// Scenario of the test split (default: --scenario).
        #[arg(long)]
        test_scenario: Option<String>,
        #[arg(long, default_value_t = 1000)]
        train: usize,
        #[arg(long, default_value_t = 100)]
        val: usize,
        #[arg(long, default_value_t = 1000)]
        test: usize,
        #[arg(long, default_value_t = 150)]
        length: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long, default_value = "")]
        prefix: String,
    },
    /// Train a model and write its best checkpoint and loss history.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        /// Output name (default: rkn_ref, rkn_e1 or rkn_e2 from the data).
        #[arg(long)]
        tag: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON training config; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: TrainOverrides,
        #[arg(long, default_value = "models")]
        out: PathBuf,
    },
    /// Export per-step estimates, covariances and gains as CSV.
    Filter {
        #[arg(long)]
        data: PathBuf,
        /// kf:oracle, kf:fixed=<r> or rkn:<checkpoint>.
        #[arg(long)]
        estimator: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics CSV and comparison table on a test set.
    Eval {
        #[arg(long)]
        test: PathBuf,
        /// Comma-separated estimators.
        #[arg(long)]
        estimators: String,
        #[arg(long, value_delimiter = ',', default_values_t = [70usize, 80])]
        probes: Vec<usize>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// SVG plots of standard deviations and mean gains from a metrics CSV.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Run generate, train, eval and plot from one experiment config.
    Pipeline {
        config: PathBuf,
        /// Print per-epoch losses.
        #[arg(long)]
        progress: bool,
    },
}

#[derive(Args)]
struct TrainOverrides {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_train_episodes: Option<usize>,
    /// Print per-epoch losses.
    #[arg(long)]
    progress: bool,
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn spec(s: &str) -> CliResult<EstimatorSpec> {
    s.parse().map_err(|e| CliError::usage(format!("{e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    commands::configure_threads()?;
    let command = command_line();
    match cli.command {
        Command::Generate { scenario, test_scenario, train, val, test, length, seed, out, prefix } => {
            commands::generate(&GenerateArgs {
                scenario,
                test_scenario,
                train,
                val,
                test,
                length,
                seed,
                out,
                prefix,
                command,
            })?;
        }
        Command::Train { train, val, tag, seed, config, overrides, out } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
                    TrainConfig::from_json(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?
                }
                None => TrainConfig::default(),
            };
            if let Some(v) = overrides.epochs {
                cfg.max_epochs = v;
                cfg.patience = cfg.patience.min(v.max(1));
            }
            if let Some(v) = overrides.patience {
                cfg.patience = v;
            }
            if let Some(v) = overrides.lr {
                cfg.learning_rate = v;
            }
            if let Some(v) = overrides.batch_size {
                cfg.batch_size = v;
            }
            if overrides.max_train_episodes.is_some() {
                cfg.max_train_episodes = overrides.max_train_episodes;
            }
            commands::train(&TrainArgs { train, val, tag, seed, config: cfg, out, progress: overrides.progress, command })?;
        }
        Command::Filter { data, estimator, out } => {
            commands::filter(&FilterArgs { data, estimator: spec(&estimator)?, out, command })?;
        }
        Command::Eval { test, estimators, probes, out } => {
            let estimators = parse_estimator_list(&estimators).map_err(|e| CliError::usage(e.to_string()))?;
            commands::eval(&EvalArgs { test, estimators, probes, out, command })?;
        }
        Command::Plot { metrics, out } => {
            commands::plot(&PlotArgs { metrics, out, command })?;
        }
        Command::Pipeline { config, progress } => {
            commands::pipeline(&config, progress)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
