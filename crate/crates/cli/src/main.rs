mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cal_core::data::Split;
use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "cal",
    version,
    about = "Noisy-label cloud segmentation with a loss-feedback labeling threshold",
    after_help = config::reference()
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Run configuration file (TOML)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for shuffling and synthesis
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Training manifest
    #[arg(long, value_name = "PATH")]
    train: Option<PathBuf>,
    /// Held-out manifest with ground-truth masks
    #[arg(long, value_name = "PATH")]
    test: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct Model {
    /// Checkpoint to start from (train, finetune) or to score (eval)
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset: train/ (noisy masks), train-clean/, test/
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Scan a directory of 38-Cloud PGM patches and write a manifest
    Convert {
        /// Directory to scan (recursively)
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        #[command(flatten)]
        common: Common,
    },
    /// Train a baseline model on the stored masks
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: Model,
    },
    /// Fine-tune with labels regenerated by the adaptive threshold
    Finetune {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: Model,
        /// Initial controller threshold
        #[arg(long, value_name = "REAL")]
        threshold: Option<f64>,
    },
    /// Replace the training masks with thresholded intensities
    Relabel {
        #[command(flatten)]
        common: Common,
        /// Labeling threshold (defaults to the controller's initial threshold)
        #[arg(long, value_name = "REAL")]
        threshold: Option<f64>,
    },
    /// Score a checkpoint on the held-out manifest
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: Model,
    },
    /// Render a history CSV as SVG line charts
    Plot {
        /// History CSV written by train or finetune
        history: PathBuf,
        /// Matching snapshots CSV, adds a held-out score panel
        #[arg(long, value_name = "PATH")]
        snapshots: Option<PathBuf>,
        /// Output directory (defaults to the history file's directory)
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

fn resolve(common: &Common, threshold: Option<f64>) -> anyhow::Result<RunConfig> {
    let flags = Overrides {
        seed: common.seed,
        out: common.out.clone(),
        threshold,
        train: common.train.clone(),
        test: common.test.clone(),
    };
    RunConfig::resolve(common.config.as_deref(), &flags)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { common } => commands::synth(&resolve(&common, None)?),
        Command::Convert { dir, split, common } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            commands::convert(&resolve(&common, None)?, &dir, split, common.out.is_some())
        }
        Command::Train { common, model } => {
            commands::train(&resolve(&common, None)?, model.checkpoint.as_deref())
        }
        Command::Finetune {
            common,
            model,
            threshold,
        } => commands::finetune(&resolve(&common, threshold)?, model.checkpoint.as_deref()),
        Command::Relabel { common, threshold } => commands::relabel(&resolve(&common, threshold)?),
        Command::Eval { common, model } => {
            commands::eval(&resolve(&common, None)?, model.checkpoint.as_deref())
        }
        Command::Plot {
            history,
            snapshots,
            out,
        } => commands::plot(&history, snapshots.as_deref(), out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
