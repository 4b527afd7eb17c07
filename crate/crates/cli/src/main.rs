//! `hcmt`: train, evaluate and ablate hierarchical-consistency mean-teacher
//! segmentation models, and write synthetic datasets.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error, 3 data
//! error, 4 non-finite loss.

mod ablate;
mod config;
mod evaluate;
mod failure;
mod run_dir;
mod synth;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "hcmt", version, about = "Semi-supervised 3D segmentation with a hierarchical-consistency mean teacher")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration file plus `--set` overrides, applied in order.
#[derive(Args, Clone, Debug, Default)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set mode=mt_hu_hs`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one mode and write a run directory.
    Train(train::TrainArgs),
    /// Score a checkpoint with Dice, Jaccard, ASD and 95HD.
    Evaluate(evaluate::EvaluateArgs),
    /// Train and score several modes on shared data and seeds.
    Ablate(ablate::AblateArgs),
    /// Write synthetic volumes and masks to disk.
    Synth(synth::SynthArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_target(false)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Ablate(a) => ablate::run(a),
        Command::Synth(a) => synth::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
