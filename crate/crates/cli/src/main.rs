//! `strand`: decomposition-based time-series anomaly detection.
//!
//! Four subcommands form a pipeline over a shared run directory:
//! `synth` writes a synthetic pretraining corpus and a labeled target
//! entity, `train` pretrains and fine-tunes the decomposition model,
//! `detect` calibrates an extreme-value threshold and labels the test
//! split, and `report` renders the results as SVG charts.
//!
//! Exit codes: 0 success, 1 invalid config or arguments, 2 I/O failure,
//! 3 numeric failure (non-finite values or calibration breakdown).
//! Log verbosity follows `RUST_LOG` (default `info`).

mod commands;
mod config;
mod manifest;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use strand_core::Error;

#[derive(Parser)]
#[command(name = "strand", version, about = "Seasonal-trend decomposition anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the pretraining corpus and a labeled evaluation entity
    Synth(CommonArgs),
    /// Pretrain on the corpus and fine-tune on the target train split
    Train(TrainArgs),
    /// Score the test split, calibrate a threshold, and label anomalies
    Detect(DetectArgs),
    /// Render SVG charts and an index page from detect outputs
    Report(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override a config entry by dotted path, e.g. --set model.basis_count=64
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Training phase(s) to run
    #[arg(long, value_enum, default_value = "both")]
    phase: commands::PhaseArg,
    /// Drop a model or training component for comparison runs
    #[arg(long, value_enum, default_value = "none")]
    ablation: commands::AblationArg,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Evaluate predictions against the test label column
    #[arg(long)]
    labels: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth(args) => {
            let cfg = config::load_config(&args.config, &args.set)?;
            commands::cmd_synth(&cfg)
        }
        Command::Train(args) => {
            let cfg = config::load_config(&args.common.config, &args.common.set)?;
            commands::cmd_train(&cfg, args.phase, args.ablation.into())
        }
        Command::Detect(args) => {
            let cfg = config::load_config(&args.common.config, &args.common.set)?;
            commands::cmd_detect(&cfg, args.labels)
        }
        Command::Report(args) => {
            let cfg = config::load_config(&args.config, &args.set)?;
            commands::cmd_report(&cfg)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 2,
        Error::NonFinite(_) | Error::Calibration(_) | Error::DegenerateVariance => 3,
        _ => 1,
    }
}
