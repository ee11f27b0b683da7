//! `curbscan`: train, apply and score roadside background models.
//!
//! One binary, subcommand style. Global flags (`--config`, `--seed`,
//! `--threads`, `--json-log`) apply to every subcommand. Exit codes:
//! 0 success, 1 bad invocation or configuration, 2 unreadable or
//! malformed data, 3 a requested eval threshold genuinely failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use curbscan::commands::{self, ThresholdFailure, UsageError};
use curbscan::engine::StageLog;
use curbscan::run_config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "curbscan", version, about = "Roadside point-stream background subtraction and object detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration file (every option has a documented default).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized stage; same seed, same outputs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Emit stage timings as JSON objects instead of plain lines.
    #[arg(long, global = true)]
    json_log: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic point stream plus ground-truth sidecars.
    Synth(commands::synth::SynthArgs),
    /// Fit a background model from a frame stream.
    Train(commands::train::TrainArgs),
    /// Label every return in a stream against a trained model.
    Subtract(commands::subtract::SubtractArgs),
    /// Subtract, cluster and box foreground objects per frame.
    Detect(commands::detect::DetectArgs),
    /// Detect objects and associate them across frames.
    Track(commands::track::TrackArgs),
    /// Score predictions against ground truth at point, object or path level.
    Eval(commands::eval::EvalArgs),
    /// Time training and subtraction on a synthetic grid.
    Bench(commands::bench::BenchArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = if e.is::<ThresholdFailure>() {
                3
            } else if e.is::<UsageError>() {
                1
            } else {
                2
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| UsageError(format!("cannot size the worker pool: {e}")))?;
    }
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)
            .map_err(|e| UsageError(format!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    let log = StageLog::new(cli.json_log);
    match &cli.command {
        Command::Synth(args) => commands::synth::run(args, cli.seed, &log),
        Command::Train(args) => commands::train::run(args, &config, cli.seed, &log),
        Command::Subtract(args) => commands::subtract::run(args, &log),
        Command::Detect(args) => commands::detect::run(args, &config, &log),
        Command::Track(args) => commands::track::run(args, &config, &log),
        Command::Eval(args) => commands::eval::run(args, &config, &log),
        Command::Bench(args) => commands::bench::run(args, &config, cli.seed, &log),
    }
}
