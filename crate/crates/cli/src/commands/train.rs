//! `train`: two passes over a frame stream, then a model file.
//!
//! Pass one pools per-cell intensities and fits their mixtures; pass two
//! replays the stream so every observation is absorbed with its
//! intensity-derived weight. The input is read twice rather than held
//! in memory, so training memory scales with the grid, not the stream.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use curbscan_core::model::CellBank;

use crate::commands::UsageError;
use crate::engine::{StageLog, Trainer};
use crate::io::{Format, FrameReader};
use crate::model_file::save_model;
use crate::run_config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelType {
    Dpgmm,
    Adaptive,
    /// Range-band reference model, kept for side-by-side comparisons.
    Meanmax,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training frame stream.
    #[arg(long)]
    pub input: PathBuf,
    /// Model file destination.
    #[arg(long)]
    pub output: PathBuf,
    /// Input stream format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Which background model to fit.
    #[arg(long, value_enum, default_value_t = ModelType::Dpgmm)]
    pub model_type: ModelType,
    /// Override the configured intensity weighting rate (0, 2, 4 or 8).
    #[arg(long)]
    pub sampling_rate: Option<u32>,
    /// Classify with evidence-normalized posteriors.
    #[arg(long)]
    pub bayes_normalized: bool,
}

/// Builds the empty cell bank `train` will fill, honoring the
/// command-line overrides. Shared with `bench`.
pub fn build_bank(
    args_model: ModelType,
    bayes_normalized: bool,
    config: &RunConfig,
) -> anyhow::Result<CellBank> {
    let sensor = config.sensor().map_err(|e| UsageError(e.to_string()))?;
    let bank = match args_model {
        ModelType::Dpgmm => {
            let mut classify = config.classify().map_err(|e| UsageError(e.to_string()))?;
            if bayes_normalized {
                classify.normalized = true;
            }
            CellBank::dpgmm(&sensor, config.dpgmm(), classify)
        }
        ModelType::Adaptive => CellBank::adaptive(&sensor, config.adaptive()),
        ModelType::Meanmax => CellBank::mean_max(&sensor, config.baseline()),
    }
    .map_err(|e| UsageError(e.to_string()))?;
    Ok(bank)
}

pub fn run(args: &TrainArgs, config: &RunConfig, seed: u64, log: &StageLog) -> anyhow::Result<()> {
    let sensor = config.sensor().map_err(|e| UsageError(e.to_string()))?;
    let rate = match args.sampling_rate {
        Some(r) => curbscan_core::intensity::SamplingRate::new(r)
            .map_err(|e| UsageError(e.to_string()))?,
        None => config.sampling_rate().map_err(|e| UsageError(e.to_string()))?,
    };
    let bank = build_bank(args.model_type, args.bayes_normalized, config)?;
    let mut trainer = Trainer::new(
        sensor,
        bank,
        config.fit_options(seed),
        rate,
        config.collision(),
    );

    log.stage("collect", || -> anyhow::Result<()> {
        for frame in FrameReader::open(&args.input, args.format)? {
            trainer.observe(&frame?)?;
        }
        Ok(())
    })?;

    log.stage("fit-intensity", || trainer.fit_intensity())?;

    log.stage("absorb", || -> anyhow::Result<()> {
        for frame in FrameReader::open(&args.input, args.format)? {
            trainer.absorb(&frame?)?;
        }
        Ok(())
    })?;

    let trained = trainer.finish()?;
    log.stage("save", || {
        save_model(
            &args.output,
            &trained.model,
            (trained.first_timestamp_s, trained.last_timestamp_s),
        )
    })?;
    Ok(())
}
