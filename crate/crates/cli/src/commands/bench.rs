//! `bench`: throughput report over an in-memory synthetic stream.
//!
//! Spins up a scene on a configurable grid, trains the chosen model,
//! then times subtraction over the whole stream. Numbers go to stdout
//! as `key=value` pairs; stage breakdowns go to stderr like every other
//! command. The numbers are observations; nothing here asserts.

use std::time::Instant;

use clap::Args;
use curbscan_core::synth::{bench_sensor, generate_frame, preset};
use curbscan_core::tensor::{Frame, SensorConfig};
use rayon::prelude::*;

use crate::commands::train::ModelType;
use crate::commands::UsageError;
use crate::engine::{classify_frame_par, StageLog, Trainer};
use crate::run_config::RunConfig;

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Which background model to time.
    #[arg(long, value_enum, default_value_t = ModelType::Adaptive)]
    pub model_type: ModelType,
    /// Beam count of the benchmark grid.
    #[arg(long, default_value_t = 32)]
    pub beams: u16,
    /// Azimuth bins of the benchmark grid.
    #[arg(long, default_value_t = 1800)]
    pub bins: u32,
    /// Frames to generate, train on and time.
    #[arg(long, default_value_t = 100)]
    pub frames: u32,
}

fn bench_grid(beams: u16, bins: u32) -> anyhow::Result<SensorConfig> {
    if beams == 32 && bins == 1800 {
        return Ok(bench_sensor());
    }
    if beams == 0 || bins == 0 {
        return Err(UsageError("beams and bins must be positive".into()).into());
    }
    let span = 50.0;
    let step = if beams > 1 { span / f64::from(beams - 1) } else { 0.0 };
    let elevations: Vec<f64> = (0..beams).map(|i| -25.0 + step * f64::from(i)).collect();
    let sensor = SensorConfig::new(elevations, 10.0, 360.0 / f64::from(bins), 120.0)
        .map_err(|e| UsageError(e.to_string()))?;
    if sensor.azimuth_bins != bins {
        return Err(UsageError(format!(
            "azimuth resolution for {bins} bins does not divide the circle evenly"
        ))
        .into());
    }
    Ok(sensor)
}

pub fn run(args: &BenchArgs, config: &RunConfig, seed: u64, log: &StageLog) -> anyhow::Result<()> {
    // A busy street preset keeps most cells occupied, so the timing
    // reflects full-grid work rather than empty sky.
    let mut scene = preset("urban-peak").expect("shipped preset");
    scene.sensor = bench_grid(args.beams, args.bins)?;
    scene.duration_frames = args.frames;
    scene.seed = seed;

    let frames: Vec<Frame> = log.stage("generate", || -> anyhow::Result<Vec<Frame>> {
        let truths = (0..u64::from(args.frames))
            .into_par_iter()
            .map(|id| generate_frame(&scene, id))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(truths.into_iter().map(|t| t.frame).collect())
    })?;
    let total_points: u64 = frames.iter().map(|f| f.points.len() as u64).sum();

    let rate = config.sampling_rate().map_err(|e| UsageError(e.to_string()))?;
    let bank = build_bank_for(&scene.sensor, args.model_type, config)?;
    let mut trainer = Trainer::new(
        scene.sensor.clone(),
        bank,
        config.fit_options(seed),
        rate,
        config.collision(),
    );

    let train_start = Instant::now();
    log.stage("collect", || -> anyhow::Result<()> {
        for f in &frames {
            trainer.observe(f)?;
        }
        Ok(())
    })?;
    log.stage("fit-intensity", || trainer.fit_intensity())?;
    log.stage("absorb", || -> anyhow::Result<()> {
        for f in &frames {
            trainer.absorb(f)?;
        }
        Ok(())
    })?;
    let train_s = train_start.elapsed().as_secs_f64();
    let model = trainer.finish()?.model;

    let subtract_start = Instant::now();
    log.stage("subtract", || -> anyhow::Result<()> {
        for f in &frames {
            let mask = classify_frame_par(&model, f)?;
            std::hint::black_box(&mask);
        }
        Ok(())
    })?;
    let subtract_s = subtract_start.elapsed().as_secs_f64();

    let fps = f64::from(args.frames) / subtract_s;
    let pps = total_points as f64 / subtract_s;
    println!(
        "bench model={} beams={} bins={} frames={} points={total_points}",
        match args.model_type {
            ModelType::Dpgmm => "dpgmm",
            ModelType::Adaptive => "adaptive",
            ModelType::Meanmax => "meanmax",
        },
        args.beams,
        args.bins,
        args.frames,
    );
    println!("train_s={train_s:.3}");
    println!("subtract_s={subtract_s:.3} fps={fps:.2} points_per_sec={pps:.0}");
    Ok(())
}

/// Like `train::build_bank` but on the benchmark grid instead of the
/// configured sensor.
fn build_bank_for(
    sensor: &SensorConfig,
    model_type: ModelType,
    config: &RunConfig,
) -> anyhow::Result<curbscan_core::model::CellBank> {
    use curbscan_core::model::CellBank;
    let bank = match model_type {
        ModelType::Dpgmm => {
            let classify = config.classify().map_err(|e| UsageError(e.to_string()))?;
            CellBank::dpgmm(sensor, config.dpgmm(), classify)
        }
        ModelType::Adaptive => CellBank::adaptive(sensor, config.adaptive()),
        ModelType::Meanmax => CellBank::mean_max(sensor, config.baseline()),
    }
    .map_err(|e| UsageError(e.to_string()))?;
    Ok(bank)
}
