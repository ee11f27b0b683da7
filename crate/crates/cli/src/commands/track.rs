//! `track`: the detect pipeline plus frame-to-frame association.
//! Emits one row per live track per frame; a track's rows over time are
//! its trajectory.

use std::path::PathBuf;

use clap::Args;

use crate::commands::{detect::detect_params, UsageError, TRACK_HEADER};
use crate::engine::{detect_frame, StageLog, TrackRun};
use crate::io::{Format, FrameReader};
use crate::model_file::load_model;
use crate::run_config::RunConfig;

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Frame stream to follow.
    #[arg(long)]
    pub input: PathBuf,
    /// Track log CSV destination.
    #[arg(long)]
    pub output: PathBuf,
    /// Input stream format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

pub fn run(args: &TrackArgs, config: &RunConfig, log: &StageLog) -> anyhow::Result<()> {
    let (model, _meta) = log.stage("load-model", || load_model(&args.model))?;
    let params = detect_params(config)?;
    let nominal_dt = 1.0 / model.sensor.rotation_hz;
    let mut run = TrackRun::new(config.tracker(), nominal_dt)
        .map_err(|e| UsageError(e.to_string()))?;

    log.stage("track", || -> anyhow::Result<()> {
        for frame in FrameReader::open(&args.input, args.format)? {
            let frame = frame?;
            let objects = detect_frame(&model, &frame, &params)?;
            run.step(&objects)?;
        }
        Ok(())
    })?;

    log.stage("write-tracks", || -> anyhow::Result<()> {
        let mut writer = crate::commands::csv_writer(&args.output)?;
        writer.write_record(TRACK_HEADER)?;
        for row in run.rows() {
            writer.write_record([
                row.track_id.to_string(),
                row.frame_id.to_string(),
                format!("{}", row.timestamp_s),
                format!("{}", row.position.x),
                format!("{}", row.position.y),
                format!("{}", row.position.z),
                format!("{}", row.yaw),
                format!("{}", row.speed),
                row.class.to_string(),
                row.status.name().to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    })
}
