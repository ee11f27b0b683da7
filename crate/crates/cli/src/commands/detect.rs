//! `detect`: run frames through the full object pipeline and emit one
//! box row per detection. Object ids restart per frame; identity across
//! frames is `track`'s job.

use std::path::PathBuf;

use clap::Args;

use crate::commands::{write_box_row, UsageError, BOX_HEADER};
use crate::engine::{detect_frame, DetectParams, StageLog};
use crate::io::{Format, FrameReader};
use crate::model_file::load_model;
use crate::run_config::RunConfig;

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Frame stream to scan.
    #[arg(long)]
    pub input: PathBuf,
    /// Detections CSV destination.
    #[arg(long)]
    pub output: PathBuf,
    /// Input stream format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

pub fn detect_params(config: &RunConfig) -> anyhow::Result<DetectParams> {
    Ok(DetectParams {
        fences: config.geofences().map_err(|e| UsageError(e.to_string()))?,
        lof_k: config.lof.k,
        lof_threshold: config.lof.threshold,
        cluster: config.cluster(),
        rules: config.class_rules(),
    })
}

pub fn run(args: &DetectArgs, config: &RunConfig, log: &StageLog) -> anyhow::Result<()> {
    let (model, _meta) = log.stage("load-model", || load_model(&args.model))?;
    let params = detect_params(config)?;

    log.stage("detect", || -> anyhow::Result<()> {
        let mut writer = crate::commands::csv_writer(&args.output)?;
        writer.write_record(BOX_HEADER)?;
        for frame in FrameReader::open(&args.input, args.format)? {
            let frame = frame?;
            let objects = detect_frame(&model, &frame, &params)?;
            for (i, det) in objects.detections.iter().enumerate() {
                write_box_row(
                    &mut writer,
                    objects.frame_id,
                    i as u64,
                    &det.obb,
                    det.class.name(),
                )?;
            }
        }
        writer.flush()?;
        Ok(())
    })
}
