//! `subtract`: label every point of a stream against a trained model.
//!
//! The model is static data here; nothing updates. Output is one CSV row
//! per input record, aligned by (frame_id, point_index), and a final
//! compression line on stdout reporting how much of the stream the
//! foreground kept.

use std::path::PathBuf;

use clap::Args;

use crate::commands::{label_name, MASK_HEADER};
use crate::engine::{classify_frame_par, StageLog};
use crate::io::{Format, FrameReader};
use crate::model_file::load_model;

#[derive(Debug, Args)]
pub struct SubtractArgs {
    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Frame stream to label.
    #[arg(long)]
    pub input: PathBuf,
    /// Mask CSV destination.
    #[arg(long)]
    pub output: PathBuf,
    /// Input stream format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

pub fn run(args: &SubtractArgs, log: &StageLog) -> anyhow::Result<()> {
    let (model, _meta) = log.stage("load-model", || load_model(&args.model))?;

    let mut total_returns = 0u64;
    let mut foreground_returns = 0u64;
    log.stage("subtract", || -> anyhow::Result<()> {
        let mut writer = crate::commands::csv_writer(&args.output)?;
        writer.write_record(MASK_HEADER)?;
        for frame in FrameReader::open(&args.input, args.format)? {
            let frame = frame?;
            let mask = classify_frame_par(&model, &frame)?;
            for (idx, label) in mask.labels.iter().enumerate() {
                writer.write_record([
                    frame.frame_id.to_string(),
                    idx.to_string(),
                    label_name(*label).to_string(),
                ])?;
            }
            total_returns += mask.returns as u64;
            foreground_returns += mask.foreground_returns as u64;
        }
        writer.flush()?;
        Ok(())
    })?;

    let ratio = if total_returns == 0 {
        0.0
    } else {
        foreground_returns as f64 / total_returns as f64
    };
    println!("compression_ratio={ratio:.6} foreground={foreground_returns} total={total_returns}");
    Ok(())
}
