//! `synth`: generate a labeled scene from a preset.
//!
//! Writes the frame stream to `--output` and three sidecar files next to
//! it: `<stem>.gt.csv` with per-point labels, `<stem>.boxes.csv` with
//! per-frame true boxes, and `<stem>.paths.csv` with true screenline
//! crossing counts.

use std::path::{Path, PathBuf};

use clap::Args;
use curbscan_core::synth::{generate_scene, preset, PRESET_NAMES};

use crate::commands::{write_box_row, UsageError, BOX_HEADER, MASK_HEADER, PATH_HEADER};
use crate::engine::StageLog;
use crate::io::{Format, FrameWriter};

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene preset: clean-static, snow-low-volume or urban-peak.
    #[arg(long)]
    pub preset: String,
    /// Frame stream destination.
    #[arg(long)]
    pub output: PathBuf,
    /// Stream format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Override the preset's frame count.
    #[arg(long)]
    pub frames: Option<u32>,
}

pub fn sidecar(output: &Path, kind: &str) -> PathBuf {
    output.with_extension(format!("{kind}.csv"))
}

pub fn run(args: &SynthArgs, seed: u64, log: &StageLog) -> anyhow::Result<()> {
    let mut scene = preset(&args.preset).ok_or_else(|| {
        UsageError(format!(
            "unknown preset {:?}; choose one of {}",
            args.preset,
            PRESET_NAMES.join(", ")
        ))
    })?;
    scene.seed = seed;
    if let Some(frames) = args.frames {
        scene.duration_frames = frames;
    }

    let (frames, truth) = log.stage("generate", || generate_scene(&scene))?;

    log.stage("write-frames", || -> anyhow::Result<()> {
        let mut writer = FrameWriter::create(&args.output, args.format)?;
        for frame in &frames {
            writer.write(frame)?;
        }
        writer.finish()?;
        Ok(())
    })?;

    log.stage("write-truth", || -> anyhow::Result<()> {
        let mut gt = crate::commands::csv_writer(&sidecar(&args.output, "gt"))?;
        gt.write_record(MASK_HEADER)?;
        for (frame, labels) in frames.iter().zip(&truth.labels) {
            for (idx, label) in labels.iter().enumerate() {
                gt.write_record([
                    frame.frame_id.to_string(),
                    idx.to_string(),
                    label.name().to_string(),
                ])?;
            }
        }
        gt.flush()?;

        let mut boxes = crate::commands::csv_writer(&sidecar(&args.output, "boxes"))?;
        boxes.write_record(BOX_HEADER)?;
        for (frame, frame_boxes) in frames.iter().zip(&truth.boxes) {
            for b in frame_boxes {
                write_box_row(&mut boxes, frame.frame_id, b.object_id, &b.obb, b.class.name())?;
            }
        }
        boxes.flush()?;

        let mut paths = crate::commands::csv_writer(&sidecar(&args.output, "paths"))?;
        paths.write_record(PATH_HEADER)?;
        paths.write_record(["inbound".to_string(), truth.inbound.to_string()])?;
        paths.write_record(["outbound".to_string(), truth.outbound.to_string()])?;
        paths.flush()?;
        Ok(())
    })?;

    Ok(())
}
