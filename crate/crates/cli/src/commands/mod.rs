//! Subcommand implementations.
//!
//! Each submodule owns one subcommand: its clap argument struct and a
//! `run` function. Shared here: the two error markers the binary maps to
//! exit codes, and readers/writers for the row-oriented CSV files the
//! commands exchange (masks, detections, tracks, path counts).
//!
//! Exit code contract: bad invocations and bad configuration exit 1,
//! unreadable or malformed data files exit 2, and an eval threshold the
//! data genuinely fails exits 3.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use curbscan_core::detect::{Obb, TrackStatus};
use curbscan_core::evaluate::{PathSample, Trajectory};
use curbscan_core::linalg::Vec3;
use curbscan_core::model::Label;
use curbscan_core::synth::GtLabel;

pub mod bench;
pub mod detect;
pub mod eval;
pub mod subtract;
pub mod synth;
pub mod track;
pub mod train;

/// The invocation itself is wrong: unknown preset, invalid flag value,
/// bad configuration. Exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

/// The data failed a requested acceptance threshold. Exit code 3,
/// `eval` only.
#[derive(Debug)]
pub struct ThresholdFailure(pub String);

impl fmt::Display for ThresholdFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ThresholdFailure {}

// ---------------------------------------------------------------------
// Row files
// ---------------------------------------------------------------------

pub const MASK_HEADER: [&str; 3] = ["frame_id", "point_index", "label"];
pub const BOX_HEADER: [&str; 10] = [
    "frame_id", "object_id", "cx", "cy", "cz", "length", "width", "height", "yaw", "class",
];
pub const TRACK_HEADER: [&str; 10] = [
    "track_id", "frame_id", "timestamp", "x", "y", "z", "yaw", "speed", "class", "status",
];
pub const PATH_HEADER: [&str; 2] = ["direction", "count"];

pub(crate) fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path)
        .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

pub(crate) fn csv_reader(path: &Path) -> anyhow::Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path)
        .map_err(|e| anyhow::anyhow!("cannot open {}: {e}", path.display()))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file)))
}

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> anyhow::Result<()> {
    if got.len() != want.len() || got.iter().zip(want).any(|(g, w)| g != *w) {
        anyhow::bail!(
            "{}: expected header {}, found {}",
            path.display(),
            want.join(","),
            got.iter().collect::<Vec<_>>().join(",")
        );
    }
    Ok(())
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, name: &str, row: u64) -> anyhow::Result<&'a str> {
    rec.get(idx)
        .ok_or_else(|| anyhow::anyhow!("row {row}: missing {name}"))
}

fn parse_u64(rec: &csv::StringRecord, idx: usize, name: &str, row: u64) -> anyhow::Result<u64> {
    field(rec, idx, name, row)?
        .parse()
        .map_err(|_| anyhow::anyhow!("row {row}: bad {name}"))
}

fn parse_f64(rec: &csv::StringRecord, idx: usize, name: &str, row: u64) -> anyhow::Result<f64> {
    field(rec, idx, name, row)?
        .parse()
        .map_err(|_| anyhow::anyhow!("row {row}: bad {name}"))
}

/// One predicted or true point label row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskRow {
    pub frame_id: u64,
    pub point_index: u64,
    pub label: Label,
}

pub fn label_name(label: Label) -> &'static str {
    match label {
        Label::Background => "background",
        Label::Foreground => "foreground",
    }
}

/// Reads a mask file. Ground-truth files may carry the third label
/// `clutter`, which scores as background at the point level.
pub fn read_masks(path: &Path) -> anyhow::Result<Vec<MaskRow>> {
    let mut reader = csv_reader(path)?;
    check_header(path, reader.headers()?, &MASK_HEADER)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i as u64 + 2;
        let rec = rec.map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let label = match field(&rec, 2, "label", row)? {
            "background" => GtLabel::Background,
            "foreground" => GtLabel::Foreground,
            "clutter" => GtLabel::Clutter,
            other => anyhow::bail!("row {row}: unknown label {other:?}"),
        };
        rows.push(MaskRow {
            frame_id: parse_u64(&rec, 0, "frame_id", row)?,
            point_index: parse_u64(&rec, 1, "point_index", row)?,
            label: label.binary(),
        });
    }
    Ok(rows)
}

/// One detection or true-box row; `object_id` is stable for truth and a
/// per-frame index for detections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxRow {
    pub frame_id: u64,
    pub object_id: u64,
    pub obb: Obb,
    pub class: &'static str,
}

pub(crate) fn write_box_row<W: std::io::Write>(
    w: &mut csv::Writer<W>,
    frame_id: u64,
    object_id: u64,
    obb: &Obb,
    class: &str,
) -> anyhow::Result<()> {
    w.write_record([
        frame_id.to_string(),
        object_id.to_string(),
        format!("{}", obb.center.x),
        format!("{}", obb.center.y),
        format!("{}", obb.center.z),
        format!("{}", obb.length),
        format!("{}", obb.width),
        format!("{}", obb.height),
        format!("{}", obb.yaw),
        class.to_string(),
    ])?;
    Ok(())
}

/// Reads a detection or true-box file as per-frame box lists keyed by
/// ascending frame id. The class column is carried but not validated;
/// matching is geometric.
pub fn read_boxes(path: &Path) -> anyhow::Result<std::collections::BTreeMap<u64, Vec<Obb>>> {
    let mut reader = csv_reader(path)?;
    check_header(path, reader.headers()?, &BOX_HEADER)?;
    let mut frames: std::collections::BTreeMap<u64, Vec<Obb>> = std::collections::BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i as u64 + 2;
        let rec = rec.map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let frame_id = parse_u64(&rec, 0, "frame_id", row)?;
        let obb = Obb {
            center: Vec3::new(
                parse_f64(&rec, 2, "cx", row)?,
                parse_f64(&rec, 3, "cy", row)?,
                parse_f64(&rec, 4, "cz", row)?,
            ),
            length: parse_f64(&rec, 5, "length", row)?,
            width: parse_f64(&rec, 6, "width", row)?,
            height: parse_f64(&rec, 7, "height", row)?,
            yaw: parse_f64(&rec, 8, "yaw", row)?,
        };
        frames.entry(frame_id).or_default().push(obb);
    }
    Ok(frames)
}

/// Reads a track log back as per-track paths for movement counting.
/// Rows arrive frame-ordered, so each track's samples are already
/// time-sorted.
pub fn read_trajectories(path: &Path) -> anyhow::Result<Vec<Trajectory>> {
    let mut reader = csv_reader(path)?;
    check_header(path, reader.headers()?, &TRACK_HEADER)?;
    let mut tracks: Vec<Trajectory> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i as u64 + 2;
        let rec = rec.map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let track_id = parse_u64(&rec, 0, "track_id", row)?;
        let status = match field(&rec, 9, "status", row)? {
            "candidate" => TrackStatus::Candidate,
            "confirmed" => TrackStatus::Confirmed,
            "deleted" => TrackStatus::Deleted,
            other => anyhow::bail!("row {row}: unknown status {other:?}"),
        };
        let sample = PathSample {
            timestamp: parse_f64(&rec, 2, "timestamp", row)?,
            x: parse_f64(&rec, 3, "x", row)?,
            y: parse_f64(&rec, 4, "y", row)?,
            status,
        };
        match tracks.iter_mut().find(|t| t.track_id == track_id) {
            Some(t) => t.samples.push(sample),
            None => tracks.push(Trajectory { track_id, samples: vec![sample] }),
        }
    }
    Ok(tracks)
}

/// Reads a `direction,count` file into (inbound, outbound).
pub fn read_path_counts(path: &Path) -> anyhow::Result<(u64, u64)> {
    let mut reader = csv_reader(path)?;
    check_header(path, reader.headers()?, &PATH_HEADER)?;
    let (mut inbound, mut outbound) = (None, None);
    for (i, rec) in reader.records().enumerate() {
        let row = i as u64 + 2;
        let rec = rec.map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let count = parse_u64(&rec, 1, "count", row)?;
        match field(&rec, 0, "direction", row)? {
            "inbound" => inbound = Some(count),
            "outbound" => outbound = Some(count),
            other => anyhow::bail!("row {row}: unknown direction {other:?}"),
        }
    }
    match (inbound, outbound) {
        (Some(i), Some(o)) => Ok((i, o)),
        _ => anyhow::bail!("{}: needs one inbound and one outbound row", path.display()),
    }
}
