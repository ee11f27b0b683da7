//! Frame-ordered point cloud files in two interchangeable formats.
//!
//! The CSV format is the human-diffable one: fixed column order
//! `frame_id,timestamp,beam_id,azimuth_deg,range_m,x,y,z,intensity,return_flag`,
//! absent members left empty, floats printed in shortest round-trip
//! decimal. The binary format is the fast one: a versioned 8-byte magic
//! header followed by length-prefixed little-endian frame blocks.
//!
//! Readers stream one frame at a time, so memory is bounded by the
//! largest frame rather than the file. Rows define frames in CSV, which
//! means a frame with zero points cannot survive a CSV round trip; the
//! binary format carries empty frames intact.

use std::fmt;
use std::fs::File;
use std::io;
use std::path::Path;

use curbscan_core::tensor::Frame;

mod bin;
mod csv_format;

pub use bin::{BinFrameReader, BinFrameWriter};
pub use csv_format::{CsvFrameReader, CsvFrameWriter, POINT_HEADER};

/// On-disk representation of a frame stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Binary,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Binary => "binary",
        }
    }
}

#[derive(Debug)]
#[non_exhaustive]
pub enum IoFormatError {
    Io(io::Error),
    /// A malformed row or record; `row` is 1-based and counts the header.
    Format { row: u64, reason: String },
    /// Frame ids must strictly ascend across the stream.
    NonMonotonicFrameId { previous: u64, found: u64 },
    /// Timestamps must strictly ascend across frames.
    NonMonotonicTimestamp { previous: f64, found: f64 },
    /// The binary header is missing, truncated, or of another version.
    BadMagic,
}

impl fmt::Display for IoFormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IoFormatError::Io(e) => write!(f, "io failure: {e}"),
            IoFormatError::Format { row, reason } => {
                write!(f, "malformed record at row {row}: {reason}")
            }
            IoFormatError::NonMonotonicFrameId { previous, found } => {
                write!(f, "frame id {found} does not ascend past {previous}")
            }
            IoFormatError::NonMonotonicTimestamp { previous, found } => {
                write!(f, "timestamp {found} does not ascend past {previous}")
            }
            IoFormatError::BadMagic => {
                write!(f, "not a recognized point cloud file (bad or foreign magic header)")
            }
        }
    }
}

impl std::error::Error for IoFormatError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            IoFormatError::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for IoFormatError {
    fn from(e: io::Error) -> Self {
        IoFormatError::Io(e)
    }
}

/// Streaming reader over either format.
pub enum FrameReader {
    Csv(CsvFrameReader<File>),
    Binary(BinFrameReader<io::BufReader<File>>),
}

impl FrameReader {
    pub fn open(path: &Path, format: Format) -> Result<Self, IoFormatError> {
        match format {
            Format::Csv => Ok(FrameReader::Csv(CsvFrameReader::new(File::open(path)?)?)),
            Format::Binary => {
                let file = io::BufReader::new(File::open(path)?);
                Ok(FrameReader::Binary(BinFrameReader::new(file)?))
            }
        }
    }
}

impl Iterator for FrameReader {
    type Item = Result<Frame, IoFormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            FrameReader::Csv(r) => r.next(),
            FrameReader::Binary(r) => r.next(),
        }
    }
}

/// Streaming writer over either format.
pub enum FrameWriter {
    Csv(CsvFrameWriter<File>),
    Binary(BinFrameWriter<io::BufWriter<File>>),
}

impl FrameWriter {
    pub fn create(path: &Path, format: Format) -> Result<Self, IoFormatError> {
        match format {
            Format::Csv => Ok(FrameWriter::Csv(CsvFrameWriter::new(File::create(path)?)?)),
            Format::Binary => {
                let file = io::BufWriter::new(File::create(path)?);
                Ok(FrameWriter::Binary(BinFrameWriter::new(file)?))
            }
        }
    }

    pub fn write(&mut self, frame: &Frame) -> Result<(), IoFormatError> {
        match self {
            FrameWriter::Csv(w) => w.write(frame),
            FrameWriter::Binary(w) => w.write(frame),
        }
    }

    pub fn finish(self) -> Result<(), IoFormatError> {
        match self {
            FrameWriter::Csv(w) => w.finish(),
            FrameWriter::Binary(w) => w.finish(),
        }
    }
}

/// Convenience: collect a whole file.
pub fn read_all_frames(path: &Path, format: Format) -> Result<Vec<Frame>, IoFormatError> {
    FrameReader::open(path, format)?.collect()
}

/// Convenience: write a whole slice.
pub fn write_all_frames(
    path: &Path,
    format: Format,
    frames: &[Frame],
) -> Result<(), IoFormatError> {
    let mut w = FrameWriter::create(path, format)?;
    for frame in frames {
        w.write(frame)?;
    }
    w.finish()
}

/// Shared stream-order bookkeeping for both readers and writers.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct StreamOrder {
    last: Option<(u64, f64)>,
}

impl StreamOrder {
    pub(crate) fn admit(&mut self, frame_id: u64, timestamp_s: f64) -> Result<(), IoFormatError> {
        if let Some((prev_id, prev_ts)) = self.last {
            if frame_id <= prev_id {
                return Err(IoFormatError::NonMonotonicFrameId {
                    previous: prev_id,
                    found: frame_id,
                });
            }
            if !(timestamp_s > prev_ts) {
                return Err(IoFormatError::NonMonotonicTimestamp {
                    previous: prev_ts,
                    found: timestamp_s,
                });
            }
        }
        self.last = Some((frame_id, timestamp_s));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use curbscan_core::linalg::Vec3;
    use curbscan_core::tensor::{PointRecord, Sample};
    use proptest::prelude::*;
    use std::io::Write as _;

    fn sample_frames() -> Vec<Frame> {
        vec![
            Frame {
                frame_id: 0,
                timestamp_s: 0.0,
                points: vec![
                    PointRecord {
                        frame_id: 0,
                        beam_id: 0,
                        azimuth_deg: 0.4,
                        sample: Sample::Spherical { range_m: 20.25, intensity: 101.5 },
                    },
                    PointRecord {
                        frame_id: 0,
                        beam_id: 1,
                        azimuth_deg: 0.4,
                        sample: Sample::NoReturn,
                    },
                    PointRecord {
                        frame_id: 0,
                        beam_id: 2,
                        azimuth_deg: 359.9,
                        sample: Sample::Cartesian {
                            xyz: Vec3::new(1.5, -2.25, 0.75),
                            intensity: 88.0,
                        },
                    },
                ],
            },
            Frame {
                frame_id: 3,
                timestamp_s: 0.3,
                points: vec![PointRecord {
                    frame_id: 3,
                    beam_id: 0,
                    azimuth_deg: 180.0,
                    sample: Sample::Spherical { range_m: 33.125, intensity: 12.0 },
                }],
            },
        ]
    }

    #[test]
    fn both_formats_round_trip_the_sample() {
        let dir = tempfile::tempdir().unwrap();
        let frames = sample_frames();
        for format in [Format::Csv, Format::Binary] {
            let path = dir.path().join(format!("frames.{}", format.name()));
            write_all_frames(&path, format, &frames).unwrap();
            let back = read_all_frames(&path, format).unwrap();
            assert_eq!(back, frames, "{} round trip", format.name());
        }
    }

    #[test]
    fn empty_csv_file_is_an_empty_stream() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        write_all_frames(&path, Format::Csv, &[]).unwrap();
        assert!(read_all_frames(&path, Format::Csv).unwrap().is_empty());
    }

    #[test]
    fn binary_preserves_empty_frames_and_csv_cannot() {
        let dir = tempfile::tempdir().unwrap();
        let frames = vec![
            Frame { frame_id: 0, timestamp_s: 0.0, points: vec![] },
            sample_frames()[1].clone(),
        ];
        let bin = dir.path().join("frames.bin");
        write_all_frames(&bin, Format::Binary, &frames).unwrap();
        assert_eq!(read_all_frames(&bin, Format::Binary).unwrap(), frames);

        let csv = dir.path().join("frames.csv");
        write_all_frames(&csv, Format::Csv, &frames).unwrap();
        let back = read_all_frames(&csv, Format::Csv).unwrap();
        assert_eq!(back.len(), 1, "the empty frame has no rows to come back from");
    }

    #[test]
    fn zero_azimuth_is_a_format_error_with_its_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut f = File::create(&path).unwrap();
        writeln!(f, "{}", POINT_HEADER.join(",")).unwrap();
        writeln!(f, "0,0.0,0,10.0,5.0,,,,40.0,Return").unwrap();
        writeln!(f, "0,0.0,1,0.0,5.0,,,,40.0,Return").unwrap();
        drop(f);
        let err = read_all_frames(&path, Format::Csv).unwrap_err();
        match err {
            IoFormatError::Format { row, ref reason } => {
                assert_eq!(row, 3);
                assert!(reason.contains("azimuth"), "reason: {reason}");
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn descending_frame_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut f = File::create(&path).unwrap();
        writeln!(f, "{}", POINT_HEADER.join(",")).unwrap();
        writeln!(f, "5,0.5,0,10.0,5.0,,,,40.0,Return").unwrap();
        writeln!(f, "4,0.6,0,10.0,5.0,,,,40.0,Return").unwrap();
        drop(f);
        let err = read_all_frames(&path, Format::Csv).unwrap_err();
        assert!(matches!(err, IoFormatError::NonMonotonicFrameId { previous: 5, found: 4 }));
    }

    #[test]
    fn foreign_binary_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("foreign.bin");
        std::fs::write(&path, b"NOTMAGIC plus trailing junk").unwrap();
        let err = read_all_frames(&path, Format::Binary).unwrap_err();
        assert!(matches!(err, IoFormatError::BadMagic));
    }

    #[test]
    fn truncated_binary_block_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frames.bin");
        write_all_frames(&path, Format::Binary, &sample_frames()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_all_frames(&path, Format::Binary).is_err());
    }

    prop_compose! {
        fn arb_sample()(kind in 0..3, range in 0.01f64..120.0, x in -60.0f64..60.0,
                        y in -60.0f64..60.0, z in -3.0f64..10.0, i in 0.0f64..255.0) -> Sample {
            match kind {
                0 => Sample::NoReturn,
                1 => Sample::Spherical { range_m: range, intensity: i },
                _ => {
                    let xyz = if x == 0.0 && y == 0.0 && z == 0.0 {
                        Vec3::new(1.0, 1.0, 1.0)
                    } else {
                        Vec3::new(x, y, z)
                    };
                    Sample::Cartesian { xyz, intensity: i }
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn random_streams_round_trip_exactly(
            frame_points in prop::collection::vec(
                prop::collection::vec((0u16..32, 0.0001f64..360.0, arb_sample()), 1..40),
                1..6,
            )
        ) {
            // Ids ascend with a gap, timestamps ascend, both by construction.
            let frames: Vec<Frame> = frame_points
                .into_iter()
                .enumerate()
                .map(|(i, pts)| {
                    let frame_id = i as u64 * 2;
                    Frame {
                        frame_id,
                        timestamp_s: i as f64 * 0.1,
                        points: pts
                            .into_iter()
                            .map(|(beam_id, azimuth_deg, sample)| PointRecord {
                                frame_id, beam_id, azimuth_deg, sample,
                            })
                            .collect(),
                    }
                })
                .collect();

            let dir = tempfile::tempdir().unwrap();
            for format in [Format::Csv, Format::Binary] {
                let path = dir.path().join(format!("s.{}", format.name()));
                write_all_frames(&path, format, &frames).unwrap();
                let back = read_all_frames(&path, format).unwrap();
                prop_assert_eq!(&back, &frames);
            }
        }
    }
}
