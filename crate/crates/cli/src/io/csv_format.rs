//! CSV frame format: one row per point, consecutive rows with equal
//! `frame_id` form a frame, and every row of a frame repeats the frame's
//! timestamp.

use std::io::{Read, Write};

use curbscan_core::linalg::Vec3;
use curbscan_core::tensor::{Frame, PointRecord, Sample};

use super::{IoFormatError, StreamOrder};

pub const POINT_HEADER: [&str; 10] = [
    "frame_id",
    "timestamp",
    "beam_id",
    "azimuth_deg",
    "range_m",
    "x",
    "y",
    "z",
    "intensity",
    "return_flag",
];

const RETURN_FLAG: &str = "Return";
const NO_RETURN_FLAG: &str = "NoReturn";

fn bad(row: u64, reason: impl Into<String>) -> IoFormatError {
    IoFormatError::Format { row, reason: reason.into() }
}

/// Streaming CSV reader; yields frames grouped from consecutive rows.
pub struct CsvFrameReader<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    /// First row of the next frame, already parsed.
    pending: Option<(u64, f64, PointRecord)>,
    /// 1-based row counter including the header row.
    row: u64,
    order: StreamOrder,
    done: bool,
}

impl<R: Read> CsvFrameReader<R> {
    pub fn new(source: R) -> Result<Self, IoFormatError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
        // An empty file has no header and is a legal empty stream; any
        // header present must be the exact published one.
        let done = match reader.headers() {
            Ok(h) if h.is_empty() || (h.len() == 1 && h[0].is_empty()) => true,
            Ok(h) => {
                let expect: Vec<&str> = POINT_HEADER.to_vec();
                let got: Vec<&str> = h.iter().collect();
                if got != expect {
                    return Err(bad(1, format!("unexpected header: {}", got.join(","))));
                }
                false
            }
            Err(_) => true,
        };
        Ok(CsvFrameReader {
            records: reader.into_records(),
            pending: None,
            row: 1,
            order: StreamOrder::default(),
            done,
        })
    }

    fn parse_row(&mut self, rec: &csv::StringRecord) -> Result<(u64, f64, PointRecord), IoFormatError> {
        let row = self.row;
        if rec.len() != POINT_HEADER.len() {
            return Err(bad(row, format!("{} fields, expected {}", rec.len(), POINT_HEADER.len())));
        }
        let req = |i: usize, name: &str| -> Result<&str, IoFormatError> {
            let v = &rec[i];
            if v.is_empty() {
                Err(bad(row, format!("missing {name}")))
            } else {
                Ok(v)
            }
        };
        let opt = |i: usize| -> Option<&str> {
            let v = &rec[i];
            if v.is_empty() {
                None
            } else {
                Some(v)
            }
        };
        let f64_of = |v: &str, name: &str| -> Result<f64, IoFormatError> {
            v.parse::<f64>().map_err(|_| bad(row, format!("unparsable {name}: {v}")))
        };

        let frame_id: u64 = req(0, "frame_id")?
            .parse()
            .map_err(|_| bad(row, format!("unparsable frame_id: {}", &rec[0])))?;
        let timestamp = f64_of(req(1, "timestamp")?, "timestamp")?;
        let beam_id: u16 = req(2, "beam_id")?
            .parse()
            .map_err(|_| bad(row, format!("unparsable beam_id: {}", &rec[2])))?;
        let azimuth_deg = f64_of(req(3, "azimuth_deg")?, "azimuth_deg")?;
        if !(azimuth_deg > 0.0 && azimuth_deg <= 360.0) {
            return Err(bad(row, format!("azimuth_deg {azimuth_deg} outside (0, 360]")));
        }

        let range = opt(4).map(|v| f64_of(v, "range_m")).transpose()?;
        let x = opt(5).map(|v| f64_of(v, "x")).transpose()?;
        let y = opt(6).map(|v| f64_of(v, "y")).transpose()?;
        let z = opt(7).map(|v| f64_of(v, "z")).transpose()?;
        let intensity = opt(8).map(|v| f64_of(v, "intensity")).transpose()?;
        let flag = req(9, "return_flag")?;

        let sample = match flag {
            NO_RETURN_FLAG => {
                if range.is_some() || x.is_some() || y.is_some() || z.is_some()
                    || intensity.is_some()
                {
                    return Err(bad(row, "no-return rows must leave measurements empty"));
                }
                Sample::NoReturn
            }
            RETURN_FLAG => {
                let intensity =
                    intensity.ok_or_else(|| bad(row, "return rows need an intensity"))?;
                match (range, x, y, z) {
                    (Some(r), None, None, None) => {
                        if !(r >= 0.0) {
                            return Err(bad(row, format!("negative range_m {r}")));
                        }
                        Sample::Spherical { range_m: r, intensity }
                    }
                    (None, Some(x), Some(y), Some(z)) => {
                        Sample::Cartesian { xyz: Vec3::new(x, y, z), intensity }
                    }
                    _ => {
                        return Err(bad(
                            row,
                            "return rows carry exactly one of range_m or x,y,z",
                        ))
                    }
                }
            }
            other => return Err(bad(row, format!("unknown return_flag: {other}"))),
        };

        Ok((frame_id, timestamp, PointRecord { frame_id, beam_id, azimuth_deg, sample }))
    }

    fn next_parsed(&mut self) -> Result<Option<(u64, f64, PointRecord)>, IoFormatError> {
        match self.records.next() {
            None => Ok(None),
            Some(Err(e)) => {
                self.row += 1;
                Err(bad(self.row, e.to_string()))
            }
            Some(Ok(rec)) => {
                self.row += 1;
                self.parse_row(&rec).map(Some)
            }
        }
    }
}

impl<R: Read> Iterator for CsvFrameReader<R> {
    type Item = Result<Frame, IoFormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let first = match self.pending.take() {
            Some(p) => p,
            None => match self.next_parsed() {
                Ok(Some(p)) => p,
                Ok(None) => {
                    self.done = true;
                    return None;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            },
        };

        let (frame_id, timestamp_s, rec) = first;
        if let Err(e) = self.order.admit(frame_id, timestamp_s) {
            self.done = true;
            return Some(Err(e));
        }
        let mut points = vec![rec];

        loop {
            match self.next_parsed() {
                Ok(None) => break,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
                Ok(Some((id, ts, rec))) => {
                    if id != frame_id {
                        self.pending = Some((id, ts, rec));
                        break;
                    }
                    if ts != timestamp_s {
                        self.done = true;
                        return Some(Err(bad(
                            self.row,
                            format!("timestamp {ts} differs within frame {frame_id}"),
                        )));
                    }
                    points.push(rec);
                }
            }
        }

        Some(Ok(Frame { frame_id, timestamp_s, points }))
    }
}

/// Streaming CSV writer. Floats are printed in Rust's shortest
/// round-trip decimal form, so a write/read cycle is bit exact.
pub struct CsvFrameWriter<W: Write> {
    out: csv::Writer<W>,
    wrote_header: bool,
    order: StreamOrder,
}

impl<W: Write> CsvFrameWriter<W> {
    pub fn new(sink: W) -> Result<Self, IoFormatError> {
        Ok(CsvFrameWriter {
            out: csv::WriterBuilder::new().has_headers(false).from_writer(sink),
            wrote_header: false,
            order: StreamOrder::default(),
        })
    }

    pub fn write(&mut self, frame: &Frame) -> Result<(), IoFormatError> {
        self.order.admit(frame.frame_id, frame.timestamp_s)?;
        if !self.wrote_header {
            self.out.write_record(POINT_HEADER).map_err(csv_io)?;
            self.wrote_header = true;
        }
        for p in &frame.points {
            let empty = String::new();
            let (range, x, y, z, intensity, flag) = match p.sample {
                Sample::NoReturn => {
                    (empty.clone(), empty.clone(), empty.clone(), empty.clone(), empty, NO_RETURN_FLAG)
                }
                Sample::Spherical { range_m, intensity } => (
                    format!("{range_m}"),
                    empty.clone(),
                    empty.clone(),
                    empty.clone(),
                    format!("{intensity}"),
                    RETURN_FLAG,
                ),
                Sample::Cartesian { xyz, intensity } => (
                    empty,
                    format!("{}", xyz.x),
                    format!("{}", xyz.y),
                    format!("{}", xyz.z),
                    format!("{intensity}"),
                    RETURN_FLAG,
                ),
            };
            self.out
                .write_record([
                    format!("{}", frame.frame_id).as_str(),
                    format!("{}", frame.timestamp_s).as_str(),
                    format!("{}", p.beam_id).as_str(),
                    format!("{}", p.azimuth_deg).as_str(),
                    range.as_str(),
                    x.as_str(),
                    y.as_str(),
                    z.as_str(),
                    intensity.as_str(),
                    flag,
                ])
                .map_err(csv_io)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), IoFormatError> {
        // An empty stream still gets its header, so readers can tell an
        // empty capture from a foreign file.
        if !self.wrote_header {
            self.out.write_record(POINT_HEADER).map_err(csv_io)?;
        }
        self.out.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> IoFormatError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IoFormatError::Io(io),
        other => IoFormatError::Format { row: 0, reason: format!("csv write failed: {other:?}") },
    }
}
