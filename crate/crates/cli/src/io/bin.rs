//! Binary frame format: 8-byte magic-plus-version header, then one
//! length-prefixed little-endian block per frame. The length prefix lets
//! a reader skip or bound-check frames without decoding them.

use std::io::{Read, Write};

use byteorder::{ReadBytesExt, WriteBytesExt, LE};
use curbscan_core::linalg::Vec3;
use curbscan_core::tensor::{Frame, PointRecord, Sample};

use super::{IoFormatError, StreamOrder};

/// Five identity bytes, two reserved, one format version.
pub const MAGIC: [u8; 8] = *b"CSPC\0\0\0\x01";

const TAG_NO_RETURN: u8 = 0;
const TAG_SPHERICAL: u8 = 1;
const TAG_CARTESIAN: u8 = 2;

/// Hard sanity bound; a desk-scale frame is a few hundred kilobytes.
const MAX_BLOCK_BYTES: u64 = 1 << 30;

fn bad(frame_index: u64, reason: impl Into<String>) -> IoFormatError {
    IoFormatError::Format { row: frame_index, reason: reason.into() }
}

pub struct BinFrameReader<R: Read> {
    source: R,
    /// 1-based index of the next frame block, reported in errors.
    block: u64,
    order: StreamOrder,
    done: bool,
}

impl<R: Read> BinFrameReader<R> {
    pub fn new(mut source: R) -> Result<Self, IoFormatError> {
        let mut magic = [0u8; 8];
        let mut filled = 0;
        while filled < magic.len() {
            match source.read(&mut magic[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(IoFormatError::Io(e)),
            }
        }
        if filled != magic.len() || magic != MAGIC {
            return Err(IoFormatError::BadMagic);
        }
        Ok(BinFrameReader { source, block: 0, order: StreamOrder::default(), done: false })
    }

    fn read_block(&mut self) -> Result<Option<Frame>, IoFormatError> {
        self.block += 1;
        let block = self.block;

        // A clean EOF before the length prefix ends the stream.
        let mut prefix = [0u8; 8];
        let mut filled = 0;
        while filled < prefix.len() {
            match self.source.read(&mut prefix[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(IoFormatError::Io(e)),
            }
        }
        if filled == 0 {
            return Ok(None);
        }
        if filled < prefix.len() {
            return Err(bad(block, "truncated block length"));
        }
        let len = u64::from_le_bytes(prefix);
        if len > MAX_BLOCK_BYTES {
            return Err(bad(block, format!("implausible block of {len} bytes")));
        }

        let mut body = vec![0u8; len as usize];
        self.source
            .read_exact(&mut body)
            .map_err(|_| bad(block, "truncated frame block"))?;
        let mut cur = &body[..];

        let frame_id = cur.read_u64::<LE>().map_err(|_| bad(block, "missing frame id"))?;
        let timestamp_s = cur.read_f64::<LE>().map_err(|_| bad(block, "missing timestamp"))?;
        let n_points = cur.read_u32::<LE>().map_err(|_| bad(block, "missing point count"))?;

        let mut points = Vec::with_capacity(n_points as usize);
        for _ in 0..n_points {
            let beam_id = cur.read_u16::<LE>().map_err(|_| bad(block, "truncated point"))?;
            let azimuth_deg =
                cur.read_f64::<LE>().map_err(|_| bad(block, "truncated point"))?;
            if !(azimuth_deg > 0.0 && azimuth_deg <= 360.0) {
                return Err(bad(block, format!("azimuth_deg {azimuth_deg} outside (0, 360]")));
            }
            let tag = cur.read_u8().map_err(|_| bad(block, "truncated point"))?;
            let sample = match tag {
                TAG_NO_RETURN => Sample::NoReturn,
                TAG_SPHERICAL => {
                    let range_m =
                        cur.read_f64::<LE>().map_err(|_| bad(block, "truncated point"))?;
                    let intensity =
                        cur.read_f64::<LE>().map_err(|_| bad(block, "truncated point"))?;
                    Sample::Spherical { range_m, intensity }
                }
                TAG_CARTESIAN => {
                    let x = cur.read_f64::<LE>().map_err(|_| bad(block, "truncated point"))?;
                    let y = cur.read_f64::<LE>().map_err(|_| bad(block, "truncated point"))?;
                    let z = cur.read_f64::<LE>().map_err(|_| bad(block, "truncated point"))?;
                    let intensity =
                        cur.read_f64::<LE>().map_err(|_| bad(block, "truncated point"))?;
                    Sample::Cartesian { xyz: Vec3::new(x, y, z), intensity }
                }
                other => return Err(bad(block, format!("unknown sample tag {other}"))),
            };
            points.push(PointRecord { frame_id, beam_id, azimuth_deg, sample });
        }
        if !cur.is_empty() {
            return Err(bad(block, format!("{} stray bytes after the last point", cur.len())));
        }

        self.order.admit(frame_id, timestamp_s)?;
        Ok(Some(Frame { frame_id, timestamp_s, points }))
    }
}

impl<R: Read> Iterator for BinFrameReader<R> {
    type Item = Result<Frame, IoFormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_block() {
            Ok(Some(frame)) => Some(Ok(frame)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub struct BinFrameWriter<W: Write> {
    sink: W,
    buffer: Vec<u8>,
    order: StreamOrder,
}

impl<W: Write> BinFrameWriter<W> {
    pub fn new(mut sink: W) -> Result<Self, IoFormatError> {
        sink.write_all(&MAGIC)?;
        Ok(BinFrameWriter { sink, buffer: Vec::new(), order: StreamOrder::default() })
    }

    pub fn write(&mut self, frame: &Frame) -> Result<(), IoFormatError> {
        self.order.admit(frame.frame_id, frame.timestamp_s)?;
        let buf = &mut self.buffer;
        buf.clear();
        buf.write_u64::<LE>(frame.frame_id).expect("vec write");
        buf.write_f64::<LE>(frame.timestamp_s).expect("vec write");
        buf.write_u32::<LE>(frame.points.len() as u32).expect("vec write");
        for p in &frame.points {
            buf.write_u16::<LE>(p.beam_id).expect("vec write");
            buf.write_f64::<LE>(p.azimuth_deg).expect("vec write");
            match p.sample {
                Sample::NoReturn => buf.write_u8(TAG_NO_RETURN).expect("vec write"),
                Sample::Spherical { range_m, intensity } => {
                    buf.write_u8(TAG_SPHERICAL).expect("vec write");
                    buf.write_f64::<LE>(range_m).expect("vec write");
                    buf.write_f64::<LE>(intensity).expect("vec write");
                }
                Sample::Cartesian { xyz, intensity } => {
                    buf.write_u8(TAG_CARTESIAN).expect("vec write");
                    buf.write_f64::<LE>(xyz.x).expect("vec write");
                    buf.write_f64::<LE>(xyz.y).expect("vec write");
                    buf.write_f64::<LE>(xyz.z).expect("vec write");
                    buf.write_f64::<LE>(intensity).expect("vec write");
                }
            }
        }
        self.sink.write_u64::<LE>(self.buffer.len() as u64)?;
        self.sink.write_all(&self.buffer)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), IoFormatError> {
        self.sink.flush()?;
        Ok(())
    }
}
