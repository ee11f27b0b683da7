//! Background model persistence: one container file holding the sensor
//! geometry, the learner configuration, per-cell intensity mixtures, and
//! per-cell learner state.
//!
//! Layout (all integers and floats little-endian): an 8-byte magic whose
//! last byte is the format version, the sensor block, the model tag, the
//! training metadata, a configuration blob hashed into the metadata, then
//! every cell in row-major beam/bin order. Loading rejects any other
//! version; a load/save cycle reproduces the input byte for byte because
//! nothing is renormalized on either path.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{ReadBytesExt, WriteBytesExt, LE};
use curbscan_core::adaptive::{AdaptiveCell, AdaptiveComponent, AdaptiveConfig};
use curbscan_core::baseline::{MeanMaxCell, MeanMaxConfig};
use curbscan_core::dpgmm::{ClassifyParams, DpgmmCell, DpgmmConfig, RawTable};
use curbscan_core::intensity::{IntensityComponent, IntensityGmm, SamplingRate};
use curbscan_core::linalg::{Mat3, Vec3};
use curbscan_core::model::{BackgroundModel, CellBank, ModelError, ModelKind};
use curbscan_core::tensor::{Grid, SensorConfig};

/// Seven identity bytes then the format version.
pub const MAGIC: [u8; 8] = *b"CSBM\0\0\0\x01";

const TAG_DPGMM: u8 = 0;
const TAG_ADAPTIVE: u8 = 1;
const TAG_MEANMAX: u8 = 2;

/// Training provenance stored alongside the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMeta {
    pub frames: u64,
    /// Timestamp of the first and last training frame; both zero when
    /// the model never saw a frame.
    pub first_timestamp_s: f64,
    pub last_timestamp_s: f64,
    /// FNV-1a hash of the serialized configuration blob.
    pub config_hash: u64,
}

#[derive(Debug)]
#[non_exhaustive]
pub enum ModelFileError {
    Io(io::Error),
    /// Missing or foreign magic, or a different format version.
    BadMagic,
    /// Structurally broken content.
    Corrupt(String),
    /// The stored state fails a module's own validity rules.
    Model(ModelError),
}

impl fmt::Display for ModelFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelFileError::Io(e) => write!(f, "io failure: {e}"),
            ModelFileError::BadMagic => {
                write!(f, "not a background model file of this version")
            }
            ModelFileError::Corrupt(why) => write!(f, "corrupt model file: {why}"),
            ModelFileError::Model(e) => write!(f, "stored model state rejected: {e}"),
        }
    }
}

impl std::error::Error for ModelFileError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ModelFileError::Io(e) => Some(e),
            ModelFileError::Model(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for ModelFileError {
    fn from(e: io::Error) -> Self {
        ModelFileError::Io(e)
    }
}

impl From<ModelError> for ModelFileError {
    fn from(e: ModelError) -> Self {
        ModelFileError::Model(e)
    }
}

fn corrupt(why: impl Into<String>) -> ModelFileError {
    ModelFileError::Corrupt(why.into())
}

/// FNV-1a over a byte slice; stable fingerprint for config blobs.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn save_model(path: &Path, model: &BackgroundModel, meta_times: (f64, f64)) -> Result<ModelMeta, ModelFileError> {
    let mut out = BufWriter::new(File::create(path)?);
    let meta = write_model(&mut out, model, meta_times)?;
    out.flush()?;
    Ok(meta)
}

pub fn load_model(path: &Path) -> Result<(BackgroundModel, ModelMeta), ModelFileError> {
    let mut input = BufReader::new(File::open(path)?);
    read_model(&mut input)
}

pub fn write_model<W: Write>(
    out: &mut W,
    model: &BackgroundModel,
    (first_ts, last_ts): (f64, f64),
) -> Result<ModelMeta, ModelFileError> {
    out.write_all(&MAGIC)?;
    write_sensor(out, &model.sensor)?;

    let tag = match model.kind() {
        ModelKind::Dpgmm => TAG_DPGMM,
        ModelKind::Adaptive => TAG_ADAPTIVE,
        ModelKind::MeanMax => TAG_MEANMAX,
    };
    out.write_u8(tag)?;
    out.write_u8(model.sampling_rate.value())?;

    let config_blob = encode_config(&model.bank);
    let meta = ModelMeta {
        frames: model.frames_trained,
        first_timestamp_s: first_ts,
        last_timestamp_s: last_ts,
        config_hash: fnv1a(&config_blob),
    };
    out.write_u64::<LE>(meta.frames)?;
    out.write_f64::<LE>(meta.first_timestamp_s)?;
    out.write_f64::<LE>(meta.last_timestamp_s)?;
    out.write_u64::<LE>(meta.config_hash)?;
    out.write_u32::<LE>(config_blob.len() as u32)?;
    out.write_all(&config_blob)?;

    for (i, gmm) in model.intensity.cells().iter().enumerate() {
        write_intensity(out, gmm.as_ref())?;
        match &model.bank {
            CellBank::Dpgmm { cells, .. } => write_dpgmm_cell(out, &cells.cells()[i])?,
            CellBank::Adaptive { cells, .. } => write_adaptive_cell(out, &cells.cells()[i])?,
            CellBank::MeanMax { cells, .. } => write_meanmax_cell(out, &cells.cells()[i])?,
        }
    }
    Ok(meta)
}

pub fn read_model<R: Read>(input: &mut R) -> Result<(BackgroundModel, ModelMeta), ModelFileError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| ModelFileError::BadMagic)?;
    if magic != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    let sensor = read_sensor(input)?;

    let tag = input.read_u8()?;
    let sampling_rate = SamplingRate::new(input.read_u8()? as u32)
        .map_err(|e| corrupt(e.to_string()))?;

    let meta = ModelMeta {
        frames: input.read_u64::<LE>()?,
        first_timestamp_s: input.read_f64::<LE>()?,
        last_timestamp_s: input.read_f64::<LE>()?,
        config_hash: input.read_u64::<LE>()?,
    };
    let blob_len = input.read_u32::<LE>()? as usize;
    if blob_len > 1 << 20 {
        return Err(corrupt("implausible config blob size"));
    }
    let mut blob = vec![0u8; blob_len];
    input.read_exact(&mut blob)?;
    if fnv1a(&blob) != meta.config_hash {
        return Err(corrupt("config hash mismatch"));
    }

    let cell_count = sensor.cell_count();
    let mut intensity: Vec<Option<IntensityGmm>> = Vec::with_capacity(cell_count);
    let bank = match tag {
        TAG_DPGMM => {
            let (cfg, classify) = decode_dpgmm_config(&blob)?;
            let mut cells = Vec::with_capacity(cell_count);
            for _ in 0..cell_count {
                intensity.push(read_intensity(input)?);
                cells.push(read_dpgmm_cell(input, &cfg)?);
            }
            let mut it = cells.into_iter();
            CellBank::Dpgmm {
                cfg,
                classify,
                cells: Grid::from_fn(sensor.beams, sensor.azimuth_bins, || {
                    it.next().expect("cell per slot")
                }),
            }
        }
        TAG_ADAPTIVE => {
            let cfg = decode_adaptive_config(&blob)?;
            let mut cells = Vec::with_capacity(cell_count);
            for _ in 0..cell_count {
                intensity.push(read_intensity(input)?);
                cells.push(read_adaptive_cell(input)?);
            }
            let mut it = cells.into_iter();
            CellBank::Adaptive {
                cfg,
                cells: Grid::from_fn(sensor.beams, sensor.azimuth_bins, || {
                    it.next().expect("cell per slot")
                }),
            }
        }
        TAG_MEANMAX => {
            let cfg = decode_meanmax_config(&blob)?;
            let mut cells = Vec::with_capacity(cell_count);
            for _ in 0..cell_count {
                intensity.push(read_intensity(input)?);
                cells.push(read_meanmax_cell(input)?);
            }
            let mut it = cells.into_iter();
            CellBank::MeanMax {
                cfg,
                cells: Grid::from_fn(sensor.beams, sensor.azimuth_bins, || {
                    it.next().expect("cell per slot")
                }),
            }
        }
        other => return Err(corrupt(format!("unknown model tag {other}"))),
    };

    // Exactly at end of file?
    let mut probe = [0u8; 1];
    match input.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => return Err(corrupt("trailing bytes after the last cell")),
        Err(e) => return Err(ModelFileError::Io(e)),
    }

    let mut it = intensity.into_iter();
    let intensity_grid = Grid::from_fn(sensor.beams, sensor.azimuth_bins, || {
        it.next().expect("mixture slot per cell")
    });
    let mut model = BackgroundModel::new(sensor, bank, intensity_grid, sampling_rate)?;
    model.frames_trained = meta.frames;
    Ok((model, meta))
}

// ---------------------------------------------------------------------
// Sensor block
// ---------------------------------------------------------------------

fn write_sensor<W: Write>(out: &mut W, s: &SensorConfig) -> Result<(), ModelFileError> {
    out.write_u16::<LE>(s.beams)?;
    out.write_f64::<LE>(s.rotation_hz)?;
    out.write_f64::<LE>(s.azimuth_resolution_deg)?;
    out.write_u32::<LE>(s.azimuth_bins)?;
    out.write_f64::<LE>(s.max_range_m)?;
    out.write_f64::<LE>(s.max_intensity)?;
    for &e in &s.elevation_deg {
        out.write_f64::<LE>(e)?;
    }
    Ok(())
}

fn read_sensor<R: Read>(input: &mut R) -> Result<SensorConfig, ModelFileError> {
    let beams = input.read_u16::<LE>()?;
    let rotation_hz = input.read_f64::<LE>()?;
    let azimuth_resolution_deg = input.read_f64::<LE>()?;
    let azimuth_bins = input.read_u32::<LE>()?;
    let max_range_m = input.read_f64::<LE>()?;
    let max_intensity = input.read_f64::<LE>()?;
    let mut elevation_deg = Vec::with_capacity(beams as usize);
    for _ in 0..beams {
        elevation_deg.push(input.read_f64::<LE>()?);
    }
    let mut sensor = SensorConfig::new(
        elevation_deg,
        rotation_hz,
        azimuth_resolution_deg,
        max_range_m,
    )
    .map_err(|e| corrupt(e.to_string()))?;
    if sensor.azimuth_bins != azimuth_bins {
        return Err(corrupt("bin count disagrees with resolution"));
    }
    if !(max_intensity > 0.0) || !max_intensity.is_finite() {
        return Err(corrupt("bad intensity scale"));
    }
    sensor.max_intensity = max_intensity;
    Ok(sensor)
}

// ---------------------------------------------------------------------
// Config blobs
// ---------------------------------------------------------------------

fn encode_config(bank: &CellBank) -> Vec<u8> {
    let mut b = Vec::new();
    match bank {
        CellBank::Dpgmm { cfg, classify, .. } => {
            b.write_f64::<LE>(cfg.alpha).expect("vec write");
            b.write_f64::<LE>(cfg.kappa0).expect("vec write");
            b.write_f64::<LE>(cfg.nu0).expect("vec write");
            write_mat3(&mut b, &cfg.psi0).expect("vec write");
            b.write_u32::<LE>(cfg.max_tables as u32).expect("vec write");
            b.write_f64::<LE>(cfg.mu0_bootstrap_weight).expect("vec write");
            b.write_u8(cfg.retain_history as u8).expect("vec write");
            b.write_f64::<LE>(classify.p_background).expect("vec write");
            b.write_f64::<LE>(classify.threshold).expect("vec write");
            b.write_u8(classify.normalized as u8).expect("vec write");
        }
        CellBank::Adaptive { cfg, .. } => {
            b.write_u32::<LE>(cfg.max_components as u32).expect("vec write");
            b.write_f64::<LE>(cfg.learning_rate).expect("vec write");
            b.write_f64::<LE>(cfg.match_sigma).expect("vec write");
            b.write_f64::<LE>(cfg.background_fraction).expect("vec write");
            b.write_u32::<LE>(cfg.bootstrap_frames).expect("vec write");
            b.write_f64::<LE>(cfg.initial_variance).expect("vec write");
        }
        CellBank::MeanMax { cfg, .. } => {
            b.write_f64::<LE>(cfg.band_m).expect("vec write");
        }
    }
    b
}

fn decode_dpgmm_config(blob: &[u8]) -> Result<(DpgmmConfig, ClassifyParams), ModelFileError> {
    let mut cur = blob;
    let alpha = cur.read_f64::<LE>().map_err(|_| corrupt("short config"))?;
    let kappa0 = cur.read_f64::<LE>().map_err(|_| corrupt("short config"))?;
    let nu0 = cur.read_f64::<LE>().map_err(|_| corrupt("short config"))?;
    let psi0 = read_mat3(&mut cur).map_err(|_| corrupt("short config"))?;
    let max_tables = cur.read_u32::<LE>().map_err(|_| corrupt("short config"))? as usize;
    let mu0_bootstrap_weight = cur.read_f64::<LE>().map_err(|_| corrupt("short config"))?;
    let retain_history = cur.read_u8().map_err(|_| corrupt("short config"))? != 0;
    let p_background = cur.read_f64::<LE>().map_err(|_| corrupt("short config"))?;
    let threshold = cur.read_f64::<LE>().map_err(|_| corrupt("short config"))?;
    let normalized = cur.read_u8().map_err(|_| corrupt("short config"))? != 0;
    if !cur.is_empty() {
        return Err(corrupt("oversized config blob"));
    }
    let cfg = DpgmmConfig {
        alpha,
        kappa0,
        nu0,
        psi0,
        max_tables,
        mu0_bootstrap_weight,
        retain_history,
    };
    cfg.validate().map_err(|e| corrupt(e.to_string()))?;
    let mut classify =
        ClassifyParams::with_prior(p_background, normalized).map_err(|e| corrupt(e.to_string()))?;
    classify.threshold = threshold;
    Ok((cfg, classify))
}

fn decode_adaptive_config(blob: &[u8]) -> Result<AdaptiveConfig, ModelFileError> {
    let mut cur = blob;
    let cfg = AdaptiveConfig {
        max_components: cur.read_u32::<LE>().map_err(|_| corrupt("short config"))? as usize,
        learning_rate: cur.read_f64::<LE>().map_err(|_| corrupt("short config"))?,
        match_sigma: cur.read_f64::<LE>().map_err(|_| corrupt("short config"))?,
        background_fraction: cur.read_f64::<LE>().map_err(|_| corrupt("short config"))?,
        bootstrap_frames: cur.read_u32::<LE>().map_err(|_| corrupt("short config"))?,
        initial_variance: cur.read_f64::<LE>().map_err(|_| corrupt("short config"))?,
    };
    if !cur.is_empty() {
        return Err(corrupt("oversized config blob"));
    }
    cfg.validate().map_err(|e| corrupt(e.to_string()))?;
    Ok(cfg)
}

fn decode_meanmax_config(blob: &[u8]) -> Result<MeanMaxConfig, ModelFileError> {
    let mut cur = blob;
    let cfg = MeanMaxConfig { band_m: cur.read_f64::<LE>().map_err(|_| corrupt("short config"))? };
    if !cur.is_empty() {
        return Err(corrupt("oversized config blob"));
    }
    cfg.validate().map_err(|e| corrupt(e.to_string()))?;
    Ok(cfg)
}

fn write_vec3<W: Write>(out: &mut W, v: Vec3) -> Result<(), ModelFileError> {
    out.write_f64::<LE>(v.x)?;
    out.write_f64::<LE>(v.y)?;
    out.write_f64::<LE>(v.z)?;
    Ok(())
}

fn read_vec3<R: Read>(input: &mut R) -> Result<Vec3, ModelFileError> {
    Ok(Vec3::new(
        input.read_f64::<LE>()?,
        input.read_f64::<LE>()?,
        input.read_f64::<LE>()?,
    ))
}

fn write_mat3<W: Write>(out: &mut W, m: &Mat3) -> Result<(), ModelFileError> {
    for row in &m.m {
        for &v in row {
            out.write_f64::<LE>(v)?;
        }
    }
    Ok(())
}

fn read_mat3<R: Read>(input: &mut R) -> Result<Mat3, ModelFileError> {
    let mut m = [[0.0; 3]; 3];
    for row in &mut m {
        for v in row.iter_mut() {
            *v = input.read_f64::<LE>()?;
        }
    }
    Ok(Mat3 { m })
}

// ---------------------------------------------------------------------
// Cell payloads
// ---------------------------------------------------------------------

fn write_intensity<W: Write>(out: &mut W, gmm: Option<&IntensityGmm>) -> Result<(), ModelFileError> {
    match gmm {
        None => out.write_u8(0)?,
        Some(g) => {
            let comps = g.components();
            out.write_u8(comps.len() as u8)?;
            for c in comps {
                out.write_f64::<LE>(c.weight)?;
                out.write_f64::<LE>(c.mean)?;
                out.write_f64::<LE>(c.var)?;
            }
        }
    }
    Ok(())
}

fn read_intensity<R: Read>(input: &mut R) -> Result<Option<IntensityGmm>, ModelFileError> {
    let k = input.read_u8()?;
    if k == 0 {
        return Ok(None);
    }
    let mut comps = Vec::with_capacity(k as usize);
    for _ in 0..k {
        comps.push(IntensityComponent {
            weight: input.read_f64::<LE>()?,
            mean: input.read_f64::<LE>()?,
            var: input.read_f64::<LE>()?,
        });
    }
    IntensityGmm::from_components(comps)
        .map(Some)
        .map_err(|e| corrupt(e.to_string()))
}

fn write_dpgmm_cell<W: Write>(out: &mut W, cell: &DpgmmCell) -> Result<(), ModelFileError> {
    // The raw accumulator, not the derived mean: dividing the weight out
    // and multiplying it back in on load would perturb low bits and break
    // the byte-identical re-save guarantee.
    write_vec3(out, cell.mu0_sum())?;
    out.write_f64::<LE>(cell.mu0_weight())?;
    out.write_f64::<LE>(cell.no_return_weight())?;
    out.write_f64::<LE>(cell.total_weight())?;
    out.write_u64::<LE>(cell.next_table_id())?;
    out.write_u8(cell.tables().len() as u8)?;
    for t in cell.tables() {
        let raw = t.raw();
        out.write_u64::<LE>(raw.id)?;
        out.write_u64::<LE>(raw.created_frame)?;
        out.write_f64::<LE>(raw.weight)?;
        write_vec3(out, raw.sum)?;
        write_mat3(out, &raw.scatter)?;
    }
    Ok(())
}

fn read_dpgmm_cell<R: Read>(input: &mut R, cfg: &DpgmmConfig) -> Result<DpgmmCell, ModelFileError> {
    let mu0_sum = read_vec3(input)?;
    let mu0_weight = input.read_f64::<LE>()?;
    let no_return_weight = input.read_f64::<LE>()?;
    let total_weight = input.read_f64::<LE>()?;
    let next_table_id = input.read_u64::<LE>()?;
    let n = input.read_u8()?;
    let mut tables = Vec::with_capacity(n as usize);
    for _ in 0..n {
        tables.push(RawTable {
            id: input.read_u64::<LE>()?,
            created_frame: input.read_u64::<LE>()?,
            weight: input.read_f64::<LE>()?,
            sum: read_vec3(input)?,
            scatter: read_mat3(input)?,
        });
    }
    DpgmmCell::from_parts(
        mu0_sum,
        mu0_weight,
        tables,
        no_return_weight,
        total_weight,
        next_table_id,
        None,
        cfg,
    )
    .map_err(|e| corrupt(e.to_string()))
}

fn write_adaptive_cell<W: Write>(out: &mut W, cell: &AdaptiveCell) -> Result<(), ModelFileError> {
    out.write_u64::<LE>(cell.frames_seen())?;
    out.write_f64::<LE>(cell.no_return_weight())?;
    out.write_f64::<LE>(cell.total_weight())?;
    out.write_u8(cell.components().len() as u8)?;
    for c in cell.components() {
        out.write_f64::<LE>(c.weight)?;
        write_vec3(out, c.mean)?;
        out.write_f64::<LE>(c.variance)?;
    }
    Ok(())
}

fn read_adaptive_cell<R: Read>(input: &mut R) -> Result<AdaptiveCell, ModelFileError> {
    let frames_seen = input.read_u64::<LE>()?;
    let no_return_weight = input.read_f64::<LE>()?;
    let total_weight = input.read_f64::<LE>()?;
    let n = input.read_u8()?;
    let mut comps = Vec::with_capacity(n as usize);
    for _ in 0..n {
        comps.push(AdaptiveComponent {
            weight: input.read_f64::<LE>()?,
            mean: read_vec3(input)?,
            variance: input.read_f64::<LE>()?,
        });
    }
    AdaptiveCell::from_parts(comps, frames_seen, no_return_weight, total_weight)
        .map_err(|e| corrupt(e.to_string()))
}

fn write_meanmax_cell<W: Write>(out: &mut W, cell: &MeanMaxCell) -> Result<(), ModelFileError> {
    out.write_f64::<LE>(cell.range_sum())?;
    out.write_f64::<LE>(cell.range_count())?;
    out.write_f64::<LE>(cell.max_range().unwrap_or(0.0))?;
    out.write_f64::<LE>(cell.no_return_count())?;
    out.write_f64::<LE>(cell.total_count())?;
    Ok(())
}

fn read_meanmax_cell<R: Read>(input: &mut R) -> Result<MeanMaxCell, ModelFileError> {
    let range_sum = input.read_f64::<LE>()?;
    let range_count = input.read_f64::<LE>()?;
    let range_max = input.read_f64::<LE>()?;
    let no_return_count = input.read_f64::<LE>()?;
    let total_count = input.read_f64::<LE>()?;
    MeanMaxCell::from_parts(range_sum, range_count, range_max, no_return_count, total_count)
        .map_err(|e| corrupt(e.to_string()))
}
