//! Frame tensorization: hashing raw returns into the fixed
//! elevation x azimuth cell grid that every background model consumes.

use crate::geom::{self, GeomError};
use crate::linalg::Vec3;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Static description of the scanning sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    pub beams: u16,
    /// Per-beam elevation angle, degrees; length equals `beams`.
    pub elevation_deg: Vec<f64>,
    pub rotation_hz: f64,
    pub azimuth_resolution_deg: f64,
    pub azimuth_bins: u32,
    pub max_range_m: f64,
    /// Upper bound of the sensor's intensity scale (lower bound is 0).
    pub max_intensity: f64,
}

impl SensorConfig {
    /// Builds a config, deriving the bin count from the resolution.
    pub fn new(
        elevation_deg: Vec<f64>,
        rotation_hz: f64,
        azimuth_resolution_deg: f64,
        max_range_m: f64,
    ) -> Result<Self, SensorConfigError> {
        if elevation_deg.is_empty() || elevation_deg.len() > u16::MAX as usize {
            return Err(SensorConfigError::BadBeamTable(elevation_deg.len()));
        }
        if !(azimuth_resolution_deg > 0.0) || !azimuth_resolution_deg.is_finite() {
            return Err(SensorConfigError::BadResolution(azimuth_resolution_deg));
        }
        let bins_f = 360.0 / azimuth_resolution_deg;
        let bins = libm::round(bins_f) as u32;
        if bins == 0 || libm::fabs(bins as f64 * azimuth_resolution_deg - 360.0) > 1e-6 {
            return Err(SensorConfigError::BadResolution(azimuth_resolution_deg));
        }
        if !(max_range_m > 0.0) || !(rotation_hz > 0.0) {
            return Err(SensorConfigError::BadScalar);
        }
        Ok(SensorConfig {
            beams: elevation_deg.len() as u16,
            elevation_deg,
            rotation_hz,
            azimuth_resolution_deg,
            azimuth_bins: bins,
            max_range_m,
            max_intensity: 255.0,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.beams as usize * self.azimuth_bins as usize
    }

    pub fn frame_period_s(&self) -> f64 {
        1.0 / self.rotation_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[non_exhaustive]
pub enum SensorConfigError {
    BadBeamTable(usize),
    BadResolution(f64),
    BadScalar,
}

impl fmt::Display for SensorConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SensorConfigError::BadBeamTable(n) => write!(f, "unusable beam table of length {n}"),
            SensorConfigError::BadResolution(r) => {
                write!(f, "azimuth resolution {r} deg does not tile 360 deg")
            }
            SensorConfigError::BadScalar => write!(f, "rotation rate and max range must be positive"),
        }
    }
}

impl core::error::Error for SensorConfigError {}

/// Measurement payload of one fired beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sample {
    /// Echo reported in sensor polar terms.
    Spherical { range_m: f64, intensity: f64 },
    /// Echo already projected to sensor-frame cartesian.
    Cartesian { xyz: Vec3, intensity: f64 },
    /// Fired, no echo.
    NoReturn,
}

impl Sample {
    pub fn is_return(&self) -> bool {
        !matches!(self, Sample::NoReturn)
    }

    pub fn intensity(&self) -> Option<f64> {
        match self {
            Sample::Spherical { intensity, .. } | Sample::Cartesian { intensity, .. } => {
                Some(*intensity)
            }
            Sample::NoReturn => None,
        }
    }
}

/// One fired beam of one frame.
///
/// `azimuth_deg` is the firing direction and is present for no-returns too;
/// it alone decides grid placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRecord {
    pub frame_id: u64,
    pub beam_id: u16,
    pub azimuth_deg: f64,
    pub sample: Sample,
}

impl PointRecord {
    /// Field-level validity: angle domain, intensity domain, positive range,
    /// finite coordinates. Grid-dependent checks live in [`tensorize_frame`].
    pub fn validate(&self, cfg: &SensorConfig) -> Result<(), PointRecordError> {
        if !(self.azimuth_deg > 0.0 && self.azimuth_deg <= 360.0) {
            return Err(PointRecordError::Azimuth(self.azimuth_deg));
        }
        if self.beam_id >= cfg.beams {
            return Err(PointRecordError::Beam(self.beam_id));
        }
        match self.sample {
            Sample::Spherical { range_m, intensity } => {
                if !(range_m > 0.0) || !range_m.is_finite() {
                    return Err(PointRecordError::Range(range_m));
                }
                validate_intensity(intensity, cfg)
            }
            Sample::Cartesian { xyz, intensity } => {
                if !xyz.is_finite() || xyz == Vec3::ZERO {
                    return Err(PointRecordError::Coordinates);
                }
                validate_intensity(intensity, cfg)
            }
            Sample::NoReturn => Ok(()),
        }
    }
}

fn validate_intensity(intensity: f64, cfg: &SensorConfig) -> Result<(), PointRecordError> {
    if !(0.0..=cfg.max_intensity).contains(&intensity) {
        return Err(PointRecordError::Intensity(intensity));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[non_exhaustive]
pub enum PointRecordError {
    Azimuth(f64),
    Beam(u16),
    Range(f64),
    Intensity(f64),
    Coordinates,
}

impl fmt::Display for PointRecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointRecordError::Azimuth(a) => write!(f, "azimuth {a} outside (0, 360]"),
            PointRecordError::Beam(b) => write!(f, "beam id {b} outside the configured array"),
            PointRecordError::Range(r) => write!(f, "non-positive or non-finite range {r}"),
            PointRecordError::Intensity(i) => write!(f, "intensity {i} outside the sensor scale"),
            PointRecordError::Coordinates => write!(f, "non-finite or origin coordinates"),
        }
    }
}

impl core::error::Error for PointRecordError {}

/// One full sweep of the sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: u64,
    pub timestamp_s: f64,
    pub points: Vec<PointRecord>,
}

/// What a grid cell saw this frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellObservation {
    Return { xyz: Vec3, intensity: f64 },
    NoReturn,
}

impl CellObservation {
    pub fn is_return(&self) -> bool {
        matches!(self, CellObservation::Return { .. })
    }
}

/// Dense `beams x azimuth_bins` storage, shared by frame tensors and
/// per-cell model grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    beams: u16,
    bins: u32,
    cells: Vec<T>,
}

impl<T> Grid<T> {
    pub fn from_fn(beams: u16, bins: u32, mut f: impl FnMut() -> T) -> Self {
        let n = beams as usize * bins as usize;
        let mut cells = Vec::with_capacity(n);
        cells.resize_with(n, &mut f);
        Grid { beams, bins, cells }
    }

    pub fn beams(&self) -> u16 {
        self.beams
    }

    pub fn bins(&self) -> u32 {
        self.bins
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub fn index(&self, beam: u16, bin: u32) -> usize {
        debug_assert!(beam < self.beams && bin < self.bins);
        beam as usize * self.bins as usize + bin as usize
    }

    #[inline]
    pub fn cell(&self, beam: u16, bin: u32) -> &T {
        &self.cells[self.index(beam, bin)]
    }

    #[inline]
    pub fn cell_mut(&mut self, beam: u16, bin: u32) -> &mut T {
        let i = self.index(beam, bin);
        &mut self.cells[i]
    }

    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [T] {
        &mut self.cells
    }

    /// (beam, bin) of a flat cell index.
    pub fn position(&self, index: usize) -> (u16, u32) {
        ((index / self.bins as usize) as u16, (index % self.bins as usize) as u32)
    }
}

impl<T: Clone> Grid<T> {
    pub fn filled(beams: u16, bins: u32, value: T) -> Self {
        Grid { beams, bins, cells: vec![value; beams as usize * bins as usize] }
    }
}

/// Tensorized frame: one observation per cell plus bookkeeping about
/// returns that could not be kept.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    pub frame_id: u64,
    pub timestamp_s: f64,
    pub grid: Grid<CellObservation>,
    /// Returns that lost a cell collision or exceeded the configured range.
    pub dropped: u32,
}

/// Tie handling when several returns hash to one cell.
///
/// `KeepNearest` and `KeepStrongest` use a total order (range, intensity,
/// coordinates), so the tensor is independent of input ordering.
/// `KeepFirst` keeps whichever return arrived first and trades that
/// invariance away.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CollisionPolicy {
    #[default]
    KeepNearest,
    KeepStrongest,
    KeepFirst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[non_exhaustive]
pub enum TensorizeError {
    BeamOutOfRange { beam_id: u16, beams: u16 },
    Record(PointRecordError),
    Geometry(GeomError),
}

impl fmt::Display for TensorizeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorizeError::BeamOutOfRange { beam_id, beams } => {
                write!(f, "beam id {beam_id} outside configured array of {beams}")
            }
            TensorizeError::Record(e) => write!(f, "invalid point record: {e}"),
            TensorizeError::Geometry(e) => write!(f, "geometry failure: {e}"),
        }
    }
}

impl core::error::Error for TensorizeError {}

impl From<GeomError> for TensorizeError {
    fn from(e: GeomError) -> Self {
        TensorizeError::Geometry(e)
    }
}

impl From<PointRecordError> for TensorizeError {
    fn from(e: PointRecordError) -> Self {
        TensorizeError::Record(e)
    }
}

struct Candidate {
    xyz: Vec3,
    intensity: f64,
    range: f64,
}

/// One record resolved against the sensor geometry: the cell it lands in
/// and the observation it contributes there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedRecord {
    pub beam: u16,
    pub bin: u32,
    /// Sensor-to-point distance; zero for no-returns.
    pub range_m: f64,
    pub obs: CellObservation,
}

/// Validates one record and computes its destination cell.
///
/// Spherical samples are projected through the beam's configured elevation
/// and binned by the record's firing azimuth. Cartesian samples are taken
/// as-is and binned by the azimuth recomputed from their coordinates, so
/// the coordinates stay the single source of truth. No-returns resolve by
/// firing azimuth alone.
pub fn resolve_record(
    rec: &PointRecord,
    cfg: &SensorConfig,
) -> Result<ResolvedRecord, TensorizeError> {
    if rec.beam_id >= cfg.beams {
        return Err(TensorizeError::BeamOutOfRange { beam_id: rec.beam_id, beams: cfg.beams });
    }
    rec.validate(cfg)?;

    let (obs, range, bin_azimuth) = match rec.sample {
        Sample::NoReturn => (CellObservation::NoReturn, 0.0, rec.azimuth_deg),
        Sample::Spherical { range_m, intensity } => {
            let xyz = geom::spherical_to_cartesian(
                range_m,
                cfg.elevation_deg[rec.beam_id as usize],
                rec.azimuth_deg,
            );
            (CellObservation::Return { xyz, intensity }, range_m, rec.azimuth_deg)
        }
        Sample::Cartesian { xyz, intensity } => (
            CellObservation::Return { xyz, intensity },
            xyz.norm(),
            geom::cartesian_to_spherical(xyz)?.azimuth_deg,
        ),
    };
    let bin = geom::azimuth_bin(bin_azimuth, cfg.azimuth_resolution_deg, cfg.azimuth_bins)?;
    Ok(ResolvedRecord { beam: rec.beam_id, bin, range_m: range, obs })
}

/// Hashes every record of `frame` into a fresh cell grid.
///
/// Cell destinations follow [`resolve_record`]. Returns beyond
/// `max_range_m` are counted in `dropped` rather than rejected: a real
/// sensor would have reported them as no-returns.
pub fn tensorize_frame(
    frame: &Frame,
    cfg: &SensorConfig,
    policy: CollisionPolicy,
) -> Result<FrameTensor, TensorizeError> {
    let mut grid = Grid::filled(cfg.beams, cfg.azimuth_bins, CellObservation::NoReturn);
    let mut dropped = 0u32;

    for rec in &frame.points {
        let resolved = resolve_record(rec, cfg)?;
        let cand = match resolved.obs {
            CellObservation::NoReturn => continue, // cells start as NoReturn
            CellObservation::Return { xyz, intensity } => {
                Candidate { xyz, intensity, range: resolved.range_m }
            }
        };
        if cand.range > cfg.max_range_m {
            dropped += 1;
            continue;
        }

        let cell = grid.cell_mut(resolved.beam, resolved.bin);
        match cell {
            CellObservation::NoReturn => {
                *cell = CellObservation::Return { xyz: cand.xyz, intensity: cand.intensity };
            }
            CellObservation::Return { xyz, intensity } => {
                let held = Candidate { xyz: *xyz, intensity: *intensity, range: xyz.norm() };
                if prefer_incoming(policy, &cand, &held) {
                    *cell = CellObservation::Return { xyz: cand.xyz, intensity: cand.intensity };
                }
                dropped += 1;
            }
        }
    }

    Ok(FrameTensor { frame_id: frame.frame_id, timestamp_s: frame.timestamp_s, grid, dropped })
}

fn prefer_incoming(policy: CollisionPolicy, incoming: &Candidate, held: &Candidate) -> bool {
    let key = |c: &Candidate, intensity_first: bool| -> [f64; 5] {
        if intensity_first {
            [-c.intensity, c.range, c.xyz.x, c.xyz.y, c.xyz.z]
        } else {
            [c.range, -c.intensity, c.xyz.x, c.xyz.y, c.xyz.z]
        }
    };
    match policy {
        CollisionPolicy::KeepFirst => false,
        CollisionPolicy::KeepNearest => key(incoming, false) < key(held, false),
        CollisionPolicy::KeepStrongest => key(incoming, true) < key(held, true),
    }
}
