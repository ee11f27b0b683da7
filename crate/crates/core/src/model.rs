//! Grid-level background models: one learner per lattice cell, plus the
//! training and subtraction drivers that tie the per-cell modules to
//! frame streams.
//!
//! Training runs in two passes. The first pass collects every return's
//! intensity into its cell ([`IntensityCollector`]) and fits one intensity
//! mixture per cell. The second pass replays the stream through
//! [`BackgroundModel::train_frame`], weighting each observation by its
//! cell's intensity mixture before the cell learner absorbs it.
//! Subtraction ([`BackgroundModel::classify_frame`]) is pure: it labels
//! every input record against the frozen model and never updates it.

use alloc::vec::Vec;
use core::fmt;

use crate::adaptive::{AdaptiveCell, AdaptiveConfig, AdaptiveError};
use crate::baseline::{BaselineError, MeanMaxCell, MeanMaxConfig};
use crate::dpgmm::{ClassifyParams, DpgmmCell, DpgmmConfig, DpgmmError};
use crate::intensity::{
    FitOptions, IntensityError, IntensityGmm, PointWeight, SamplingRate,
};
use crate::linalg::Vec3;
use crate::tensor::{
    resolve_record, tensorize_frame, CellObservation, CollisionPolicy, Frame, FrameTensor,
    Grid, SensorConfig, TensorizeError,
};

/// Binary point label produced by background subtraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Background,
    Foreground,
}

impl Label {
    pub fn is_background(self) -> bool {
        matches!(self, Label::Background)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[non_exhaustive]
pub enum ModelError {
    Tensorize(TensorizeError),
    Dpgmm(DpgmmError),
    Adaptive(AdaptiveError),
    Baseline(BaselineError),
    Intensity(IntensityError),
    /// A grid's shape disagrees with the sensor lattice.
    ShapeMismatch,
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Tensorize(e) => write!(f, "tensorization failed: {e}"),
            ModelError::Dpgmm(e) => write!(f, "mixture cell failed: {e}"),
            ModelError::Adaptive(e) => write!(f, "adaptive cell failed: {e}"),
            ModelError::Baseline(e) => write!(f, "baseline cell failed: {e}"),
            ModelError::Intensity(e) => write!(f, "intensity model failed: {e}"),
            ModelError::ShapeMismatch => {
                write!(f, "grid shape disagrees with the sensor lattice")
            }
        }
    }
}

impl core::error::Error for ModelError {}

impl From<TensorizeError> for ModelError {
    fn from(e: TensorizeError) -> Self {
        ModelError::Tensorize(e)
    }
}

impl From<DpgmmError> for ModelError {
    fn from(e: DpgmmError) -> Self {
        ModelError::Dpgmm(e)
    }
}

impl From<AdaptiveError> for ModelError {
    fn from(e: AdaptiveError) -> Self {
        ModelError::Adaptive(e)
    }
}

impl From<BaselineError> for ModelError {
    fn from(e: BaselineError) -> Self {
        ModelError::Baseline(e)
    }
}

impl From<IntensityError> for ModelError {
    fn from(e: IntensityError) -> Self {
        ModelError::Intensity(e)
    }
}

/// Which per-cell learner a model runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Dpgmm,
    Adaptive,
    MeanMax,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dpgmm => "dpgmm",
            ModelKind::Adaptive => "adaptive",
            ModelKind::MeanMax => "meanmax",
        }
    }
}

/// The per-cell learner lattice, one grid per model family. Each variant
/// carries the configuration its cells were built with, so a bank is
/// self-contained for both training and classification.
#[derive(Debug, Clone, PartialEq)]
pub enum CellBank {
    Dpgmm { cfg: DpgmmConfig, classify: ClassifyParams, cells: Grid<DpgmmCell> },
    Adaptive { cfg: AdaptiveConfig, cells: Grid<AdaptiveCell> },
    MeanMax { cfg: MeanMaxConfig, cells: Grid<MeanMaxCell> },
}

impl CellBank {
    /// Fresh mixture bank over the sensor lattice.
    pub fn dpgmm(
        sensor: &SensorConfig,
        cfg: DpgmmConfig,
        classify: ClassifyParams,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        let cells = Grid::from_fn(sensor.beams, sensor.azimuth_bins, || DpgmmCell::new(&cfg));
        Ok(CellBank::Dpgmm { cfg, classify, cells })
    }

    /// Fresh adaptive bank over the sensor lattice.
    pub fn adaptive(sensor: &SensorConfig, cfg: AdaptiveConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let cells = Grid::from_fn(sensor.beams, sensor.azimuth_bins, AdaptiveCell::new);
        Ok(CellBank::Adaptive { cfg, cells })
    }

    /// Fresh mean-max bank over the sensor lattice.
    pub fn mean_max(sensor: &SensorConfig, cfg: MeanMaxConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let cells = Grid::from_fn(sensor.beams, sensor.azimuth_bins, MeanMaxCell::new);
        Ok(CellBank::MeanMax { cfg, cells })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            CellBank::Dpgmm { .. } => ModelKind::Dpgmm,
            CellBank::Adaptive { .. } => ModelKind::Adaptive,
            CellBank::MeanMax { .. } => ModelKind::MeanMax,
        }
    }

    fn shape(&self) -> (u16, u32) {
        match self {
            CellBank::Dpgmm { cells, .. } => (cells.beams(), cells.bins()),
            CellBank::Adaptive { cells, .. } => (cells.beams(), cells.bins()),
            CellBank::MeanMax { cells, .. } => (cells.beams(), cells.bins()),
        }
    }
}

/// Confidence weight of one observation under its cell's intensity
/// mixture. No-returns and cells that never saw a return weigh 1.
pub fn observation_weight(
    gmm: Option<&IntensityGmm>,
    obs: &CellObservation,
    rate: SamplingRate,
) -> PointWeight {
    match (gmm, obs) {
        (Some(g), CellObservation::Return { intensity, .. }) => g.point_weight(*intensity, rate),
        _ => PointWeight::UNIT,
    }
}

const CELL_SEED_MIX: u64 = 0xD1B5_4A32_D192_ED03;

/// Fits one cell's intensity mixture; cells with no samples get none.
/// The base seed is mixed with the cell index so every cell fits an
/// independent, position-stable stream.
pub fn fit_intensity_cell(
    samples: &[f64],
    opts: &FitOptions,
    cell_index: u64,
) -> Result<Option<IntensityGmm>, ModelError> {
    if samples.is_empty() {
        return Ok(None);
    }
    let cell_opts = FitOptions {
        seed: opts.seed ^ cell_index.wrapping_mul(CELL_SEED_MIX),
        ..opts.clone()
    };
    Ok(Some(IntensityGmm::fit(samples, &cell_opts)?.gmm))
}

/// Fits every cell of a sample grid. Cell fits are independent, so
/// callers with a worker pool can instead fan [`fit_intensity_cell`]
/// out over `samples.cells()` and get identical results.
pub fn fit_intensity_grid(
    samples: &Grid<Vec<f64>>,
    opts: &FitOptions,
) -> Result<Grid<Option<IntensityGmm>>, ModelError> {
    let mut fitted = Vec::with_capacity(samples.len());
    for (i, cell) in samples.cells().iter().enumerate() {
        fitted.push(fit_intensity_cell(cell, opts, i as u64)?);
    }
    let mut it = fitted.into_iter();
    Ok(Grid::from_fn(samples.beams(), samples.bins(), || {
        it.next().expect("one fit per cell")
    }))
}

/// First training pass: accumulates per-cell intensity samples from a
/// frame stream.
#[derive(Debug, Clone)]
pub struct IntensityCollector {
    sensor: SensorConfig,
    samples: Grid<Vec<f64>>,
    frames: u64,
}

impl IntensityCollector {
    pub fn new(sensor: SensorConfig) -> Self {
        let samples = Grid::from_fn(sensor.beams, sensor.azimuth_bins, Vec::new);
        IntensityCollector { sensor, samples, frames: 0 }
    }

    pub fn sensor(&self) -> &SensorConfig {
        &self.sensor
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    /// Adds one frame's surviving returns to their cells' sample pools.
    pub fn observe(&mut self, frame: &Frame, policy: CollisionPolicy) -> Result<(), ModelError> {
        let tensor = tensorize_frame(frame, &self.sensor, policy)?;
        for (pool, obs) in self.samples.cells_mut().iter_mut().zip(tensor.grid.cells()) {
            if let CellObservation::Return { intensity, .. } = obs {
                pool.push(*intensity);
            }
        }
        self.frames += 1;
        Ok(())
    }

    /// Hands back the raw pools, e.g. for a parallel fit.
    pub fn into_samples(self) -> (Grid<Vec<f64>>, u64) {
        (self.samples, self.frames)
    }

    /// Fits every cell sequentially.
    pub fn fit(self, opts: &FitOptions) -> Result<Grid<Option<IntensityGmm>>, ModelError> {
        fit_intensity_grid(&self.samples, opts)
    }
}

/// Per-point labels for one frame, aligned index-for-index with
/// `frame.points`. No-return records are labeled too; the return
/// counters below cover actual echoes only.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMask {
    pub frame_id: u64,
    pub labels: Vec<Label>,
    pub returns: usize,
    pub foreground_returns: usize,
    /// Record index and world position of every foreground return, ready
    /// for the object-extraction stages.
    pub foreground: Vec<(usize, Vec3)>,
}

impl FrameMask {
    /// Foreground share among returns; zero when the frame had no echoes.
    pub fn foreground_fraction(&self) -> f64 {
        if self.returns == 0 {
            0.0
        } else {
            self.foreground_returns as f64 / self.returns as f64
        }
    }
}

/// A background model over the full sensor lattice: the learner bank, the
/// per-cell intensity mixtures feeding observation weights, and the
/// weighting mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    pub sensor: SensorConfig,
    pub bank: CellBank,
    /// `None` where the first pass saw no returns.
    pub intensity: Grid<Option<IntensityGmm>>,
    pub sampling_rate: SamplingRate,
    pub frames_trained: u64,
}

impl BackgroundModel {
    /// Assembles an untrained model around a fitted intensity grid.
    pub fn new(
        sensor: SensorConfig,
        bank: CellBank,
        intensity: Grid<Option<IntensityGmm>>,
        sampling_rate: SamplingRate,
    ) -> Result<Self, ModelError> {
        let shape = (sensor.beams, sensor.azimuth_bins);
        if bank.shape() != shape || (intensity.beams(), intensity.bins()) != shape {
            return Err(ModelError::ShapeMismatch);
        }
        Ok(BackgroundModel { sensor, bank, intensity, sampling_rate, frames_trained: 0 })
    }

    pub fn kind(&self) -> ModelKind {
        self.bank.kind()
    }

    /// Absorbs one frame: tensorizes it and folds every cell observation
    /// into its learner at the intensity-derived weight (second training
    /// pass).
    pub fn train_frame(
        &mut self,
        frame: &Frame,
        policy: CollisionPolicy,
    ) -> Result<(), ModelError> {
        let tensor = tensorize_frame(frame, &self.sensor, policy)?;
        self.train_tensor(&tensor)
    }

    /// Absorbs an already tensorized frame.
    pub fn train_tensor(&mut self, tensor: &FrameTensor) -> Result<(), ModelError> {
        let shape = (self.sensor.beams, self.sensor.azimuth_bins);
        if (tensor.grid.beams(), tensor.grid.bins()) != shape {
            return Err(ModelError::ShapeMismatch);
        }
        let rate = self.sampling_rate;
        match &mut self.bank {
            CellBank::Dpgmm { cfg, cells, .. } => {
                let iter = cells
                    .cells_mut()
                    .iter_mut()
                    .zip(tensor.grid.cells())
                    .zip(self.intensity.cells());
                for ((cell, obs), gmm) in iter {
                    let w = observation_weight(gmm.as_ref(), obs, rate);
                    cell.update(obs, w, tensor.frame_id, cfg)?;
                }
            }
            CellBank::Adaptive { cfg, cells } => {
                let iter = cells
                    .cells_mut()
                    .iter_mut()
                    .zip(tensor.grid.cells())
                    .zip(self.intensity.cells());
                for ((cell, obs), gmm) in iter {
                    let w = observation_weight(gmm.as_ref(), obs, rate);
                    cell.update_and_classify(obs, w, cfg)?;
                }
            }
            CellBank::MeanMax { cells, .. } => {
                // The baseline is deliberately unweighted; it has no use
                // for intensity confidence.
                for (cell, obs) in cells.cells_mut().iter_mut().zip(tensor.grid.cells()) {
                    cell.train(obs)?;
                }
            }
        }
        self.frames_trained += 1;
        Ok(())
    }

    /// Labels one observation against one cell without touching the
    /// model. Cells the training stream never reached fall back to the
    /// neutral reading: an unexplained echo is foreground, silence is
    /// background.
    pub fn classify_cell(
        &self,
        beam: u16,
        bin: u32,
        obs: &CellObservation,
    ) -> Result<Label, ModelError> {
        match &self.bank {
            CellBank::Dpgmm { classify, cells, .. } => {
                let cell = cells.cell(beam, bin);
                match obs {
                    CellObservation::Return { .. } if cell.tables().is_empty() => {
                        Ok(Label::Foreground)
                    }
                    CellObservation::NoReturn if cell.total_weight() <= 0.0 => {
                        Ok(Label::Background)
                    }
                    _ => Ok(cell.classify(obs, classify)?.label),
                }
            }
            CellBank::Adaptive { cfg, cells } => Ok(cells.cell(beam, bin).classify(obs, cfg)?),
            CellBank::MeanMax { cfg, cells } => Ok(cells.cell(beam, bin).classify(obs, cfg)?),
        }
    }

    /// Labels every record of `frame`, returns and no-returns alike.
    ///
    /// Each record is resolved to its own cell and judged on its own
    /// observation, so cell collisions cannot hide a point: two returns
    /// sharing a cell are classified independently.
    pub fn classify_frame(&self, frame: &Frame) -> Result<FrameMask, ModelError> {
        let mut labels = Vec::with_capacity(frame.points.len());
        let mut returns = 0usize;
        let mut foreground_returns = 0usize;
        let mut foreground = Vec::new();

        for (idx, rec) in frame.points.iter().enumerate() {
            let resolved = resolve_record(rec, &self.sensor)?;
            let label = self.classify_cell(resolved.beam, resolved.bin, &resolved.obs)?;
            if let CellObservation::Return { xyz, .. } = resolved.obs {
                returns += 1;
                if label == Label::Foreground {
                    foreground_returns += 1;
                    foreground.push((idx, xyz));
                }
            }
            labels.push(label);
        }

        Ok(FrameMask {
            frame_id: frame.frame_id,
            labels,
            returns,
            foreground_returns,
            foreground,
        })
    }
}

/// Everything [`train_model`] needs besides the frames themselves.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub sampling_rate: SamplingRate,
    pub fit: FitOptions,
    pub collision: CollisionPolicy,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            sampling_rate: SamplingRate::default(),
            fit: FitOptions::default(),
            collision: CollisionPolicy::KeepNearest,
        }
    }
}

/// Convenience two-pass trainer over an in-memory frame slice: fits the
/// per-cell intensity mixtures, then replays the frames through the bank.
/// Streaming callers run the same two passes against their source.
pub fn train_model(
    frames: &[Frame],
    sensor: &SensorConfig,
    bank: CellBank,
    opts: &TrainOptions,
) -> Result<BackgroundModel, ModelError> {
    let mut collector = IntensityCollector::new(sensor.clone());
    for frame in frames {
        collector.observe(frame, opts.collision)?;
    }
    let intensity = collector.fit(&opts.fit)?;
    let mut model = BackgroundModel::new(sensor.clone(), bank, intensity, opts.sampling_rate)?;
    for frame in frames {
        model.train_frame(frame, opts.collision)?;
    }
    Ok(model)
}
