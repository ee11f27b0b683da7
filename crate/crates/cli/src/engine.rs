//! Parallel pipeline drivers.
//!
//! The core crate keeps every algorithm single threaded; this module fans
//! the independent units of work out over rayon's pool and proves (in
//! tests) that the answers are bit-identical to the sequential paths.
//! Cells never share state, so per-cell fits and updates parallelize
//! freely; per-point classification is pure; everything downstream of a
//! frame's label vector stays sequential.

use std::fmt;
use std::time::Instant;

use curbscan_core::detect::{
    geofence_filter, make_detection, segment_objects, ClassRules, ClusterConfig, Detection,
    DetectError, GeofencePolygon, Tracker, TrackerConfig, TrackStatus,
};
use curbscan_core::evaluate::{PathSample, Trajectory};
use curbscan_core::intensity::{FitOptions, IntensityGmm, SamplingRate};
use curbscan_core::linalg::Vec3;
use curbscan_core::model::{
    fit_intensity_cell, observation_weight, BackgroundModel, CellBank, FrameMask,
    IntensityCollector, Label, ModelError,
};
use curbscan_core::tensor::{
    resolve_record, tensorize_frame, CellObservation, CollisionPolicy, Frame, Grid,
    SensorConfig, TensorizeError,
};
use rayon::prelude::*;

#[derive(Debug)]
#[non_exhaustive]
pub enum EngineError {
    Model(ModelError),
    Detect(DetectError),
    /// A phase was invoked out of order, e.g. absorbing frames before
    /// the intensity mixtures exist.
    Phase(&'static str),
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::Model(e) => write!(f, "{e}"),
            EngineError::Detect(e) => write!(f, "{e}"),
            EngineError::Phase(what) => write!(f, "pipeline phase error: {what}"),
        }
    }
}

impl std::error::Error for EngineError {}

impl From<ModelError> for EngineError {
    fn from(e: ModelError) -> Self {
        EngineError::Model(e)
    }
}

impl From<DetectError> for EngineError {
    fn from(e: DetectError) -> Self {
        EngineError::Detect(e)
    }
}

impl From<TensorizeError> for EngineError {
    fn from(e: TensorizeError) -> Self {
        EngineError::Model(ModelError::from(e))
    }
}

// ---------------------------------------------------------------------

/// Wall-clock stage reporter. Lines go to stderr so stdout stays clean
/// for data; `json` switches from `stage NAME: T ms` to one JSON object
/// per line.
#[derive(Debug, Clone, Copy)]
pub struct StageLog {
    json: bool,
}

impl StageLog {
    pub fn new(json: bool) -> Self {
        StageLog { json }
    }

    /// Runs `f`, then reports its duration under `name`.
    pub fn stage<T>(&self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.report(name, start.elapsed().as_secs_f64() * 1e3);
        out
    }

    pub fn report(&self, name: &str, ms: f64) {
        if self.json {
            eprintln!("{}", serde_json::json!({ "stage": name, "ms": ms }));
        } else {
            eprintln!("stage {name}: {ms:.3} ms");
        }
    }
}

// ---------------------------------------------------------------------

/// Streaming two-pass trainer.
///
/// Pass one feeds every frame to [`Trainer::observe`]; calling
/// [`Trainer::fit_intensity`] then fits all per-cell intensity mixtures
/// in parallel. Pass two replays the same stream through
/// [`Trainer::absorb`], which updates all cells of a frame in parallel.
/// Both parallel phases are bit-identical to their sequential
/// equivalents because cells are independent and the per-cell seed
/// depends only on the cell's position.
#[derive(Debug)]
pub struct Trainer {
    sensor: SensorConfig,
    collector: Option<IntensityCollector>,
    intensity: Option<Grid<Option<IntensityGmm>>>,
    bank: CellBank,
    fit: FitOptions,
    rate: SamplingRate,
    collision: CollisionPolicy,
    first_ts: Option<f64>,
    last_ts: f64,
    frames_absorbed: u64,
}

/// A finished training run: the model plus the stream's time extent.
#[derive(Debug)]
pub struct TrainedModel {
    pub model: BackgroundModel,
    pub first_timestamp_s: f64,
    pub last_timestamp_s: f64,
}

impl Trainer {
    pub fn new(
        sensor: SensorConfig,
        bank: CellBank,
        fit: FitOptions,
        rate: SamplingRate,
        collision: CollisionPolicy,
    ) -> Self {
        Trainer {
            collector: Some(IntensityCollector::new(sensor.clone())),
            sensor,
            intensity: None,
            bank,
            fit,
            rate,
            collision,
            first_ts: None,
            last_ts: 0.0,
            frames_absorbed: 0,
        }
    }

    /// Pass one: pools the frame's per-cell intensities.
    pub fn observe(&mut self, frame: &Frame) -> Result<(), EngineError> {
        let collector = self
            .collector
            .as_mut()
            .ok_or(EngineError::Phase("observe after fit_intensity"))?;
        collector.observe(frame, self.collision)?;
        self.first_ts.get_or_insert(frame.timestamp_s);
        self.last_ts = frame.timestamp_s;
        Ok(())
    }

    /// Fits every cell's intensity mixture, fanned out over the pool.
    pub fn fit_intensity(&mut self) -> Result<(), EngineError> {
        let collector = self
            .collector
            .take()
            .ok_or(EngineError::Phase("fit_intensity called twice"))?;
        let (samples, _) = collector.into_samples();
        let fit = &self.fit;
        let fitted: Vec<Option<IntensityGmm>> = samples
            .cells()
            .par_iter()
            .enumerate()
            .map(|(i, pool)| fit_intensity_cell(pool, fit, i as u64))
            .collect::<Result<_, _>>()
            .map_err(EngineError::Model)?;
        let mut it = fitted.into_iter();
        self.intensity = Some(Grid::from_fn(samples.beams(), samples.bins(), || {
            it.next().expect("one fit per cell")
        }));
        Ok(())
    }

    /// Pass two: updates every cell with the frame's observation, all
    /// cells in parallel.
    pub fn absorb(&mut self, frame: &Frame) -> Result<(), EngineError> {
        let intensity = self
            .intensity
            .as_ref()
            .ok_or(EngineError::Phase("absorb before fit_intensity"))?;
        let tensor = tensorize_frame(frame, &self.sensor, self.collision)?;
        let rate = self.rate;
        match &mut self.bank {
            CellBank::Dpgmm { cfg, cells, .. } => {
                let cfg = &*cfg;
                cells
                    .cells_mut()
                    .par_iter_mut()
                    .zip(tensor.grid.cells().par_iter())
                    .zip(intensity.cells().par_iter())
                    .try_for_each(|((cell, obs), gmm)| {
                        let w = observation_weight(gmm.as_ref(), obs, rate);
                        cell.update(obs, w, tensor.frame_id, cfg).map(|_| ())
                    })
                    .map_err(|e| EngineError::Model(e.into()))?;
            }
            CellBank::Adaptive { cfg, cells } => {
                let cfg = &*cfg;
                cells
                    .cells_mut()
                    .par_iter_mut()
                    .zip(tensor.grid.cells().par_iter())
                    .zip(intensity.cells().par_iter())
                    .try_for_each(|((cell, obs), gmm)| {
                        let w = observation_weight(gmm.as_ref(), obs, rate);
                        cell.update_and_classify(obs, w, cfg).map(|_| ())
                    })
                    .map_err(|e| EngineError::Model(e.into()))?;
            }
            CellBank::MeanMax { cells, .. } => {
                // Unweighted on purpose: the reference model predates
                // intensity confidence.
                cells
                    .cells_mut()
                    .par_iter_mut()
                    .zip(tensor.grid.cells().par_iter())
                    .try_for_each(|(cell, obs)| cell.train(obs))
                    .map_err(|e| EngineError::Model(e.into()))?;
            }
        }
        self.frames_absorbed += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<TrainedModel, EngineError> {
        let intensity = self
            .intensity
            .ok_or(EngineError::Phase("finish before fit_intensity"))?;
        let mut model = BackgroundModel::new(self.sensor, self.bank, intensity, self.rate)?;
        model.frames_trained = self.frames_absorbed;
        Ok(TrainedModel {
            model,
            first_timestamp_s: self.first_ts.unwrap_or(0.0),
            last_timestamp_s: self.last_ts,
        })
    }
}

// ---------------------------------------------------------------------

/// Parallel twin of [`BackgroundModel::classify_frame`]: per-record
/// resolution and classification are pure, so records fan out over the
/// pool and fold back in order.
pub fn classify_frame_par(
    model: &BackgroundModel,
    frame: &Frame,
) -> Result<FrameMask, EngineError> {
    let judged: Vec<(Label, Option<Vec3>)> = frame
        .points
        .par_iter()
        .map(|rec| {
            let resolved =
                resolve_record(rec, &model.sensor).map_err(|e| ModelError::from(e))?;
            let label = model.classify_cell(resolved.beam, resolved.bin, &resolved.obs)?;
            let xyz = match resolved.obs {
                CellObservation::Return { xyz, .. } => Some(xyz),
                _ => None,
            };
            Ok::<_, ModelError>((label, xyz))
        })
        .collect::<Result<_, _>>()
        .map_err(EngineError::Model)?;

    let mut labels = Vec::with_capacity(judged.len());
    let mut returns = 0usize;
    let mut foreground_returns = 0usize;
    let mut foreground = Vec::new();
    for (idx, (label, xyz)) in judged.into_iter().enumerate() {
        if let Some(xyz) = xyz {
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

// ---------------------------------------------------------------------

/// Everything the per-frame object extraction needs besides the model.
#[derive(Debug, Clone)]
pub struct DetectParams {
    pub fences: Vec<GeofencePolygon>,
    pub lof_k: usize,
    pub lof_threshold: f64,
    pub cluster: ClusterConfig,
    pub rules: ClassRules,
}

/// One frame's detections, ready for the tracker.
#[derive(Debug, Clone)]
pub struct FrameObjects {
    pub frame_id: u64,
    pub timestamp_s: f64,
    pub detections: Vec<Detection>,
}

/// Runs one frame through the object pipeline: fence the returns,
/// label the survivors, drop outliers, cluster, box and class what
/// remains. Stage order matters; fencing first keeps off-road returns
/// from ever influencing outlier statistics.
pub fn detect_frame(
    model: &BackgroundModel,
    frame: &Frame,
    params: &DetectParams,
) -> Result<FrameObjects, EngineError> {
    // Returns only; no-returns carry no position and cannot cluster.
    let returns: Vec<(u16, u32, CellObservation, Vec3)> = frame
        .points
        .par_iter()
        .map(|rec| resolve_record(rec, &model.sensor).map_err(ModelError::from))
        .collect::<Result<Vec<_>, _>>()
        .map_err(EngineError::Model)?
        .into_iter()
        .filter_map(|r| match r.obs {
            CellObservation::Return { xyz, .. } => Some((r.beam, r.bin, r.obs, xyz)),
            _ => None,
        })
        .collect();

    let positions: Vec<Vec3> = returns.iter().map(|r| r.3).collect();
    let kept = geofence_filter(&positions, &params.fences);

    let foreground: Vec<Vec3> = kept
        .par_iter()
        .map(|&i| {
            let (beam, bin, obs, xyz) = &returns[i];
            let label = model.classify_cell(*beam, *bin, obs)?;
            Ok::<_, ModelError>((label == Label::Foreground).then_some(*xyz))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(EngineError::Model)?
        .into_iter()
        .flatten()
        .collect();

    let segmentation =
        segment_objects(&foreground, params.lof_k, params.lof_threshold, &params.cluster)?;
    let mut detections = Vec::with_capacity(segmentation.clusters.len());
    for cluster in &segmentation.clusters {
        let members: Vec<Vec3> = cluster.iter().map(|&i| foreground[i]).collect();
        detections.push(make_detection(&members, &params.rules)?);
    }
    Ok(FrameObjects { frame_id: frame.frame_id, timestamp_s: frame.timestamp_s, detections })
}

// ---------------------------------------------------------------------

/// One live track's state at one frame, flattened for export.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRow {
    pub track_id: u64,
    pub frame_id: u64,
    pub timestamp_s: f64,
    pub position: Vec3,
    pub yaw: f64,
    pub speed: f64,
    pub class: &'static str,
    pub status: TrackStatus,
}

/// Feeds per-frame detections through a tracker, logging every live
/// track each frame and accumulating per-track paths for movement
/// counting.
#[derive(Debug)]
pub struct TrackRun {
    tracker: Tracker,
    /// Fallback step for the first frame, where no previous timestamp
    /// exists yet.
    nominal_dt: f64,
    last_ts: Option<f64>,
    rows: Vec<TrackRow>,
    paths: Vec<Trajectory>,
}

impl TrackRun {
    pub fn new(cfg: TrackerConfig, nominal_dt: f64) -> Result<Self, EngineError> {
        Ok(TrackRun {
            tracker: Tracker::new(cfg)?,
            nominal_dt,
            last_ts: None,
            rows: Vec::new(),
            paths: Vec::new(),
        })
    }

    pub fn step(&mut self, objects: &FrameObjects) -> Result<(), EngineError> {
        let dt = match self.last_ts {
            Some(prev) => objects.timestamp_s - prev,
            None => self.nominal_dt,
        };
        self.last_ts = Some(objects.timestamp_s);
        self.tracker.step(&objects.detections, dt)?;

        for track in self.tracker.tracks() {
            if track.status() == TrackStatus::Deleted {
                continue;
            }
            self.rows.push(TrackRow {
                track_id: track.id(),
                frame_id: objects.frame_id,
                timestamp_s: objects.timestamp_s,
                position: track.position(),
                yaw: track.yaw(),
                speed: track.speed(),
                class: track.class().name(),
                status: track.status(),
            });
            let sample = PathSample {
                timestamp: objects.timestamp_s,
                x: track.position().x,
                y: track.position().y,
                status: track.status(),
            };
            match self.paths.iter_mut().find(|t| t.track_id == track.id()) {
                Some(t) => t.samples.push(sample),
                None => self
                    .paths
                    .push(Trajectory { track_id: track.id(), samples: vec![sample] }),
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> &[TrackRow] {
        &self.rows
    }

    pub fn into_parts(self) -> (Vec<TrackRow>, Vec<Trajectory>) {
        (self.rows, self.paths)
    }
}
