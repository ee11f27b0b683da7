//! Run configuration: one TOML file carrying every tunable the pipeline
//! has, so a run is reproducible from the file plus a seed.
//!
//! Each section is optional and each field has a documented default; an
//! empty file is a complete, working configuration. Unknown keys anywhere
//! are rejected rather than ignored so a typo cannot silently fall back
//! to a default.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use curbscan_core::adaptive::AdaptiveConfig;
use curbscan_core::baseline::MeanMaxConfig;
use curbscan_core::detect::{
    ClassRules, ClusterConfig, FenceMode, GeofencePolygon, TrackerConfig,
};
use curbscan_core::dpgmm::{ClassifyParams, DpgmmConfig};
use curbscan_core::evaluate::Screenline;
use curbscan_core::intensity::{FitOptions, SamplingRate};
use curbscan_core::linalg::Mat3;
use curbscan_core::tensor::{CollisionPolicy, SensorConfig};
use serde::Deserialize;

#[derive(Debug)]
#[non_exhaustive]
pub enum RunConfigError {
    Io(io::Error),
    Parse(toml::de::Error),
    /// A value parsed fine but cannot be turned into a pipeline setting.
    Invalid(String),
}

impl fmt::Display for RunConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            RunConfigError::Parse(e) => write!(f, "cannot parse config: {e}"),
            RunConfigError::Invalid(what) => write!(f, "bad config value: {what}"),
        }
    }
}

impl std::error::Error for RunConfigError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            RunConfigError::Io(e) => Some(e),
            RunConfigError::Parse(e) => Some(e),
            RunConfigError::Invalid(_) => None,
        }
    }
}

impl From<io::Error> for RunConfigError {
    fn from(e: io::Error) -> Self {
        RunConfigError::Io(e)
    }
}

impl From<toml::de::Error> for RunConfigError {
    fn from(e: toml::de::Error) -> Self {
        RunConfigError::Parse(e)
    }
}

fn invalid(what: impl fmt::Display) -> RunConfigError {
    RunConfigError::Invalid(what.to_string())
}

// ---------------------------------------------------------------------

/// The whole configuration file. See the section types for the fields
/// and their defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sensor: SensorSection,
    pub tensor: TensorSection,
    pub intensity: IntensitySection,
    pub dpgmm: DpgmmSection,
    pub classify: ClassifySection,
    pub adaptive: AdaptiveSection,
    pub baseline: BaselineSection,
    pub lof: LofSection,
    pub cluster: ClusterSection,
    pub classes: ClassesSection,
    pub tracker: TrackerSection,
    /// Zero or more `[[geofence]]` polygon blocks; empty means no fencing.
    pub geofence: Vec<FenceSection>,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, RunConfigError> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, RunConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn sensor(&self) -> Result<SensorConfig, RunConfigError> {
        self.sensor.build()
    }

    pub fn collision(&self) -> CollisionPolicy {
        self.tensor.collision.into()
    }

    /// EM settings for the per-cell intensity mixtures. The run seed
    /// comes in from the command line, not the file.
    pub fn fit_options(&self, seed: u64) -> FitOptions {
        FitOptions {
            components: self.intensity.components,
            max_iterations: self.intensity.max_iterations,
            tolerance: self.intensity.tolerance,
            restarts: self.intensity.restarts,
            seed,
            variance_floor: self.intensity.variance_floor,
        }
    }

    pub fn sampling_rate(&self) -> Result<SamplingRate, RunConfigError> {
        SamplingRate::new(self.intensity.sampling_rate).map_err(invalid)
    }

    pub fn dpgmm(&self) -> DpgmmConfig {
        DpgmmConfig {
            alpha: self.dpgmm.alpha,
            kappa0: self.dpgmm.kappa0,
            nu0: self.dpgmm.nu0,
            psi0: Mat3::scaled_identity(self.dpgmm.psi0_scale),
            max_tables: self.dpgmm.max_tables,
            mu0_bootstrap_weight: self.dpgmm.mu0_bootstrap_weight,
            retain_history: false,
        }
    }

    pub fn classify(&self) -> Result<ClassifyParams, RunConfigError> {
        let mut params =
            ClassifyParams::with_prior(self.classify.p_background, self.classify.normalized)
                .map_err(invalid)?;
        if let Some(t) = self.classify.threshold {
            params.threshold = t;
        }
        Ok(params)
    }

    pub fn adaptive(&self) -> AdaptiveConfig {
        AdaptiveConfig {
            max_components: self.adaptive.max_components,
            learning_rate: self.adaptive.learning_rate,
            match_sigma: self.adaptive.match_sigma,
            background_fraction: self.adaptive.background_fraction,
            bootstrap_frames: self.adaptive.bootstrap_frames,
            initial_variance: self.adaptive.initial_variance,
        }
    }

    pub fn baseline(&self) -> MeanMaxConfig {
        MeanMaxConfig { band_m: self.baseline.band_m }
    }

    pub fn cluster(&self) -> ClusterConfig {
        ClusterConfig {
            eps_m: self.cluster.eps_m,
            min_pts: self.cluster.min_pts,
            eps_per_meter: self.cluster.eps_per_meter,
        }
    }

    pub fn class_rules(&self) -> ClassRules {
        ClassRules {
            ped_max_length: self.classes.ped_max_length,
            ped_min_height: self.classes.ped_min_height,
            ped_max_height: self.classes.ped_max_height,
            ped_max_speed: self.classes.ped_max_speed,
            car_min_length: self.classes.car_min_length,
            car_max_length: self.classes.car_max_length,
            car_max_height: self.classes.car_max_height,
            truck_max_length: self.classes.truck_max_length,
            truck_min_height: self.classes.truck_min_height,
            truck_max_height: self.classes.truck_max_height,
            freight_min_length: self.classes.freight_min_length,
            freight_min_height: self.classes.freight_min_height,
        }
    }

    pub fn tracker(&self) -> TrackerConfig {
        TrackerConfig {
            gate_m: self.tracker.gate_m,
            confirm_hits: self.tracker.confirm_hits,
            delete_misses: self.tracker.delete_misses,
            spawn_counts_as_hit: self.tracker.spawn_counts_as_hit,
            velocity_blend: self.tracker.velocity_blend,
        }
    }

    pub fn geofences(&self) -> Result<Vec<GeofencePolygon>, RunConfigError> {
        self.geofence
            .iter()
            .map(|f| {
                GeofencePolygon::new(f.vertices.clone(), f.mode.into()).map_err(invalid)
            })
            .collect()
    }

    pub fn screenline(&self) -> Result<Option<Screenline>, RunConfigError> {
        match self.eval.screenline {
            Some([a, b]) => Screenline::new(a, b).map(Some).map_err(invalid),
            None => Ok(None),
        }
    }
}

// ---------------------------------------------------------------------

/// `[sensor]`: the scanner geometry every stream and model is bound to.
///
/// Defaults describe a 16 beam unit spinning at 10 Hz with 0.4 degree
/// azimuth steps, beams fanned from -15 to +15 degrees elevation, an
/// 80 m range limit and 8 bit intensity.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    /// Beam count when generating elevations; default 16.
    pub beams: u16,
    /// Lowest beam elevation in degrees; default -15.
    pub elevation_start_deg: f64,
    /// Elevation spacing in degrees; default 2.
    pub elevation_step_deg: f64,
    /// Explicit per-beam elevations; overrides the three fields above.
    pub elevation_deg: Option<Vec<f64>>,
    /// Spin rate in Hz; default 10.
    pub rotation_hz: f64,
    /// Azimuth step in degrees; default 0.4 (900 bins).
    pub azimuth_resolution_deg: f64,
    /// Returns beyond this range are dropped; default 80.
    pub max_range_m: f64,
    /// Intensity ceiling; default 255.
    pub max_intensity: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        SensorSection {
            beams: 16,
            elevation_start_deg: -15.0,
            elevation_step_deg: 2.0,
            elevation_deg: None,
            rotation_hz: 10.0,
            azimuth_resolution_deg: 0.4,
            max_range_m: 80.0,
            max_intensity: 255.0,
        }
    }
}

impl SensorSection {
    fn build(&self) -> Result<SensorConfig, RunConfigError> {
        let elevations = match &self.elevation_deg {
            Some(list) => list.clone(),
            None => (0..self.beams)
                .map(|i| self.elevation_start_deg + self.elevation_step_deg * f64::from(i))
                .collect(),
        };
        let mut cfg = SensorConfig::new(
            elevations,
            self.rotation_hz,
            self.azimuth_resolution_deg,
            self.max_range_m,
        )
        .map_err(invalid)?;
        cfg.max_intensity = self.max_intensity;
        Ok(cfg)
    }
}

/// `[tensor]`: how a raw frame becomes one observation per grid cell.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TensorSection {
    /// Which return wins when several land in one cell; default
    /// `"keep-nearest"` (order independent).
    pub collision: CollisionChoice,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollisionChoice {
    #[default]
    KeepNearest,
    KeepStrongest,
    KeepFirst,
}

impl From<CollisionChoice> for CollisionPolicy {
    fn from(c: CollisionChoice) -> Self {
        match c {
            CollisionChoice::KeepNearest => CollisionPolicy::KeepNearest,
            CollisionChoice::KeepStrongest => CollisionPolicy::KeepStrongest,
            CollisionChoice::KeepFirst => CollisionPolicy::KeepFirst,
        }
    }
}

/// `[intensity]`: per-cell intensity mixtures and the weighting they
/// feed into training.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntensitySection {
    /// Mixture size per cell; default 5.
    pub components: usize,
    /// Weight amplification rate; one of 0 (off), 2, 4, 8; default 4.
    pub sampling_rate: u32,
    /// EM iteration cap; default 200.
    pub max_iterations: usize,
    /// EM stops when log-likelihood improves by less; default 1e-6.
    pub tolerance: f64,
    /// Independent EM starts, best likelihood wins; default 3.
    pub restarts: usize,
    /// Variance floor keeping components from collapsing; default 1e-4.
    pub variance_floor: f64,
}

impl Default for IntensitySection {
    fn default() -> Self {
        let f = FitOptions::default();
        IntensitySection {
            components: f.components,
            sampling_rate: u32::from(SamplingRate::default().value()),
            max_iterations: f.max_iterations,
            tolerance: f.tolerance,
            restarts: f.restarts,
            variance_floor: f.variance_floor,
        }
    }
}

/// `[dpgmm]`: the nonparametric per-cell background mixture.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpgmmSection {
    /// Concentration; larger spawns tables sooner; default 1.
    pub alpha: f64,
    /// Prior mean confidence; default 0.1.
    pub kappa0: f64,
    /// Prior covariance degrees of freedom; default 5.
    pub nu0: f64,
    /// Prior scatter is this times the identity; default 0.05.
    pub psi0_scale: f64,
    /// Table cap per cell; weakest is evicted past it; default 10.
    pub max_tables: usize,
    /// Observed weight at which the prior mean stops adapting;
    /// default 20.
    pub mu0_bootstrap_weight: f64,
}

impl Default for DpgmmSection {
    fn default() -> Self {
        let d = DpgmmConfig::default();
        DpgmmSection {
            alpha: d.alpha,
            kappa0: d.kappa0,
            nu0: d.nu0,
            psi0_scale: 0.05,
            max_tables: d.max_tables,
            mu0_bootstrap_weight: d.mu0_bootstrap_weight,
        }
    }
}

/// `[classify]`: how a cell's posterior turns into a label.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    /// Prior probability a cell shows background; default 0.5.
    pub p_background: f64,
    /// Background score at or above which a point is background;
    /// default half of `p_background`.
    pub threshold: Option<f64>,
    /// Divide by the evidence before thresholding; default false.
    pub normalized: bool,
}

impl Default for ClassifySection {
    fn default() -> Self {
        ClassifySection { p_background: 0.5, threshold: None, normalized: false }
    }
}

/// `[adaptive]`: the online per-cell mixture alternative.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveSection {
    /// Components per cell; default 5.
    pub max_components: usize,
    /// Per-observation blend factor; default 0.01.
    pub learning_rate: f64,
    /// Match window in standard deviations; default 2.5.
    pub match_sigma: f64,
    /// Weight share that counts as background; default 0.8.
    pub background_fraction: f64,
    /// Frames before classification starts meaning anything; default 50.
    pub bootstrap_frames: u32,
    /// Variance a fresh component starts with; default 0.25.
    pub initial_variance: f64,
}

impl Default for AdaptiveSection {
    fn default() -> Self {
        let a = AdaptiveConfig::default();
        AdaptiveSection {
            max_components: a.max_components,
            learning_rate: a.learning_rate,
            match_sigma: a.match_sigma,
            background_fraction: a.background_fraction,
            bootstrap_frames: a.bootstrap_frames,
            initial_variance: a.initial_variance,
        }
    }
}

/// `[baseline]`: the mean/max range-band reference model.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    /// Band half-width in meters around the learned range; default 1.
    pub band_m: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection { band_m: MeanMaxConfig::default().band_m }
    }
}

/// `[lof]`: outlier removal ahead of clustering.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LofSection {
    /// Neighborhood size; default 8.
    pub k: usize,
    /// Points scoring above this factor are dropped; default 1.6.
    pub threshold: f64,
}

impl Default for LofSection {
    fn default() -> Self {
        LofSection { k: 8, threshold: 1.6 }
    }
}

/// `[cluster]`: density clustering of surviving foreground points.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    /// Neighborhood radius in meters; default 0.8.
    pub eps_m: f64,
    /// Neighbors needed to seed a cluster; default 5.
    pub min_pts: usize,
    /// Extra radius per meter of range, compensating beam spread;
    /// default 0 (fixed radius).
    pub eps_per_meter: f64,
}

impl Default for ClusterSection {
    fn default() -> Self {
        let c = ClusterConfig::default();
        ClusterSection { eps_m: c.eps_m, min_pts: c.min_pts, eps_per_meter: c.eps_per_meter }
    }
}

/// `[classes]`: box-size and speed cuts that name a detection.
///
/// Lengths and heights are meters, speed is meters per second.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassesSection {
    /// Default 1.2.
    pub ped_max_length: f64,
    /// Default 1.0.
    pub ped_min_height: f64,
    /// Default 2.2.
    pub ped_max_height: f64,
    /// Default 3.0.
    pub ped_max_speed: f64,
    /// Default 3.0.
    pub car_min_length: f64,
    /// Default 6.0.
    pub car_max_length: f64,
    /// Default 2.2.
    pub car_max_height: f64,
    /// Default 10.0.
    pub truck_max_length: f64,
    /// Default 2.2.
    pub truck_min_height: f64,
    /// Default 3.5.
    pub truck_max_height: f64,
    /// Default 10.0.
    pub freight_min_length: f64,
    /// Default 3.5.
    pub freight_min_height: f64,
}

impl Default for ClassesSection {
    fn default() -> Self {
        let r = ClassRules::default();
        ClassesSection {
            ped_max_length: r.ped_max_length,
            ped_min_height: r.ped_min_height,
            ped_max_height: r.ped_max_height,
            ped_max_speed: r.ped_max_speed,
            car_min_length: r.car_min_length,
            car_max_length: r.car_max_length,
            car_max_height: r.car_max_height,
            truck_max_length: r.truck_max_length,
            truck_min_height: r.truck_min_height,
            truck_max_height: r.truck_max_height,
            freight_min_length: r.freight_min_length,
            freight_min_height: r.freight_min_height,
        }
    }
}

/// `[tracker]`: frame-to-frame association and track lifecycle.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerSection {
    /// Association gate in meters; default 3.
    pub gate_m: f64,
    /// Consecutive hits to confirm; default 6.
    pub confirm_hits: u32,
    /// Misses inside the recent-miss window to delete; default 7.
    pub delete_misses: u32,
    /// Whether the spawning detection counts as the first hit;
    /// default true.
    pub spawn_counts_as_hit: bool,
    /// Velocity smoothing factor, 0 freezes and 1 replaces; default 0.5.
    pub velocity_blend: f64,
}

impl Default for TrackerSection {
    fn default() -> Self {
        let t = TrackerConfig::default();
        TrackerSection {
            gate_m: t.gate_m,
            confirm_hits: t.confirm_hits,
            delete_misses: t.delete_misses,
            spawn_counts_as_hit: t.spawn_counts_as_hit,
            velocity_blend: t.velocity_blend,
        }
    }
}

/// One `[[geofence]]` block: a polygon over the ground plane.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FenceSection {
    /// `"include"` keeps only points inside, `"exclude"` drops them;
    /// default include.
    #[serde(default)]
    pub mode: FenceChoice,
    /// Polygon corners as `[x, y]` pairs, at least three.
    pub vertices: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FenceChoice {
    #[default]
    Include,
    Exclude,
}

impl From<FenceChoice> for FenceMode {
    fn from(c: FenceChoice) -> Self {
        match c {
            FenceChoice::Include => FenceMode::Include,
            FenceChoice::Exclude => FenceMode::Exclude,
        }
    }
}

/// `[eval]`: scoring knobs.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Centroid distance within which a detection matches a true
    /// object; default 2 m.
    pub match_radius_m: f64,
    /// Repeat screenline crossings by one track within this window are
    /// counted once; default 1 s.
    pub debounce_s: f64,
    /// Counting line as `[[x1, y1], [x2, y2]]`; default none.
    pub screenline: Option<[[f64; 2]; 2]>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { match_radius_m: 2.0, debounce_s: 1.0, screenline: None }
    }
}
