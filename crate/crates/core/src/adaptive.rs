//! Classical adaptive Gaussian-mixture background cell, the real-time
//! companion to the Bayesian model.
//!
//! Each cell holds up to K isotropic Gaussians over the 3-D return
//! position. A return is matched to the nearest component within a
//! Mahalanobis gate; a match reinforces that component while the rest
//! decay, a miss births a new component in place of the weakest.
//! Components ranked by weight over spread form the background up to a
//! cumulative weight fraction. A zero learning rate freezes the cell.

use crate::intensity::PointWeight;
use crate::linalg::Vec3;
use crate::model::Label;
use crate::tensor::CellObservation;
use alloc::vec::Vec;
use core::fmt;

/// Smallest allowed per-axis variance; keeps gates and ranking finite
/// when a component sees identical points forever.
pub const VARIANCE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[non_exhaustive]
pub enum AdaptiveError {
    InvalidConfig(&'static str),
    InvalidComponent(&'static str),
    NonFiniteObservation,
}

impl fmt::Display for AdaptiveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdaptiveError::InvalidConfig(which) => write!(f, "invalid config field: {which}"),
            AdaptiveError::InvalidComponent(which) => {
                write!(f, "invalid component field: {which}")
            }
            AdaptiveError::NonFiniteObservation => {
                write!(f, "observation coordinates must be finite")
            }
        }
    }
}

impl core::error::Error for AdaptiveError {}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig {
    pub max_components: usize,
    /// Per-frame blend factor; zero freezes the cell entirely.
    pub learning_rate: f64,
    /// Match gate in standard deviations: a component matches when
    /// `|x - mean| <= match_sigma * sqrt(variance)`.
    pub match_sigma: f64,
    /// Cumulative normalized weight that delimits the background prefix.
    pub background_fraction: f64,
    /// Frames during which every observation is labeled background while
    /// the cell trains.
    pub bootstrap_frames: u32,
    /// Per-axis variance assigned to a newborn component.
    pub initial_variance: f64,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            max_components: 5,
            learning_rate: 0.01,
            match_sigma: 2.5,
            background_fraction: 0.8,
            bootstrap_frames: 50,
            initial_variance: 0.25,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<(), AdaptiveError> {
        if self.max_components == 0 {
            return Err(AdaptiveError::InvalidConfig("max_components"));
        }
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(AdaptiveError::InvalidConfig("learning_rate"));
        }
        if !(self.match_sigma > 0.0) || !self.match_sigma.is_finite() {
            return Err(AdaptiveError::InvalidConfig("match_sigma"));
        }
        if !(self.background_fraction > 0.0 && self.background_fraction < 1.0) {
            return Err(AdaptiveError::InvalidConfig("background_fraction"));
        }
        if !(self.initial_variance > 0.0) || !self.initial_variance.is_finite() {
            return Err(AdaptiveError::InvalidConfig("initial_variance"));
        }
        Ok(())
    }
}

/// One isotropic mixture component: covariance `variance * I`, so
/// `variance` is the per-axis variance and the Mahalanobis distance is
/// `|x - mean| / sqrt(variance)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveComponent {
    pub weight: f64,
    pub mean: Vec3,
    pub variance: f64,
}

impl AdaptiveComponent {
    pub fn spread(&self) -> f64 {
        libm::sqrt(self.variance.max(VARIANCE_FLOOR))
    }
}

/// Indices of the background components: rank everything by
/// `weight / spread` descending (ties toward the lower index), then take
/// the shortest prefix whose cumulative weight share exceeds `fraction`.
/// Weights are normalized internally, so a uniform rescaling of all
/// weights leaves the result unchanged.
pub fn rank_background(components: &[AdaptiveComponent], fraction: f64) -> Vec<usize> {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if !(total > 0.0) {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..components.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = components[a].weight / components[a].spread();
        let rb = components[b].weight / components[b].spread();
        rb.partial_cmp(&ra).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut prefix = Vec::new();
    let mut cum = 0.0;
    for idx in order {
        cum += components[idx].weight / total;
        prefix.push(idx);
        if cum > fraction {
            break;
        }
    }
    prefix
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdaptiveCell {
    components: Vec<AdaptiveComponent>,
    frames_seen: u64,
    no_return_weight: f64,
    total_weight: f64,
}

impl AdaptiveCell {
    pub fn new() -> Self {
        AdaptiveCell::default()
    }

    /// Rebuilds a cell from persisted parts.
    pub fn from_parts(
        components: Vec<AdaptiveComponent>,
        frames_seen: u64,
        no_return_weight: f64,
        total_weight: f64,
    ) -> Result<Self, AdaptiveError> {
        let mut sum = 0.0;
        for c in &components {
            if !(c.weight >= 0.0) || !c.weight.is_finite() {
                return Err(AdaptiveError::InvalidComponent("weight"));
            }
            if !c.mean.is_finite() {
                return Err(AdaptiveError::InvalidComponent("mean"));
            }
            if !(c.variance > 0.0) || !c.variance.is_finite() {
                return Err(AdaptiveError::InvalidComponent("variance"));
            }
            sum += c.weight;
        }
        if !components.is_empty() && libm::fabs(sum - 1.0) > 1e-9 {
            return Err(AdaptiveError::InvalidComponent("weights must sum to 1"));
        }
        if !(no_return_weight >= 0.0)
            || !(total_weight >= no_return_weight)
            || !total_weight.is_finite()
        {
            return Err(AdaptiveError::InvalidComponent("observation masses"));
        }
        Ok(AdaptiveCell { components, frames_seen, no_return_weight, total_weight })
    }

    pub fn components(&self) -> &[AdaptiveComponent] {
        &self.components
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    pub fn no_return_weight(&self) -> f64 {
        self.no_return_weight
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Labels the observation against the current (pre-update) model.
    ///
    /// Returns: background iff the nearest in-gate component sits in the
    /// background prefix; no match means foreground. No-returns: background
    /// iff at least half the accumulated observation mass was no-return; a
    /// cell that has seen nothing treats silence as background. Everything
    /// is background inside the bootstrap window.
    pub fn classify(
        &self,
        obs: &CellObservation,
        cfg: &AdaptiveConfig,
    ) -> Result<Label, AdaptiveError> {
        let in_bootstrap = self.frames_seen < cfg.bootstrap_frames as u64;
        match *obs {
            CellObservation::NoReturn => {
                if in_bootstrap || self.total_weight <= 0.0 {
                    return Ok(Label::Background);
                }
                if self.no_return_weight / self.total_weight >= 0.5 {
                    Ok(Label::Background)
                } else {
                    Ok(Label::Foreground)
                }
            }
            CellObservation::Return { xyz, .. } => {
                if !xyz.is_finite() {
                    return Err(AdaptiveError::NonFiniteObservation);
                }
                if in_bootstrap {
                    return Ok(Label::Background);
                }
                match self.nearest_match(xyz, cfg) {
                    Some(idx) => {
                        let prefix = rank_background(&self.components, cfg.background_fraction);
                        if prefix.contains(&idx) {
                            Ok(Label::Background)
                        } else {
                            Ok(Label::Foreground)
                        }
                    }
                    None => Ok(Label::Foreground),
                }
            }
        }
    }

    /// Labels the observation, then folds it in at the given weight. A
    /// zero learning rate freezes the cell: the call is then equivalent
    /// to [`classify`](Self::classify).
    pub fn update_and_classify(
        &mut self,
        obs: &CellObservation,
        weight: PointWeight,
        cfg: &AdaptiveConfig,
    ) -> Result<Label, AdaptiveError> {
        let label = self.classify(obs, cfg)?;
        if cfg.learning_rate > 0.0 {
            self.learn(obs, weight, cfg);
        }
        Ok(label)
    }

    /// Nearest component by Mahalanobis distance among those whose gate
    /// contains the point; ties toward the lower index.
    fn nearest_match(&self, x: Vec3, cfg: &AdaptiveConfig) -> Option<usize> {
        let gate2 = cfg.match_sigma * cfg.match_sigma;
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.components.iter().enumerate() {
            let m2 = x.dist2(c.mean) / c.variance.max(VARIANCE_FLOOR);
            if m2 <= gate2 && best.map_or(true, |(_, b)| m2 < b) {
                best = Some((i, m2));
            }
        }
        best.map(|(i, _)| i)
    }

    fn learn(&mut self, obs: &CellObservation, weight: PointWeight, cfg: &AdaptiveConfig) {
        let w = weight.value();
        self.frames_seen += 1;
        let xyz = match *obs {
            CellObservation::NoReturn => {
                self.no_return_weight += w;
                self.total_weight += w;
                return;
            }
            CellObservation::Return { xyz, .. } => xyz,
        };
        self.total_weight += w;

        // A weight-w observation counts as w consecutive frames for the
        // weight recursion; unit weight keeps the plain rate bit-exactly.
        let lambda = if w == 1.0 {
            cfg.learning_rate
        } else {
            1.0 - libm::pow(1.0 - cfg.learning_rate, w)
        };

        match self.nearest_match(xyz, cfg) {
            Some(idx) => {
                // Matched: reinforce it, decay the rest. This preserves
                // the weight sum exactly.
                for (i, c) in self.components.iter_mut().enumerate() {
                    if i == idx {
                        c.weight = (1.0 - lambda) * c.weight + lambda;
                    } else {
                        c.weight *= 1.0 - lambda;
                    }
                }
                // rho <= 1 because the reinforced weight is at least lambda.
                let c = &mut self.components[idx];
                let rho = lambda / c.weight;
                c.mean = c.mean * (1.0 - rho) + xyz * rho;
                let d2 = xyz.dist2(c.mean) / 3.0;
                c.variance = ((1.0 - rho) * c.variance + rho * d2).max(VARIANCE_FLOOR);
            }
            None => {
                // Miss: every seated component decays, and a newborn takes
                // the weakest slot once the cell is full.
                for c in self.components.iter_mut() {
                    c.weight *= 1.0 - lambda;
                }
                let newborn = AdaptiveComponent {
                    weight: lambda,
                    mean: xyz,
                    variance: cfg.initial_variance,
                };
                if self.components.len() < cfg.max_components {
                    self.components.push(newborn);
                } else {
                    let weakest = self
                        .components
                        .iter()
                        .enumerate()
                        .min_by(|(_, a), (_, b)| {
                            a.weight.partial_cmp(&b.weight).unwrap_or(core::cmp::Ordering::Equal)
                        })
                        .map(|(i, _)| i)
                        .expect("max_components > 0");
                    self.components[weakest] = newborn;
                }
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if total > 0.0 {
            for c in self.components.iter_mut() {
                c.weight /= total;
            }
        }
    }
}
