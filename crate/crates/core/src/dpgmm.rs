//! Per-cell weighted Dirichlet-process Gaussian mixture background model.
//!
//! Each grid cell runs an independent Chinese-restaurant process over the
//! 3-D returns it has seen. Tables carry weighted sufficient statistics
//! under a normal-inverse-Wishart prior, so the posterior predictive of a
//! table is a multivariate Student-t and can be kept factored. Streaming
//! updates are hard-MAP (the new point joins the highest-scoring table, or
//! opens one); an optional buffered Gibbs pass re-samples assignments in
//! batch.
//!
//! Observation weights come from the intensity mixture: an update with
//! weight w is defined to equal w consecutive unit updates of the same
//! point, which is why tables store raw weighted moments rather than
//! incremental posterior parameters.

use crate::intensity::PointWeight;
use crate::linalg::{Chol3, Mat3, Vec3};
use crate::model::Label;
use crate::tensor::CellObservation;
use alloc::vec::Vec;
use core::fmt;
use rand::Rng;

const LN_PI: f64 = 1.144729885849400174143427351353;
const LN_2PI: f64 = 1.837877066409345483560659472811;
/// Ridge added to predictive scale matrices before factorization.
const SCALE_RIDGE: f64 = 1e-6;
const DIM: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[non_exhaustive]
pub enum DpgmmError {
    /// Cell has no tables (or no mass at all) to classify against.
    EmptyModel,
    NonFiniteObservation,
    /// Gibbs refinement requested but the training history was not kept.
    NoHistory,
    InvalidParameter(&'static str),
    MismatchedLengths { counts: usize, weights: usize },
    /// Scale matrix lost positive definiteness beyond repair.
    Degenerate,
}

impl fmt::Display for DpgmmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DpgmmError::EmptyModel => write!(f, "cell model holds no mass"),
            DpgmmError::NonFiniteObservation => write!(f, "observation has non-finite coordinates"),
            DpgmmError::NoHistory => write!(f, "training history was not retained"),
            DpgmmError::InvalidParameter(which) => write!(f, "invalid parameter: {which}"),
            DpgmmError::MismatchedLengths { counts, weights } => {
                write!(f, "{counts} counts against {weights} weights")
            }
            DpgmmError::Degenerate => write!(f, "scale matrix is not positive definite"),
        }
    }
}

impl core::error::Error for DpgmmError {}

/// Normal-inverse-Wishart prior over a table's mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwPrior {
    pub mean: Vec3,
    pub kappa: f64,
    pub nu: f64,
    pub psi: Mat3,
}

impl NiwPrior {
    pub fn new(mean: Vec3, kappa: f64, nu: f64, psi: Mat3) -> Result<Self, DpgmmError> {
        if !mean.is_finite() {
            return Err(DpgmmError::InvalidParameter("prior mean"));
        }
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(DpgmmError::InvalidParameter("kappa"));
        }
        // d - 1 = 2: below this the predictive has no degrees of freedom.
        if !(nu > 2.0) || !nu.is_finite() {
            return Err(DpgmmError::InvalidParameter("nu"));
        }
        if !psi.is_finite() || !psi.is_symmetric(1e-12) || psi.cholesky().is_none() {
            return Err(DpgmmError::InvalidParameter("psi"));
        }
        Ok(NiwPrior { mean, kappa, nu, psi })
    }

    /// Prior predictive (the posterior predictive of an empty table).
    pub fn predictive(&self) -> Result<StudentT3, DpgmmError> {
        let dof = self.nu - DIM + 1.0;
        let scale = self.psi.scale((self.kappa + 1.0) / (self.kappa * dof));
        StudentT3::new(self.mean, dof, scale)
    }
}

/// Multivariate Student-t over R^3, factored for repeated evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentT3 {
    location: Vec3,
    dof: f64,
    scale: Mat3,
    chol: Chol3,
    ln_norm: f64,
}

impl StudentT3 {
    /// `scale` is ridged by `1e-6 I` before factorization; tables built
    /// from nearly coincident points stay usable.
    pub fn new(location: Vec3, dof: f64, scale: Mat3) -> Result<Self, DpgmmError> {
        if !(dof > 0.0) || !dof.is_finite() || !location.is_finite() || !scale.is_finite() {
            return Err(DpgmmError::InvalidParameter("student-t parameters"));
        }
        let ridged = scale + Mat3::scaled_identity(SCALE_RIDGE);
        let chol = ridged.cholesky().ok_or(DpgmmError::Degenerate)?;
        let ln_norm = libm::lgamma((dof + DIM) / 2.0)
            - libm::lgamma(dof / 2.0)
            - (DIM / 2.0) * (libm::log(dof) + LN_PI)
            - 0.5 * chol.ln_det();
        Ok(StudentT3 { location, dof, scale: ridged, chol, ln_norm })
    }

    pub fn location(&self) -> Vec3 {
        self.location
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn scale(&self) -> &Mat3 {
        &self.scale
    }

    pub fn ln_density(&self, x: Vec3) -> f64 {
        let q = self.chol.quad_form(x - self.location);
        self.ln_norm - (self.dof + DIM) / 2.0 * libm::log1p(q / self.dof)
    }

    pub fn density(&self, x: Vec3) -> f64 {
        libm::exp(self.ln_density(x))
    }
}

/// One CRP table: weighted raw moments plus the cached posterior
/// predictive under the cell's current prior.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTable {
    id: u64,
    created_frame: u64,
    weight: f64,
    sum: Vec3,
    scatter: Mat3,
    predictive: StudentT3,
}

/// Raw persisted form of a table; predictive caches are rebuilt on load.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub id: u64,
    pub created_frame: u64,
    pub weight: f64,
    pub sum: Vec3,
    pub scatter: Mat3,
}

/// Posterior NIW parameters of one table.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwPosterior {
    pub mean: Vec3,
    pub kappa: f64,
    pub nu: f64,
    pub psi: Mat3,
}

impl MixtureTable {
    fn open(prior: &NiwPrior, x: Vec3, w: f64, id: u64, frame: u64) -> Result<Self, DpgmmError> {
        let mut t = MixtureTable {
            id,
            created_frame: frame,
            weight: w,
            sum: x * w,
            scatter: x.outer().scale(w),
            predictive: prior.predictive()?,
        };
        t.refresh(prior)?;
        Ok(t)
    }

    fn from_raw(raw: RawTable, prior: &NiwPrior) -> Result<Self, DpgmmError> {
        if !(raw.weight > 0.0) || !raw.sum.is_finite() || !raw.scatter.is_finite() {
            return Err(DpgmmError::InvalidParameter("raw table moments"));
        }
        let mut t = MixtureTable {
            id: raw.id,
            created_frame: raw.created_frame,
            weight: raw.weight,
            sum: raw.sum,
            scatter: raw.scatter,
            predictive: prior.predictive()?,
        };
        t.refresh(prior)?;
        Ok(t)
    }

    fn absorb(&mut self, prior: &NiwPrior, x: Vec3, w: f64) -> Result<(), DpgmmError> {
        self.weight += w;
        self.sum += x * w;
        self.scatter += x.outer().scale(w);
        self.refresh(prior)
    }

    /// Removes mass; returns false once the table is empty.
    fn downdate(&mut self, prior: &NiwPrior, x: Vec3, w: f64) -> Result<bool, DpgmmError> {
        self.weight -= w;
        self.sum -= x * w;
        self.scatter -= x.outer().scale(w);
        if self.weight <= 1e-12 {
            return Ok(false);
        }
        self.refresh(prior)?;
        Ok(true)
    }

    fn refresh(&mut self, prior: &NiwPrior) -> Result<(), DpgmmError> {
        let post = self.posterior(prior);
        let dof = post.nu - DIM + 1.0;
        let scale = post.psi.scale((post.kappa + 1.0) / (post.kappa * dof));
        self.predictive = StudentT3::new(post.mean, dof, scale)?;
        Ok(())
    }

    /// Conjugate NIW update with the table's weighted moments.
    pub fn posterior(&self, prior: &NiwPrior) -> NiwPosterior {
        let w = self.weight;
        let kappa = prior.kappa + w;
        let nu = prior.nu + w;
        let mean = (prior.mean * prior.kappa + self.sum) * (1.0 / kappa);
        let xbar = self.sum * (1.0 / w);
        // Weighted scatter about the weighted mean.
        let centered = self.scatter - xbar.outer().scale(w);
        let gap = xbar - prior.mean;
        let psi = prior.psi + centered + gap.outer().scale(prior.kappa * w / kappa);
        NiwPosterior { mean, kappa, nu, psi }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn created_frame(&self) -> u64 {
        self.created_frame
    }

    /// Accumulated observation weight at this table (the CRP seat count).
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn predictive(&self) -> &StudentT3 {
        &self.predictive
    }

    pub fn raw(&self) -> RawTable {
        RawTable {
            id: self.id,
            created_frame: self.created_frame,
            weight: self.weight,
            sum: self.sum,
            scatter: self.scatter,
        }
    }
}

/// Cell-model hyperparameters, shared across the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DpgmmConfig {
    /// CRP concentration.
    pub alpha: f64,
    pub kappa0: f64,
    pub nu0: f64,
    pub psi0: Mat3,
    /// Hard cap on concurrently tracked tables.
    pub max_tables: usize,
    /// Accumulated return weight after which the per-cell prior mean
    /// freezes at the running mean of what arrived so far.
    pub mu0_bootstrap_weight: f64,
    /// Keep (point, weight, table) triples for Gibbs refinement.
    pub retain_history: bool,
}

impl Default for DpgmmConfig {
    fn default() -> Self {
        DpgmmConfig {
            alpha: 1.0,
            kappa0: 0.1,
            nu0: 5.0,
            psi0: Mat3::scaled_identity(0.05),
            max_tables: 10,
            mu0_bootstrap_weight: 20.0,
            retain_history: false,
        }
    }
}

impl DpgmmConfig {
    pub fn validate(&self) -> Result<(), DpgmmError> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(DpgmmError::InvalidParameter("alpha"));
        }
        if self.max_tables == 0 {
            return Err(DpgmmError::InvalidParameter("max_tables"));
        }
        if !(self.mu0_bootstrap_weight > 0.0) {
            return Err(DpgmmError::InvalidParameter("mu0_bootstrap_weight"));
        }
        // Full prior validation, reusing the constructor checks.
        NiwPrior::new(Vec3::ZERO, self.kappa0, self.nu0, self.psi0).map(|_| ())
    }
}

/// Buffered training observation, for Gibbs refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub x: Vec3,
    pub weight: f64,
    pub table: u64,
}

/// Decision thresholds for background classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyParams {
    /// Prior probability that a cell observation is background.
    pub p_background: f64,
    /// Decision level on the posterior; defaults to `p_background / 2`,
    /// which reduces to "density under the model at least 1".
    pub threshold: f64,
    /// Use the fully normalized posterior denominator instead of the
    /// published unnormalized form.
    pub normalized: bool,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams::with_prior(0.5, false).expect("0.5 is a valid prior")
    }
}

impl ClassifyParams {
    pub fn with_prior(p_background: f64, normalized: bool) -> Result<Self, DpgmmError> {
        if !(p_background > 0.0 && p_background < 1.0) {
            return Err(DpgmmError::InvalidParameter("p_background"));
        }
        Ok(ClassifyParams { p_background, threshold: p_background / 2.0, normalized })
    }
}

/// Classification outcome for one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BgDecision {
    pub p_background: f64,
    pub label: Label,
}

/// Posterior background probability given the background likelihood.
///
/// The published form keeps the foreground likelihood as an unnormalized
/// constant 1 in the denominator: `p = L * p_b / (L + 1)`. The normalized
/// variant mixes the priors in: `p = L * p_b / (L * p_b + (1 - p_b))`.
/// Both are monotone in `L`.
pub fn background_posterior(likelihood: f64, params: &ClassifyParams) -> f64 {
    let l = likelihood.max(0.0);
    let p_b = params.p_background;
    if params.normalized {
        let denom = l * p_b + (1.0 - p_b);
        if denom > 0.0 {
            l * p_b / denom
        } else {
            0.0
        }
    } else {
        l * p_b / (l + 1.0)
    }
}

/// One grid cell's background mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct DpgmmCell {
    tables: Vec<MixtureTable>,
    next_table_id: u64,
    no_return_weight: f64,
    total_weight: f64,
    mu0_sum: Vec3,
    mu0_weight: f64,
    mu0_frozen: bool,
    prior_predictive: Option<StudentT3>,
    history: Option<Vec<HistoryEntry>>,
}

impl DpgmmCell {
    pub fn new(cfg: &DpgmmConfig) -> Self {
        DpgmmCell {
            tables: Vec::new(),
            next_table_id: 0,
            no_return_weight: 0.0,
            total_weight: 0.0,
            mu0_sum: Vec3::ZERO,
            mu0_weight: 0.0,
            mu0_frozen: false,
            prior_predictive: None,
            history: if cfg.retain_history { Some(Vec::new()) } else { None },
        }
    }

    /// Current per-cell prior. Before any return arrives the mean is the
    /// origin; afterwards it is the (frozen or still-running) early mean.
    pub fn prior(&self, cfg: &DpgmmConfig) -> NiwPrior {
        let mean = if self.mu0_weight > 0.0 {
            self.mu0_sum * (1.0 / self.mu0_weight)
        } else {
            Vec3::ZERO
        };
        NiwPrior { mean, kappa: cfg.kappa0, nu: cfg.nu0, psi: cfg.psi0 }
    }

    pub fn tables(&self) -> &[MixtureTable] {
        &self.tables
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn no_return_weight(&self) -> f64 {
        self.no_return_weight
    }

    pub fn history(&self) -> Option<&[HistoryEntry]> {
        self.history.as_deref()
    }

    /// Absorbs one frame's observation at the given confidence weight.
    pub fn update(
        &mut self,
        obs: &CellObservation,
        weight: PointWeight,
        frame_id: u64,
        cfg: &DpgmmConfig,
    ) -> Result<(), DpgmmError> {
        let w = weight.value();
        match *obs {
            CellObservation::NoReturn => {
                self.no_return_weight += w;
                self.total_weight += w;
                Ok(())
            }
            CellObservation::Return { xyz, .. } => {
                if !xyz.is_finite() {
                    return Err(DpgmmError::NonFiniteObservation);
                }
                self.total_weight += w;
                self.advance_mu0(xyz, w, cfg)?;
                let prior = self.prior(cfg);

                let (best_existing, new_score) = self.best_assignment(xyz, cfg);
                let assigned = match best_existing {
                    // Ties favor the seated table; a new table must win
                    // strictly.
                    Some((idx, score)) if score >= new_score => {
                        self.tables[idx].absorb(&prior, xyz, w)?;
                        self.tables[idx].id
                    }
                    _ => {
                        let id = self.next_table_id;
                        self.next_table_id += 1;
                        self.tables.push(MixtureTable::open(&prior, xyz, w, id, frame_id)?);
                        id
                    }
                };
                if let Some(h) = self.history.as_mut() {
                    h.push(HistoryEntry { x: xyz, weight: w, table: assigned });
                }
                self.evict_over_cap(cfg);
                Ok(())
            }
        }
    }

    fn advance_mu0(&mut self, x: Vec3, w: f64, cfg: &DpgmmConfig) -> Result<(), DpgmmError> {
        if self.mu0_frozen {
            return Ok(());
        }
        self.mu0_sum += x * w;
        self.mu0_weight += w;
        if self.mu0_weight >= cfg.mu0_bootstrap_weight {
            self.mu0_frozen = true;
        }
        // The prior mean moved: every cached predictive is stale.
        let prior = self.prior(cfg);
        for t in self.tables.iter_mut() {
            t.refresh(&prior)?;
        }
        self.prior_predictive = Some(prior.predictive()?);
        Ok(())
    }

    fn prior_predictive(&self, cfg: &DpgmmConfig) -> Result<StudentT3, DpgmmError> {
        match &self.prior_predictive {
            Some(p) => Ok(p.clone()),
            None => self.prior(cfg).predictive(),
        }
    }

    /// Log assignment scores: `ln(s_t) + ln t_t(x)` per table, and
    /// `ln(alpha) + ln t_prior(x)` for opening a new table.
    pub fn assignment_ln_scores(
        &self,
        x: Vec3,
        cfg: &DpgmmConfig,
    ) -> Result<(Vec<f64>, f64), DpgmmError> {
        let existing = self
            .tables
            .iter()
            .map(|t| libm::log(t.weight) + t.predictive.ln_density(x))
            .collect();
        let fresh = libm::log(cfg.alpha) + self.prior_predictive(cfg)?.ln_density(x);
        Ok((existing, fresh))
    }

    fn best_assignment(&self, x: Vec3, cfg: &DpgmmConfig) -> (Option<(usize, f64)>, f64) {
        let mut best: Option<(usize, f64)> = None;
        for (i, t) in self.tables.iter().enumerate() {
            let score = libm::log(t.weight) + t.predictive.ln_density(x);
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        let fresh = libm::log(cfg.alpha)
            + self
                .prior_predictive(cfg)
                .map(|p| p.ln_density(x))
                .unwrap_or(f64::NEG_INFINITY);
        (best, fresh)
    }

    /// Drops the lowest-weight table until the cap holds, a newly opened
    /// table included. Ties break toward the oldest seat.
    fn evict_over_cap(&mut self, cfg: &DpgmmConfig) {
        while self.tables.len() > cfg.max_tables {
            let mut min_idx = 0usize;
            for (i, t) in self.tables.iter().enumerate().skip(1) {
                if t.weight < self.tables[min_idx].weight {
                    min_idx = i;
                }
            }
            self.tables.remove(min_idx);
        }
    }

    /// Mixture likelihood of a return under the background model,
    /// Sum_t (s_t / Sum_i s_i) t_t(x), accumulated in log space.
    pub fn background_likelihood(&self, x: Vec3) -> Result<f64, DpgmmError> {
        if self.tables.is_empty() {
            return Err(DpgmmError::EmptyModel);
        }
        if !x.is_finite() {
            return Err(DpgmmError::NonFiniteObservation);
        }
        let mut terms: Vec<f64> = Vec::with_capacity(self.tables.len());
        let mut ln_total_weight = f64::NEG_INFINITY;
        for t in &self.tables {
            terms.push(libm::log(t.weight) + t.predictive.ln_density(x));
            ln_total_weight = log_add(ln_total_weight, libm::log(t.weight));
        }
        let ln_mix = terms.iter().fold(f64::NEG_INFINITY, |a, &b| log_add(a, b));
        Ok(libm::exp(ln_mix - ln_total_weight))
    }

    /// Labels one observation without touching the model.
    ///
    /// Returns classify through the posterior in [`background_posterior`];
    /// no-returns are background when at least half the cell's past weight
    /// was no-return.
    pub fn classify(
        &self,
        obs: &CellObservation,
        params: &ClassifyParams,
    ) -> Result<BgDecision, DpgmmError> {
        match *obs {
            CellObservation::Return { xyz, .. } => {
                let likelihood = self.background_likelihood(xyz)?;
                let p = background_posterior(likelihood, params);
                let label =
                    if p >= params.threshold { Label::Background } else { Label::Foreground };
                Ok(BgDecision { p_background: p, label })
            }
            CellObservation::NoReturn => {
                if self.total_weight <= 0.0 {
                    return Err(DpgmmError::EmptyModel);
                }
                let ratio = self.no_return_weight / self.total_weight;
                let label =
                    if ratio >= 0.5 { Label::Background } else { Label::Foreground };
                Ok(BgDecision { p_background: ratio, label })
            }
        }
    }

    /// Normalized CRP conditionals for re-seating `x`: per-table
    /// probabilities and the new-table probability. They sum to 1.
    pub fn crp_conditionals(
        &self,
        x: Vec3,
        cfg: &DpgmmConfig,
    ) -> Result<(Vec<f64>, f64), DpgmmError> {
        let (mut scores, fresh) = self.assignment_ln_scores(x, cfg)?;
        let mut ln_z = fresh;
        for &s in &scores {
            ln_z = log_add(ln_z, s);
        }
        for s in scores.iter_mut() {
            *s = libm::exp(*s - ln_z);
        }
        Ok((scores, libm::exp(fresh - ln_z)))
    }

    /// Batch re-seating of the buffered training points by full CRP
    /// conditional sampling. Returns the joint log-posterior (CRP seating
    /// probability plus per-table marginal evidence) after each sweep.
    pub fn gibbs_refine<R: Rng + ?Sized>(
        &mut self,
        sweeps: usize,
        cfg: &DpgmmConfig,
        rng: &mut R,
    ) -> Result<Vec<f64>, DpgmmError> {
        if self.history.is_none() {
            return Err(DpgmmError::NoHistory);
        }
        let mut scores = Vec::with_capacity(sweeps);
        for _ in 0..sweeps {
            let n = self.history.as_ref().map_or(0, Vec::len);
            for i in 0..n {
                let entry = self.history.as_ref().expect("checked above")[i];
                let prior = self.prior(cfg);

                // Remove the point from its table; ids can be stale when
                // the table was evicted, in which case its mass is already
                // gone.
                if let Some(pos) = self.tables.iter().position(|t| t.id == entry.table) {
                    let keep = self.tables[pos].downdate(&prior, entry.x, entry.weight)?;
                    if !keep {
                        self.tables.remove(pos);
                    }
                }

                let (probs, _fresh) = self.crp_conditionals(entry.x, cfg)?;
                let draw: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen: Option<usize> = None;
                for (ti, &p) in probs.iter().enumerate() {
                    acc += p;
                    if draw < acc {
                        chosen = Some(ti);
                        break;
                    }
                }
                let table_id = match chosen {
                    Some(ti) => {
                        self.tables[ti].absorb(&prior, entry.x, entry.weight)?;
                        self.tables[ti].id
                    }
                    None => {
                        let id = self.next_table_id;
                        self.next_table_id += 1;
                        self.tables.push(MixtureTable::open(
                            &prior,
                            entry.x,
                            entry.weight,
                            id,
                            entry.table,
                        )?);
                        id
                    }
                };
                self.history.as_mut().expect("checked above")[i].table = table_id;
                self.evict_over_cap(cfg);
            }
            scores.push(self.joint_ln_posterior(cfg));
        }
        Ok(scores)
    }

    /// CRP seating probability of the current partition plus the NIW
    /// marginal evidence of each table's weighted data.
    pub fn joint_ln_posterior(&self, cfg: &DpgmmConfig) -> f64 {
        let prior = self.prior(cfg);
        let w_total: f64 = self.tables.iter().map(|t| t.weight).sum();
        let mut lp = self.tables.len() as f64 * libm::log(cfg.alpha);
        lp += libm::lgamma(cfg.alpha) - libm::lgamma(cfg.alpha + w_total);
        let prior_ln_z = niw_ln_z(&prior, prior.kappa, prior.nu);
        for t in &self.tables {
            lp += libm::lgamma(t.weight.max(f64::MIN_POSITIVE));
            let post = t.posterior(&prior);
            let post_ln_z = niw_ln_z_params(post.kappa, post.nu, &post.psi);
            lp += post_ln_z - prior_ln_z - t.weight * DIM / 2.0 * LN_2PI;
        }
        lp
    }

    /// Rebuilds a cell from persisted parts. `mu0_sum` is the raw weighted
    /// accumulator behind the adaptive prior mean (stored verbatim so a
    /// load/save round trip is bit-exact); `mu0_weight` decides whether
    /// the prior mean is still adapting.
    pub fn from_parts(
        mu0_sum: Vec3,
        mu0_weight: f64,
        raw_tables: Vec<RawTable>,
        no_return_weight: f64,
        total_weight: f64,
        next_table_id: u64,
        history: Option<Vec<HistoryEntry>>,
        cfg: &DpgmmConfig,
    ) -> Result<Self, DpgmmError> {
        let mut cell = DpgmmCell {
            tables: Vec::with_capacity(raw_tables.len()),
            next_table_id,
            no_return_weight,
            total_weight,
            mu0_sum,
            mu0_weight,
            mu0_frozen: mu0_weight >= cfg.mu0_bootstrap_weight,
            prior_predictive: None,
            history,
        };
        let prior = cell.prior(cfg);
        cell.prior_predictive = Some(prior.predictive()?);
        for raw in raw_tables {
            cell.tables.push(MixtureTable::from_raw(raw, &prior)?);
        }
        Ok(cell)
    }

    pub fn mu0_mean(&self) -> Vec3 {
        if self.mu0_weight > 0.0 {
            self.mu0_sum * (1.0 / self.mu0_weight)
        } else {
            Vec3::ZERO
        }
    }

    /// Raw weighted accumulator behind [`Self::mu0_mean`]; what
    /// [`Self::from_parts`] expects back.
    pub fn mu0_sum(&self) -> Vec3 {
        self.mu0_sum
    }

    pub fn mu0_weight(&self) -> f64 {
        self.mu0_weight
    }

    pub fn next_table_id(&self) -> u64 {
        self.next_table_id
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + libm::log1p(libm::exp(lo - hi))
}

fn ln_multigamma3(a: f64) -> f64 {
    // Gamma_3(a) = pi^(3/2) Gamma(a) Gamma(a - 1/2) Gamma(a - 1)
    1.5 * LN_PI + libm::lgamma(a) + libm::lgamma(a - 0.5) + libm::lgamma(a - 1.0)
}

fn niw_ln_z(prior: &NiwPrior, kappa: f64, nu: f64) -> f64 {
    niw_ln_z_with_psi(kappa, nu, &prior.psi)
}

fn niw_ln_z_params(kappa: f64, nu: f64, psi: &Mat3) -> f64 {
    niw_ln_z_with_psi(kappa, nu, psi)
}

fn niw_ln_z_with_psi(kappa: f64, nu: f64, psi: &Mat3) -> f64 {
    let ln_det = psi
        .cholesky()
        .map(|c| c.ln_det())
        .unwrap_or_else(|| {
            // Ridged fallback mirrors the predictive construction.
            (*psi + Mat3::scaled_identity(SCALE_RIDGE))
                .cholesky()
                .map(|c| c.ln_det())
                .unwrap_or(0.0)
        });
    nu * DIM / 2.0 * libm::log(2.0) + ln_multigamma3(nu / 2.0) - nu / 2.0 * ln_det
        + DIM / 2.0 * (LN_2PI - libm::log(kappa))
}

/// Stick-breaking mixture weights: `pi_c = beta_c * prod_{j<c} (1 - beta_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StickBreaking {
    pub weights: Vec<f64>,
    /// Unbroken stick mass, `prod (1 - beta_j)`.
    pub remainder: f64,
}

pub fn stick_breaking(betas: &[f64]) -> Result<StickBreaking, DpgmmError> {
    let mut weights = Vec::with_capacity(betas.len());
    let mut stick = 1.0;
    for &b in betas {
        // Beta draws live strictly inside the unit interval; an endpoint
        // would zero a component or the whole remaining stick.
        if !(b > 0.0 && b < 1.0) {
            return Err(DpgmmError::InvalidParameter("beta outside (0, 1)"));
        }
        weights.push(b * stick);
        stick *= 1.0 - b;
    }
    Ok(StickBreaking { weights, remainder: stick })
}

/// Log-pmf of occupation numbers under fixed mixture weights (multinomial).
pub fn occupation_ln_pmf(counts: &[u64], weights: &[f64]) -> Result<f64, DpgmmError> {
    if counts.len() != weights.len() {
        return Err(DpgmmError::MismatchedLengths {
            counts: counts.len(),
            weights: weights.len(),
        });
    }
    let mut total_w = 0.0;
    for &w in weights {
        if !(0.0..=1.0).contains(&w) {
            return Err(DpgmmError::InvalidParameter("mixture weight outside [0, 1]"));
        }
        total_w += w;
    }
    if libm::fabs(total_w - 1.0) > 1e-9 {
        return Err(DpgmmError::InvalidParameter("mixture weights do not sum to 1"));
    }
    let n: u64 = counts.iter().sum();
    let mut lp = libm::lgamma(n as f64 + 1.0);
    for (&c, &w) in counts.iter().zip(weights) {
        lp -= libm::lgamma(c as f64 + 1.0);
        if c > 0 {
            if w == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            lp += c as f64 * libm::log(w);
        }
    }
    Ok(lp)
}

pub fn occupation_pmf(counts: &[u64], weights: &[f64]) -> Result<f64, DpgmmError> {
    occupation_ln_pmf(counts, weights).map(|lp| {
        if lp == f64::NEG_INFINITY {
            0.0
        } else {
            libm::exp(lp)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn ret(x: f64, y: f64, z: f64) -> CellObservation {
        CellObservation::Return { xyz: Vec3::new(x, y, z), intensity: 50.0 }
    }

    fn unit() -> PointWeight {
        PointWeight::UNIT
    }

    #[test]
    fn stick_breaking_halves() {
        let sb = stick_breaking(&[0.5, 0.5, 0.5]).unwrap();
        assert!((sb.weights[0] - 0.5).abs() < 1e-15);
        assert!((sb.weights[1] - 0.25).abs() < 1e-15);
        assert!((sb.weights[2] - 0.125).abs() < 1e-15);
        assert!((sb.remainder - 0.125).abs() < 1e-15);
    }

    #[test]
    fn stick_breaking_rejects_bad_beta() {
        assert!(stick_breaking(&[0.5, 1.2]).is_err());
        assert!(stick_breaking(&[-0.1]).is_err());
        assert!(stick_breaking(&[0.0]).is_err());
        assert!(stick_breaking(&[1.0]).is_err());
        assert!(stick_breaking(&[f64::NAN]).is_err());
    }

    #[test]
    fn occupation_pmf_hand_cases() {
        // Two equal slots, one point each: 2!/(1!1!) * 0.25 = 0.5.
        let p = occupation_pmf(&[1, 1], &[0.5, 0.5]).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        // Everything at one table: pmf = pi^n.
        let p = occupation_pmf(&[4, 0], &[0.3, 0.7]).unwrap();
        assert!((p - 0.3f64.powi(4)).abs() < 1e-12);
    }

    fn compositions(n: u64, k: usize) -> Vec<Vec<u64>> {
        if k == 1 {
            return vec![vec![n]];
        }
        let mut out = Vec::new();
        for head in 0..=n {
            for mut tail in compositions(n - head, k - 1) {
                let mut v = vec![head];
                v.append(&mut tail);
                out.push(v);
            }
        }
        out
    }

    #[test]
    fn occupation_pmf_sums_to_one() {
        let weight_sets: [&[f64]; 3] =
            [&[0.6, 0.4], &[0.2, 0.5, 0.3], &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]];
        for weights in weight_sets {
            for n in 1..=6u64 {
                let mut total = 0.0;
                for counts in compositions(n, weights.len()) {
                    total += occupation_pmf(&counts, weights).unwrap();
                }
                assert!(
                    (total - 1.0).abs() < 1e-12,
                    "pmf over compositions of {n} summed to {total}"
                );
            }
        }
    }

    #[test]
    fn first_observation_opens_one_table() {
        let cfg = DpgmmConfig::default();
        let mut cell = DpgmmCell::new(&cfg);
        let w = PointWeight::new(3.0);
        cell.update(&ret(12.0, -4.0, 1.5), w, 0, &cfg).unwrap();
        assert_eq!(cell.tables().len(), 1);
        let t = &cell.tables()[0];
        assert_eq!(t.weight(), 3.0);
        // The bootstrap prior mean equals the first point, so the posterior
        // mean coincides with it exactly.
        let post = t.posterior(&cell.prior(&cfg));
        assert!((post.mean - Vec3::new(12.0, -4.0, 1.5)).norm() < 1e-12);
    }

    #[test]
    fn posterior_mean_sits_between_prior_and_data() {
        let cfg = DpgmmConfig::default();
        let mut cell = DpgmmCell::new(&cfg);
        // Freeze the prior on a cloud at the origin-ish point first.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n01 = Normal::new(0.0, 0.05).unwrap();
        for i in 0..30 {
            let x = Vec3::new(10.0 + n01.sample(&mut rng), 5.0, 0.0);
            cell.update(&CellObservation::Return { xyz: x, intensity: 1.0 }, unit(), i, &cfg)
                .unwrap();
        }
        let mu0 = cell.mu0_mean();
        // A far point opens its own table; its posterior mean is pulled
        // slightly from the data point toward mu0.
        cell.update(&ret(40.0, 5.0, 0.0), unit(), 31, &cfg).unwrap();
        let far = cell
            .tables()
            .iter()
            .max_by(|a, b| a.id().cmp(&b.id()))
            .unwrap();
        let post = far.posterior(&cell.prior(&cfg));
        assert!(post.mean.x < 40.0 && post.mean.x > mu0.x);
        let pull = (40.0 - post.mean.x) / (40.0 - mu0.x);
        // kappa0 / (kappa0 + 1) of the gap.
        assert!((pull - 0.1 / 1.1).abs() < 1e-9);
    }

    fn train_cell(
        cfg: &DpgmmConfig,
        points: &[(Vec3, f64)],
    ) -> DpgmmCell {
        let mut cell = DpgmmCell::new(cfg);
        for (i, (x, w)) in points.iter().enumerate() {
            cell.update(
                &CellObservation::Return { xyz: *x, intensity: 1.0 },
                PointWeight::new(*w),
                i as u64,
                cfg,
            )
            .unwrap();
        }
        cell
    }

    fn cloud(seed: u64, center: Vec3, sd: f64, n: usize) -> Vec<(Vec3, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sd).unwrap();
        (0..n)
            .map(|_| {
                (
                    center + Vec3::new(d.sample(&mut rng), d.sample(&mut rng), d.sample(&mut rng)),
                    1.0,
                )
            })
            .collect()
    }

    #[test]
    fn weighted_update_equals_repeated_unit_updates() {
        // Uncapped tables; see weighted_replication_property.
        let cfg = DpgmmConfig { max_tables: 64, ..DpgmmConfig::default() };
        for (case_seed, m) in [(1u64, 2u32), (2, 3), (3, 5)] {
            let base = cloud(case_seed, Vec3::new(15.0, -2.0, 0.5), 0.3, 30);
            let x = Vec3::new(15.2, -2.1, 0.4);

            let mut weighted = train_cell(&cfg, &base);
            weighted
                .update(&CellObservation::Return { xyz: x, intensity: 1.0 },
                    PointWeight::new(m as f64), 99, &cfg)
                .unwrap();

            let mut repeated = train_cell(&cfg, &base);
            for _ in 0..m {
                repeated
                    .update(&CellObservation::Return { xyz: x, intensity: 1.0 }, unit(), 99, &cfg)
                    .unwrap();
            }

            assert_eq!(weighted.tables().len(), repeated.tables().len());
            for (a, b) in weighted.tables().iter().zip(repeated.tables()) {
                assert!((a.weight() - b.weight()).abs() < 1e-9);
                let pa = a.posterior(&weighted.prior(&cfg));
                let pb = b.posterior(&repeated.prior(&cfg));
                assert!((pa.mean - pb.mean).norm() < 1e-9);
                assert!((pa.kappa - pb.kappa).abs() < 1e-9);
                assert!((pa.nu - pb.nu).abs() < 1e-9);
                for r in 0..3 {
                    for c in 0..3 {
                        assert!((pa.psi.m[r][c] - pb.psi.m[r][c]).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn far_outlier_opens_second_table_and_scores_say_so() {
        let cfg = DpgmmConfig::default();
        let mut cell = train_cell(&cfg, &cloud(7, Vec3::new(5.0, 5.0, 0.0), 0.1, 200));
        assert_eq!(cell.tables().len(), 1);

        let outlier = Vec3::new(50.0, 50.0, 0.0);
        let (existing, fresh) = cell.assignment_ln_scores(outlier, &cfg).unwrap();
        assert!(fresh > existing[0], "new-table score must win at the outlier");

        cell.update(&CellObservation::Return { xyz: outlier, intensity: 1.0 }, unit(), 999, &cfg)
            .unwrap();
        assert_eq!(cell.tables().len(), 2);
    }

    #[test]
    fn eviction_drops_the_lowest_weight_table() {
        let cfg = DpgmmConfig { max_tables: 2, ..DpgmmConfig::default() };
        let mut pts = cloud(9, Vec3::new(5.0, 0.0, 0.0), 0.05, 40);
        pts.extend(cloud(10, Vec3::new(30.0, 0.0, 0.0), 0.05, 6));
        let mut cell = train_cell(&cfg, &pts);
        assert_eq!(cell.tables().len(), 2);
        let seated: Vec<u64> = cell.tables().iter().map(|t| t.id()).collect();

        // A third cluster opens a third table of weight 1, which is now
        // the lightest and is evicted on the spot. The rule is literal:
        // it offers no grace period to the newcomer.
        cell.update(&ret(-25.0, 10.0, 0.0), unit(), 1000, &cfg).unwrap();
        assert_eq!(cell.tables().len(), 2);
        let after: Vec<u64> = cell.tables().iter().map(|t| t.id()).collect();
        assert_eq!(after, seated);
    }

    #[test]
    fn predictive_is_unimodal_at_location() {
        let cfg = DpgmmConfig::default();
        let cell = train_cell(&cfg, &cloud(11, Vec3::new(8.0, 3.0, 1.0), 0.2, 150));
        let t = &cell.tables()[0];
        let peak = t.predictive().ln_density(t.predictive().location());
        for step in [0.1, 0.5, 2.0, 10.0] {
            for dir in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)] {
                let off = t.predictive().location() + dir * step;
                assert!(t.predictive().ln_density(off) < peak);
            }
        }
    }

    #[test]
    fn predictive_integrates_to_one_monte_carlo() {
        let cfg = DpgmmConfig::default();
        let cell = train_cell(&cfg, &cloud(13, Vec3::new(4.0, -6.0, 2.0), 0.05, 60));
        assert_eq!(cell.tables().len(), 1);
        let t = cell.tables()[0].predictive();

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let c = t.location();
        let half = 5.0 * libm::sqrt(
            t.scale().m[0][0].max(t.scale().m[1][1]).max(t.scale().m[2][2])
                * t.dof() / (t.dof() - 2.0),
        );
        let vol = (2.0 * half) * (2.0 * half) * (2.0 * half);
        let n = 400_000usize;
        let mut acc = 0.0;
        for _ in 0..n {
            let x = Vec3::new(
                c.x + (rng.random::<f64>() * 2.0 - 1.0) * half,
                c.y + (rng.random::<f64>() * 2.0 - 1.0) * half,
                c.z + (rng.random::<f64>() * 2.0 - 1.0) * half,
            );
            acc += t.density(x);
        }
        let integral = acc / n as f64 * vol;
        assert!((integral - 1.0).abs() < 2e-2, "MC integral {integral}");
    }

    #[test]
    fn predictive_approaches_gaussian_with_tight_data() {
        let cfg = DpgmmConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let d = Normal::new(0.0, 0.5).unwrap();
        let center = Vec3::new(20.0, 10.0, -1.0);
        let pts: Vec<Vec3> = (0..10_000)
            .map(|_| center + Vec3::new(d.sample(&mut rng), d.sample(&mut rng), d.sample(&mut rng)))
            .collect();

        // Seat the whole sample at one table built straight from its
        // moments; the claim under test is about the table's predictive,
        // not about seating decisions.
        let n_f = pts.len() as f64;
        let sum = pts.iter().fold(Vec3::ZERO, |a, &b| a + b);
        let scatter = pts.iter().fold(Mat3::ZERO, |a, &b| a + b.outer());
        let cell = DpgmmCell::from_parts(
            sum,
            n_f,
            vec![RawTable { id: 0, created_frame: 0, weight: n_f, sum, scatter }],
            0.0,
            n_f,
            1,
            None,
            &cfg,
        )
        .unwrap();
        let t = cell.tables()[0].predictive();

        // Gaussian oracle fit by maximum likelihood to the same sample.
        let n = pts.len() as f64;
        let mean = pts.iter().fold(Vec3::ZERO, |a, &b| a + b) * (1.0 / n);
        let mut cov = Mat3::ZERO;
        for &p in &pts {
            cov += (p - mean).outer();
        }
        cov = cov.scale(1.0 / n);
        let chol = cov.cholesky().unwrap();
        let ln_norm = -0.5 * (3.0 * LN_2PI + chol.ln_det());

        for probe in [
            mean,
            mean + Vec3::new(0.3, 0.0, 0.0),
            mean + Vec3::new(-0.2, 0.4, 0.1),
            mean + Vec3::new(0.0, -0.5, 0.3),
        ] {
            let g = ln_norm - 0.5 * chol.quad_form(probe - mean);
            let s = t.ln_density(probe);
            let rel = ((s - g) / g).abs();
            assert!(rel < 1e-3, "relative log-density gap {rel} at {probe:?}");
        }
    }

    #[test]
    fn background_likelihood_is_the_weighted_mixture() {
        let cfg = DpgmmConfig::default();
        let mut pts = cloud(19, Vec3::new(10.0, 0.0, 0.0), 0.05, 90);
        pts.extend(cloud(20, Vec3::new(40.0, 0.0, 0.0), 0.05, 30));
        let cell = train_cell(&cfg, &pts);
        assert_eq!(cell.tables().len(), 2);

        let total: f64 = cell.tables().iter().map(|t| t.weight()).sum();
        for x in [Vec3::new(10.0, 0.0, 0.0), Vec3::new(40.1, 0.1, 0.0), Vec3::new(25.0, 0.0, 0.0)] {
            // Plain-arithmetic route.
            let direct: f64 = cell
                .tables()
                .iter()
                .map(|t| t.weight() / total * t.predictive().density(x))
                .sum();
            let fast = cell.background_likelihood(x).unwrap();
            assert!((direct - fast).abs() <= 1e-12 * direct.max(1e-300));
        }
    }

    #[test]
    fn empty_model_refuses_to_classify() {
        let cfg = DpgmmConfig::default();
        let cell = DpgmmCell::new(&cfg);
        assert!(matches!(
            cell.background_likelihood(Vec3::new(1.0, 1.0, 1.0)),
            Err(DpgmmError::EmptyModel)
        ));
        assert!(matches!(
            cell.classify(&CellObservation::NoReturn, &ClassifyParams::default()),
            Err(DpgmmError::EmptyModel)
        ));
    }

    #[test]
    fn posterior_formula_hand_values() {
        let params = ClassifyParams::default();
        // Likelihood exactly 1 with prior 0.5: 1 * 0.5 / (1 + 1) = 0.25,
        // which sits exactly at the default decision level.
        let p = background_posterior(1.0, &params);
        assert!((p - 0.25).abs() < 1e-15);
        assert!(background_posterior(0.0, &params) == 0.0);
        // Saturates at the prior.
        assert!((background_posterior(1e12, &params) - 0.5).abs() < 1e-9);

        // Normalized variant at the same point: 0.5 / (0.5 + 0.5) = 0.5,
        // and it saturates at 1 instead of at the prior.
        let norm = ClassifyParams::with_prior(0.5, true).unwrap();
        let p = background_posterior(1.0, &norm);
        assert!((p - 0.5).abs() < 1e-15);
        assert!((background_posterior(1e12, &norm) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn no_return_frequency_rule() {
        let cfg = DpgmmConfig::default();
        let mut cell = DpgmmCell::new(&cfg);
        cell.update(&CellObservation::NoReturn, unit(), 0, &cfg).unwrap();
        cell.update(&CellObservation::NoReturn, unit(), 1, &cfg).unwrap();
        cell.update(&ret(5.0, 5.0, 0.0), unit(), 2, &cfg).unwrap();
        // 2/3 no-return: a fresh no-return is background.
        let d = cell.classify(&CellObservation::NoReturn, &ClassifyParams::default()).unwrap();
        assert_eq!(d.label, Label::Background);
        assert!((d.p_background - 2.0 / 3.0).abs() < 1e-12);

        // Exactly 1/2 stays background (>= 0.5).
        cell.update(&ret(5.0, 5.0, 0.0), unit(), 3, &cfg).unwrap();
        let d = cell.classify(&CellObservation::NoReturn, &ClassifyParams::default()).unwrap();
        assert_eq!(d.label, Label::Background);

        cell.update(&ret(5.0, 5.0, 0.0), unit(), 4, &cfg).unwrap();
        let d = cell.classify(&CellObservation::NoReturn, &ClassifyParams::default()).unwrap();
        assert_eq!(d.label, Label::Foreground);
    }

    #[test]
    fn labels_invariant_under_weight_scaling() {
        let cfg = DpgmmConfig::default();
        let mut pts = cloud(23, Vec3::new(12.0, 1.0, 0.0), 0.15, 80);
        pts.extend(cloud(24, Vec3::new(30.0, -4.0, 1.0), 0.3, 40));
        let cell = train_cell(&cfg, &pts);

        let scaled_tables: Vec<RawTable> = cell
            .tables()
            .iter()
            .map(|t| {
                let mut r = t.raw();
                r.weight *= 7.5;
                r.sum = r.sum * 7.5;
                r.scatter = r.scatter.scale(7.5);
                r
            })
            .collect();
        let scaled = DpgmmCell::from_parts(
            cell.mu0_sum() * 7.5,
            cell.mu0_weight() * 7.5,
            scaled_tables,
            cell.no_return_weight() * 7.5,
            cell.total_weight() * 7.5,
            cell.next_table_id(),
            None,
            &cfg,
        )
        .unwrap();

        // Scaling every table weight rescales the mixture numerator and
        // denominator together; posteriors differ (more data sharpens
        // them), but the mixture-weight fractions are unchanged.
        let total_a: f64 = cell.tables().iter().map(|t| t.weight()).sum();
        let total_b: f64 = scaled.tables().iter().map(|t| t.weight()).sum();
        for (a, b) in cell.tables().iter().zip(scaled.tables()) {
            assert!((a.weight() / total_a - b.weight() / total_b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_sweeps_is_identity() {
        let cfg = DpgmmConfig { retain_history: true, ..DpgmmConfig::default() };
        let mut cell = train_cell(&cfg, &cloud(31, Vec3::new(6.0, 6.0, 0.0), 0.2, 50));
        let before = cell.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scores = cell.gibbs_refine(0, &cfg, &mut rng).unwrap();
        assert!(scores.is_empty());
        assert_eq!(cell, before);
    }

    #[test]
    fn gibbs_requires_history() {
        let cfg = DpgmmConfig::default();
        let mut cell = train_cell(&cfg, &cloud(32, Vec3::new(6.0, 6.0, 0.0), 0.2, 20));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            cell.gibbs_refine(1, &cfg, &mut rng),
            Err(DpgmmError::NoHistory)
        ));
    }

    #[test]
    fn single_point_sweep_preserves_the_model() {
        let cfg = DpgmmConfig { retain_history: true, ..DpgmmConfig::default() };
        let mut cell = DpgmmCell::new(&cfg);
        cell.update(&ret(9.0, -3.0, 0.5), PointWeight::new(2.0), 0, &cfg).unwrap();
        let before_posterior = cell.tables()[0].posterior(&cell.prior(&cfg));

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        cell.gibbs_refine(1, &cfg, &mut rng).unwrap();
        assert_eq!(cell.tables().len(), 1);
        let after = cell.tables()[0].posterior(&cell.prior(&cfg));
        assert!((after.mean - before_posterior.mean).norm() < 1e-9);
        assert!((after.kappa - before_posterior.kappa).abs() < 1e-9);
        for r in 0..3 {
            for c in 0..3 {
                assert!((after.psi.m[r][c] - before_posterior.psi.m[r][c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gibbs_splits_a_merged_pair_of_clusters() {
        // Two modes one prior-length apart, so escaping the merged seating
        // is within reach of single-site moves; a generous concentration
        // keeps the escape probability per draw non-negligible.
        let cfg = DpgmmConfig { retain_history: true, alpha: 50.0, ..DpgmmConfig::default() };
        let a = Vec3::new(-0.4, 0.0, 0.0);
        let b = Vec3::new(0.4, 0.0, 0.0);
        let mut pts = cloud(41, a, 0.02, 8);
        pts.extend(cloud(42, b, 0.02, 8));

        // Deliberately mis-seeded: everything on one table.
        let weight: f64 = pts.iter().map(|(_, w)| w).sum();
        let sum = pts.iter().fold(Vec3::ZERO, |acc, (x, w)| acc + *x * *w);
        let scatter = pts
            .iter()
            .fold(Mat3::ZERO, |acc, (x, w)| acc + x.outer().scale(*w));
        let history: Vec<HistoryEntry> =
            pts.iter().map(|(x, w)| HistoryEntry { x: *x, weight: *w, table: 0 }).collect();
        let mut cell = DpgmmCell::from_parts(
            sum,
            weight,
            vec![RawTable { id: 0, created_frame: 0, weight, sum, scatter }],
            0.0,
            weight,
            1,
            Some(history),
            &cfg,
        )
        .unwrap();
        let before = cell.joint_ln_posterior(&cfg);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let scores = cell.gibbs_refine(25, &cfg, &mut rng).unwrap();
        assert_eq!(scores.len(), 25);
        assert!(
            *scores.last().unwrap() > before,
            "joint posterior should improve: before {before}, after {}",
            scores.last().unwrap()
        );

        let mut by_weight: Vec<&MixtureTable> = cell.tables().iter().collect();
        by_weight.sort_by(|x, y| y.weight().partial_cmp(&x.weight()).unwrap());
        assert!(by_weight.len() >= 2);
        let prior = cell.prior(&cfg);
        let m0 = by_weight[0].posterior(&prior).mean;
        let m1 = by_weight[1].posterior(&prior).mean;
        let (near_a, near_b) = if m0.x < m1.x { (m0, m1) } else { (m1, m0) };
        assert!((near_a - a).norm() < 0.15, "cluster A recovered at {near_a:?}");
        assert!((near_b - b).norm() < 0.15, "cluster B recovered at {near_b:?}");
    }

    #[test]
    fn crp_conditionals_match_direct_arithmetic() {
        let cfg = DpgmmConfig::default();
        let mut pts = cloud(51, Vec3::new(5.0, 0.0, 0.0), 0.05, 40);
        pts.extend(cloud(52, Vec3::new(20.0, 3.0, 0.0), 0.05, 25));
        pts.extend(cloud(53, Vec3::new(-10.0, 8.0, 1.0), 0.05, 15));
        let cell = train_cell(&cfg, &pts);
        assert_eq!(cell.tables().len(), 3);

        for x in [Vec3::new(5.1, 0.1, 0.0), Vec3::new(12.0, 1.0, 0.0)] {
            let (probs, fresh) = cell.crp_conditionals(x, &cfg).unwrap();
            // Direct route: unnormalized s_t * t(x) and alpha * prior(x).
            let prior_pred = cell.prior(&cfg).predictive().unwrap();
            let mut raw: Vec<f64> = cell
                .tables()
                .iter()
                .map(|t| t.weight() * t.predictive().density(x))
                .collect();
            raw.push(cfg.alpha * prior_pred.density(x));
            let z: f64 = raw.iter().sum();
            for (i, p) in probs.iter().enumerate() {
                assert!((p - raw[i] / z).abs() < 1e-9);
            }
            assert!((fresh - raw.last().unwrap() / z).abs() < 1e-9);
            let total: f64 = probs.iter().sum::<f64>() + fresh;
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn stick_breaking_telescopes(betas in proptest::collection::vec(1e-6f64..=0.999_999, 1..60)) {
            let sb = stick_breaking(&betas).unwrap();
            let total: f64 = sb.weights.iter().sum::<f64>() + sb.remainder;
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(sb.weights.iter().all(|&w| w > 0.0));
            prop_assert!(sb.remainder > 0.0);
        }

        #[test]
        fn posterior_is_monotone_in_likelihood(
            l1 in 0.0f64..100.0,
            dl in 0.0f64..100.0,
            pb in 0.05f64..0.95,
            normalized in proptest::bool::ANY,
        ) {
            let params = ClassifyParams::with_prior(pb, normalized).unwrap();
            let lo = background_posterior(l1, &params);
            let hi = background_posterior(l1 + dl, &params);
            prop_assert!(hi >= lo - 1e-15);
            // The published form is capped by the prior; the normalized
            // form can reach 1.
            let cap = if normalized { 1.0 } else { pb };
            prop_assert!(lo >= 0.0 && lo <= cap + 1e-15);
        }

        #[test]
        fn weighted_replication_property(
            seed in 0u64..200,
            m in prop::sample::select(vec![2u32, 3, 5]),
            px in -20.0f64..20.0,
            py in -20.0f64..20.0,
            pz in -2.0f64..2.0,
        ) {
            // The property compares the update mechanics, so the table
            // cap must not bind: once eviction interleaves with the m
            // unit seatings the two paths track different table sets by
            // design.
            let cfg = DpgmmConfig { max_tables: 64, ..DpgmmConfig::default() };
            let base = cloud(seed, Vec3::new(10.0, 5.0, 0.0), 0.5, 25);
            let x = Vec3::new(px, py, pz);

            let mut weighted = train_cell(&cfg, &base);
            weighted.update(
                &CellObservation::Return { xyz: x, intensity: 1.0 },
                PointWeight::new(m as f64), 50, &cfg).unwrap();

            let mut repeated = train_cell(&cfg, &base);
            for _ in 0..m {
                repeated.update(
                    &CellObservation::Return { xyz: x, intensity: 1.0 },
                    PointWeight::UNIT, 50, &cfg).unwrap();
            }

            prop_assert_eq!(weighted.tables().len(), repeated.tables().len());
            for (a, b) in weighted.tables().iter().zip(repeated.tables()) {
                prop_assert!((a.weight() - b.weight()).abs() < 1e-9);
                let pa = a.posterior(&weighted.prior(&cfg));
                let pb = b.posterior(&repeated.prior(&cfg));
                prop_assert!((pa.mean - pb.mean).norm() < 1e-9);
                for r in 0..3 {
                    for c in 0..3 {
                        prop_assert!((pa.psi.m[r][c] - pb.psi.m[r][c]).abs() < 1e-9);
                    }
                }
            }
        }
    }
}

