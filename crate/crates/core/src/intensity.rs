//! Per-cell intensity mixture and the confidence weights it produces.
//!
//! Background surfaces echo with stable intensity, so a small 1-D Gaussian
//! mixture over a cell's intensity history concentrates its weight on the
//! values that keep coming back. A new return is then up-weighted by the
//! mixture weight of the component it lands in: weight `1 + rate * w_k`,
//! where `rate` is the sampling-rate setting. Rate 0 collapses everything
//! to weight 1, which recovers the unweighted model exactly.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LN_2PI: f64 = 1.837877066409345483560659472811;

/// Multiplier applied to a return's component weight. Only the published
/// settings are accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingRate(u8);

impl SamplingRate {
    pub const OFF: SamplingRate = SamplingRate(0);

    pub fn new(rate: u32) -> Result<Self, IntensityError> {
        match rate {
            0 | 2 | 4 | 8 => Ok(SamplingRate(rate as u8)),
            _ => Err(IntensityError::InvalidSamplingRate(rate)),
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl Default for SamplingRate {
    /// The recommended operating point.
    fn default() -> Self {
        SamplingRate(4)
    }
}

/// Weight a background model applies to one observation; never below 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointWeight(f64);

impl PointWeight {
    pub const UNIT: PointWeight = PointWeight(1.0);

    /// Clamps pathological inputs instead of propagating them; the weight
    /// formula cannot produce them, but models must never see w < 1.
    pub fn new(w: f64) -> Self {
        if w.is_finite() && w >= 1.0 {
            PointWeight(w)
        } else {
            PointWeight(1.0)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityComponent {
    pub weight: f64,
    pub mean: f64,
    pub var: f64,
}

/// Fitted 1-D mixture; components are sorted by mean, weights sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityGmm {
    components: Vec<IntensityComponent>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[non_exhaustive]
pub enum IntensityError {
    NoSamples,
    /// Component count outside the supported menu {5, 7, 9}.
    InvalidComponentCount(usize),
    /// Sampling rate outside the supported menu {0, 2, 4, 8}.
    InvalidSamplingRate(u32),
    NonFiniteSample(f64),
    /// Stored components violate the canonical form.
    InvalidComponent(&'static str),
}

impl fmt::Display for IntensityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntensityError::NoSamples => write!(f, "cannot fit a mixture to zero samples"),
            IntensityError::InvalidComponentCount(k) => {
                write!(f, "component count {k} not in {{5, 7, 9}}")
            }
            IntensityError::InvalidSamplingRate(r) => {
                write!(f, "sampling rate {r} not in {{0, 2, 4, 8}}")
            }
            IntensityError::NonFiniteSample(v) => write!(f, "non-finite intensity sample {v}"),
            IntensityError::InvalidComponent(what) => {
                write!(f, "stored component set is not canonical: {what}")
            }
        }
    }
}

impl core::error::Error for IntensityError {}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub components: usize,
    pub max_iterations: usize,
    /// Absolute log-likelihood improvement below which EM stops.
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
    pub variance_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            components: 5,
            max_iterations: 200,
            tolerance: 1e-6,
            restarts: 3,
            seed: 0,
            variance_floor: 1e-4,
        }
    }
}

/// Outcome of [`IntensityGmm::fit`]: the mixture plus the winning restart's
/// log-likelihood trace (one entry per EM iteration).
#[derive(Debug, Clone)]
pub struct FitReport {
    pub gmm: IntensityGmm,
    pub log_likelihood: Vec<f64>,
}

impl IntensityGmm {
    pub fn fit(samples: &[f64], opts: &FitOptions) -> Result<FitReport, IntensityError> {
        if samples.is_empty() {
            return Err(IntensityError::NoSamples);
        }
        if let Some(&bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(IntensityError::NonFiniteSample(bad));
        }
        if !matches!(opts.components, 5 | 7 | 9) {
            return Err(IntensityError::InvalidComponentCount(opts.components));
        }

        let mut best: Option<(f64, Vec<IntensityComponent>, Vec<f64>)> = None;
        for restart in 0..opts.restarts.max(1) {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (restart as u64).wrapping_mul(0x9E3779B97F4A7C15));
            let init = kmeans_pp_init(samples, opts.components, opts.variance_floor, &mut rng);
            let (comps, trace) = run_em(samples, init, opts);
            let score = trace.last().copied().unwrap_or(f64::NEG_INFINITY);
            if best.as_ref().map_or(true, |(s, _, _)| score > *s) {
                best = Some((score, comps, trace));
            }
        }
        let (_, comps, trace) = best.expect("at least one restart ran");
        Ok(FitReport { gmm: IntensityGmm { components: tidy(comps) }, log_likelihood: trace })
    }

    pub fn components(&self) -> &[IntensityComponent] {
        &self.components
    }

    /// Rebuilds a mixture from stored components (model persistence path).
    ///
    /// The input must already be canonical: means ascending, every weight
    /// and variance positive and finite, weights summing to 1 within
    /// 1e-9. Nothing is renormalized, so the stored bits survive a
    /// load/save round trip untouched.
    pub fn from_components(components: Vec<IntensityComponent>) -> Result<Self, IntensityError> {
        if components.is_empty() {
            return Err(IntensityError::NoSamples);
        }
        let mut total = 0.0;
        for pair in components.windows(2) {
            if !(pair[0].mean <= pair[1].mean) {
                return Err(IntensityError::InvalidComponent("means out of order"));
            }
        }
        for c in &components {
            if !c.mean.is_finite() {
                return Err(IntensityError::InvalidComponent("non-finite mean"));
            }
            if !(c.var > 0.0) || !c.var.is_finite() {
                return Err(IntensityError::InvalidComponent("non-positive variance"));
            }
            if !(c.weight > 0.0) || !c.weight.is_finite() {
                return Err(IntensityError::InvalidComponent("non-positive weight"));
            }
            total += c.weight;
        }
        if libm::fabs(total - 1.0) > 1e-9 {
            return Err(IntensityError::InvalidComponent("weights must sum to 1"));
        }
        Ok(IntensityGmm { components })
    }

    /// Index of the component with the highest weighted density at `x`.
    /// Exact ties resolve to the lowest index.
    pub fn classify(&self, x: f64) -> usize {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (i, c) in self.components.iter().enumerate() {
            let score = ln_weighted_density(c, x);
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        best
    }

    /// Confidence weight of a return with intensity `x`:
    /// `1 + rate * weight(component containing x)`.
    pub fn point_weight(&self, x: f64, rate: SamplingRate) -> PointWeight {
        let k = self.classify(x);
        PointWeight::new(1.0 + rate.value() as f64 * self.components[k].weight)
    }
}

fn ln_weighted_density(c: &IntensityComponent, x: f64) -> f64 {
    let d = x - c.mean;
    libm::log(c.weight) - 0.5 * (LN_2PI + libm::log(c.var)) - d * d / (2.0 * c.var)
}

fn kmeans_pp_init(
    samples: &[f64],
    k: usize,
    var_floor: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<IntensityComponent> {
    let n = samples.len();
    let mut centers: Vec<f64> = Vec::with_capacity(k);
    centers.push(samples[rng.random_range(0..n)]);
    let mut d2 = vec![0.0f64; n];
    while centers.len() < k {
        let mut total = 0.0;
        for (i, &s) in samples.iter().enumerate() {
            let nearest = centers
                .iter()
                .map(|&c| (s - c) * (s - c))
                .fold(f64::INFINITY, f64::min);
            d2[i] = nearest;
            total += nearest;
        }
        let next = if total > 0.0 {
            // Sample proportional to squared distance.
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            samples[chosen]
        } else {
            // Fewer distinct values than components.
            samples[rng.random_range(0..n)]
        };
        centers.push(next);
    }

    // One hard-assignment pass to get starting moments.
    let mut count = vec![0usize; k];
    let mut sum = vec![0.0f64; k];
    let mut sq = vec![0.0f64; k];
    for &s in samples {
        let mut ci = 0;
        let mut cd = f64::INFINITY;
        for (i, &c) in centers.iter().enumerate() {
            let d = (s - c) * (s - c);
            if d < cd {
                cd = d;
                ci = i;
            }
        }
        count[ci] += 1;
        sum[ci] += s;
        sq[ci] += s * s;
    }
    (0..k)
        .map(|i| {
            if count[i] == 0 {
                IntensityComponent { weight: 1e-6, mean: centers[i], var: var_floor.max(1.0) }
            } else {
                let mean = sum[i] / count[i] as f64;
                let var = (sq[i] / count[i] as f64 - mean * mean).max(var_floor);
                IntensityComponent { weight: count[i] as f64 / n as f64, mean, var }
            }
        })
        .collect()
}

fn run_em(
    samples: &[f64],
    mut comps: Vec<IntensityComponent>,
    opts: &FitOptions,
) -> (Vec<IntensityComponent>, Vec<f64>) {
    let n = samples.len();
    let k = comps.len();
    let mut resp = vec![0.0f64; k];
    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;

    for _ in 0..opts.max_iterations {
        let mut w_sum = vec![0.0f64; k];
        let mut x_sum = vec![0.0f64; k];
        let mut x2_sum = vec![0.0f64; k];
        let mut ll = 0.0;

        for &x in samples {
            let mut max_ln = f64::NEG_INFINITY;
            for (i, c) in comps.iter().enumerate() {
                resp[i] = ln_weighted_density(c, x);
                if resp[i] > max_ln {
                    max_ln = resp[i];
                }
            }
            let mut z = 0.0;
            for r in resp.iter_mut() {
                *r = libm::exp(*r - max_ln);
                z += *r;
            }
            ll += max_ln + libm::log(z);
            for (i, r) in resp.iter().enumerate() {
                let g = r / z;
                w_sum[i] += g;
                x_sum[i] += g * x;
                x2_sum[i] += g * x * x;
            }
        }
        trace.push(ll);

        for i in 0..k {
            if w_sum[i] > 1e-12 {
                let mean = x_sum[i] / w_sum[i];
                comps[i].weight = w_sum[i] / n as f64;
                comps[i].mean = mean;
                comps[i].var = (x2_sum[i] / w_sum[i] - mean * mean).max(opts.variance_floor);
            } else {
                comps[i].weight = 0.0;
            }
        }

        if (ll - prev_ll).abs() < opts.tolerance {
            break;
        }
        prev_ll = ll;
    }
    (comps, trace)
}

/// Drops dead components, merges indistinguishable ones, renormalizes and
/// sorts by mean so component ids are deterministic.
fn tidy(comps: Vec<IntensityComponent>) -> Vec<IntensityComponent> {
    let mut live: Vec<IntensityComponent> =
        comps.into_iter().filter(|c| c.weight > 1e-9 && c.var.is_finite()).collect();
    live.sort_by(|a, b| a.mean.partial_cmp(&b.mean).expect("finite means"));

    let mut merged: Vec<IntensityComponent> = Vec::with_capacity(live.len());
    for c in live {
        if let Some(last) = merged.last_mut() {
            let scale = last.mean.abs().max(1.0);
            if (c.mean - last.mean).abs() <= 1e-6 * scale && (c.var - last.var).abs() <= 1e-6 {
                let w = last.weight + c.weight;
                last.mean = (last.mean * last.weight + c.mean * c.weight) / w;
                last.weight = w;
                continue;
            }
        }
        merged.push(c);
    }

    let total: f64 = merged.iter().map(|c| c.weight).sum();
    if total > 0.0 {
        for c in merged.iter_mut() {
            c.weight /= total;
        }
    }
    merged
}
