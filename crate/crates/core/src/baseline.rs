//! Mean-max range-band background cell, the naive reference method.
//!
//! Each cell remembers only the mean and the maximum of its training
//! ranges. A return is background when its range falls inside the band
//! `[mean - band, max + band]`. The model is deliberately blind to
//! multi-modal cells: anything below the band, such as near-range
//! clutter in bad weather, is flagged as foreground no matter how often
//! it was seen in training. The mixture models exist to fix exactly
//! that, so this cell ships as the comparison point.

use crate::model::Label;
use crate::tensor::CellObservation;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[non_exhaustive]
pub enum BaselineError {
    NonFiniteObservation,
    InvalidConfig(&'static str),
    InvalidState(&'static str),
}

impl fmt::Display for BaselineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineError::NonFiniteObservation => {
                write!(f, "observation coordinates must be finite")
            }
            BaselineError::InvalidConfig(which) => write!(f, "invalid config field: {which}"),
            BaselineError::InvalidState(which) => write!(f, "invalid cell state: {which}"),
        }
    }
}

impl core::error::Error for BaselineError {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanMaxConfig {
    /// Half-width slack added below the mean and above the max, meters.
    pub band_m: f64,
}

impl Default for MeanMaxConfig {
    fn default() -> Self {
        MeanMaxConfig { band_m: 1.0 }
    }
}

impl MeanMaxConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(self.band_m > 0.0) || !self.band_m.is_finite() {
            return Err(BaselineError::InvalidConfig("band_m"));
        }
        Ok(())
    }
}

/// Running range statistics of one cell's training stream.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanMaxCell {
    range_sum: f64,
    range_count: f64,
    range_max: f64,
    no_return_count: f64,
    total_count: f64,
}

impl MeanMaxCell {
    pub fn new() -> Self {
        MeanMaxCell::default()
    }

    pub fn from_parts(
        range_sum: f64,
        range_count: f64,
        range_max: f64,
        no_return_count: f64,
        total_count: f64,
    ) -> Result<Self, BaselineError> {
        let all = [range_sum, range_count, range_max, no_return_count, total_count];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(BaselineError::InvalidState("negative or non-finite count"));
        }
        if range_count + no_return_count > total_count + 1e-9 {
            return Err(BaselineError::InvalidState("counts exceed total"));
        }
        if range_count > 0.0 && range_max * range_count + 1e-9 < range_sum {
            return Err(BaselineError::InvalidState("max below mean"));
        }
        Ok(MeanMaxCell { range_sum, range_count, range_max, no_return_count, total_count })
    }

    /// Mean training range; `None` before the first return.
    pub fn mean_range(&self) -> Option<f64> {
        (self.range_count > 0.0).then(|| self.range_sum / self.range_count)
    }

    /// Largest training range; `None` before the first return.
    pub fn max_range(&self) -> Option<f64> {
        (self.range_count > 0.0).then_some(self.range_max)
    }

    pub fn range_sum(&self) -> f64 {
        self.range_sum
    }

    pub fn range_count(&self) -> f64 {
        self.range_count
    }

    pub fn no_return_count(&self) -> f64 {
        self.no_return_count
    }

    pub fn total_count(&self) -> f64 {
        self.total_count
    }

    /// Folds one training observation into the running statistics.
    pub fn train(&mut self, obs: &CellObservation) -> Result<(), BaselineError> {
        self.total_count += 1.0;
        match *obs {
            CellObservation::NoReturn => {
                self.no_return_count += 1.0;
                Ok(())
            }
            CellObservation::Return { xyz, .. } => {
                if !xyz.is_finite() {
                    self.total_count -= 1.0;
                    return Err(BaselineError::NonFiniteObservation);
                }
                let r = xyz.norm();
                self.range_sum += r;
                self.range_count += 1.0;
                if r > self.range_max {
                    self.range_max = r;
                }
                Ok(())
            }
        }
    }

    /// Background iff the range lands in `[mean - band, max + band]`,
    /// bounds inclusive. A cell that trained on no returns calls every
    /// return foreground; no-returns are background when at least half
    /// the training observations were no-returns (or nothing trained).
    pub fn classify(
        &self,
        obs: &CellObservation,
        cfg: &MeanMaxConfig,
    ) -> Result<Label, BaselineError> {
        match *obs {
            CellObservation::NoReturn => {
                if self.total_count <= 0.0 {
                    return Ok(Label::Background);
                }
                if self.no_return_count / self.total_count >= 0.5 {
                    Ok(Label::Background)
                } else {
                    Ok(Label::Foreground)
                }
            }
            CellObservation::Return { xyz, .. } => {
                if !xyz.is_finite() {
                    return Err(BaselineError::NonFiniteObservation);
                }
                let mean = match self.mean_range() {
                    Some(m) => m,
                    None => return Ok(Label::Foreground),
                };
                let r = xyz.norm();
                if r >= mean - cfg.band_m && r <= self.range_max + cfg.band_m {
                    Ok(Label::Background)
                } else {
                    Ok(Label::Foreground)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vec3;
    use proptest::prelude::*;

    fn ret_at_range(r: f64) -> CellObservation {
        CellObservation::Return { xyz: Vec3::new(r, 0.0, 0.0), intensity: 30.0 }
    }

    fn trained(ranges: &[f64]) -> MeanMaxCell {
        let mut cell = MeanMaxCell::new();
        for &r in ranges {
            cell.train(&ret_at_range(r)).unwrap();
        }
        cell
    }

    #[test]
    fn band_rule_hand_values() {
        let cfg = MeanMaxConfig::default();
        let cell = trained(&[10.0, 10.4, 11.0]);
        let mean = cell.mean_range().unwrap();
        assert!((mean - 10.466_666_666_666_667).abs() < 1e-12);
        assert_eq!(cell.max_range().unwrap(), 11.0);

        assert_eq!(cell.classify(&ret_at_range(10.0), &cfg).unwrap(), Label::Background);
        assert_eq!(cell.classify(&ret_at_range(12.0), &cfg).unwrap(), Label::Background);
        assert_eq!(cell.classify(&ret_at_range(9.3), &cfg).unwrap(), Label::Foreground);
        assert_eq!(cell.classify(&ret_at_range(12.1), &cfg).unwrap(), Label::Foreground);
        // Bounds are inclusive.
        assert_eq!(cell.classify(&ret_at_range(mean - 1.0), &cfg).unwrap(), Label::Background);
    }

    #[test]
    fn untrained_cell_conventions() {
        let cfg = MeanMaxConfig::default();
        let cell = MeanMaxCell::new();
        assert_eq!(cell.classify(&ret_at_range(5.0), &cfg).unwrap(), Label::Foreground);
        assert_eq!(cell.classify(&CellObservation::NoReturn, &cfg).unwrap(), Label::Background);
    }

    #[test]
    fn no_return_frequency_rule() {
        let cfg = MeanMaxConfig::default();
        let mut cell = MeanMaxCell::new();
        cell.train(&CellObservation::NoReturn).unwrap();
        cell.train(&CellObservation::NoReturn).unwrap();
        cell.train(&ret_at_range(20.0)).unwrap();
        // 2 of 3 trained observations were silent.
        assert_eq!(cell.classify(&CellObservation::NoReturn, &cfg).unwrap(), Label::Background);

        for _ in 0..2 {
            cell.train(&ret_at_range(20.0)).unwrap();
        }
        // Now 2 of 5.
        assert_eq!(cell.classify(&CellObservation::NoReturn, &cfg).unwrap(), Label::Foreground);
    }

    #[test]
    fn near_range_clutter_is_flagged_despite_being_trained_on() {
        // The method's documented blindness: a cell that mostly sees a
        // wall at 20 m plus occasional near-range clutter keeps flagging
        // that clutter, because one band around the mean cannot hold two
        // modes. The mixture models absorb the second mode instead.
        let cfg = MeanMaxConfig::default();
        let mut ranges = [20.0; 97].to_vec();
        ranges.extend_from_slice(&[1.5, 1.4, 1.6]);
        let cell = trained(&ranges);

        assert_eq!(cell.classify(&ret_at_range(1.5), &cfg).unwrap(), Label::Foreground);
        assert_eq!(cell.classify(&ret_at_range(20.0), &cfg).unwrap(), Label::Background);
    }

    #[test]
    fn non_finite_observation_rejected_and_not_counted() {
        let cfg = MeanMaxConfig::default();
        let mut cell = MeanMaxCell::new();
        let bad = CellObservation::Return { xyz: Vec3::new(f64::INFINITY, 0.0, 0.0), intensity: 1.0 };
        assert_eq!(cell.train(&bad), Err(BaselineError::NonFiniteObservation));
        assert_eq!(cell.total_count(), 0.0);
        assert_eq!(cell.classify(&bad, &cfg), Err(BaselineError::NonFiniteObservation));
    }

    #[test]
    fn from_parts_rejects_inconsistent_counts() {
        assert!(MeanMaxCell::from_parts(10.0, 2.0, 6.0, 0.0, 2.0).is_ok());
        assert!(MeanMaxCell::from_parts(-1.0, 2.0, 6.0, 0.0, 2.0).is_err());
        assert!(MeanMaxCell::from_parts(10.0, 2.0, 6.0, 3.0, 2.0).is_err());
        // Mean 5 with max 4 is impossible.
        assert!(MeanMaxCell::from_parts(10.0, 2.0, 4.0, 0.0, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn tight_training_sets_classify_themselves_background(
            base in 2.0f64..80.0,
            offsets in proptest::collection::vec(0.0f64..=1.0, 1..50),
        ) {
            // Training spread fits inside the band, so every trained
            // range must come back as background.
            let cfg = MeanMaxConfig::default();
            let ranges: alloc::vec::Vec<f64> = offsets.iter().map(|o| base + o).collect();
            let cell = trained(&ranges);
            for &r in &ranges {
                prop_assert_eq!(cell.classify(&ret_at_range(r), &cfg).unwrap(), Label::Background);
            }
        }

        #[test]
        fn far_outside_the_band_is_always_foreground(
            base in 5.0f64..50.0,
            offsets in proptest::collection::vec(0.0f64..=1.0, 1..50),
            slack in 0.001f64..10.0,
        ) {
            let cfg = MeanMaxConfig::default();
            let ranges: alloc::vec::Vec<f64> = offsets.iter().map(|o| base + o).collect();
            let cell = trained(&ranges);
            let below = cell.mean_range().unwrap() - cfg.band_m - slack;
            let above = cell.max_range().unwrap() + cfg.band_m + slack;
            if below > 0.0 {
                prop_assert_eq!(
                    cell.classify(&ret_at_range(below), &cfg).unwrap(),
                    Label::Foreground
                );
            }
            prop_assert_eq!(cell.classify(&ret_at_range(above), &cfg).unwrap(), Label::Foreground);
        }
    }
}
