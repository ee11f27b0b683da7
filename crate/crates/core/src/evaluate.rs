//! Three-level scoring of a finished run: per-point confusion metrics
//! against a labeled mask, object-level detection matching by bird's
//! eye view center distance, and directional path counts against a
//! screenline.

use crate::detect::{Obb, TrackStatus};
use crate::model::Label;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[non_exhaustive]
pub enum EvaluateError {
    LengthMismatch { pred: usize, gt: usize },
    ZeroReference,
    InvalidParameter(&'static str),
}

impl fmt::Display for EvaluateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvaluateError::LengthMismatch { pred, gt } => {
                write!(f, "mask lengths differ: {pred} predicted vs {gt} ground truth")
            }
            EvaluateError::ZeroReference => write!(f, "reference count is zero"),
            EvaluateError::InvalidParameter(which) => {
                write!(f, "invalid parameter: {which}")
            }
        }
    }
}

impl core::error::Error for EvaluateError {}

// ---------------------------------------------------------------------
// Point level
// ---------------------------------------------------------------------

/// Binary confusion table with foreground as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub true_neg: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn from_masks(pred: &[Label], gt: &[Label]) -> Result<Self, EvaluateError> {
        if pred.len() != gt.len() {
            return Err(EvaluateError::LengthMismatch { pred: pred.len(), gt: gt.len() });
        }
        let mut c = ConfusionCounts::default();
        for (p, g) in pred.iter().zip(gt) {
            match (p, g) {
                (Label::Foreground, Label::Foreground) => c.true_pos += 1,
                (Label::Background, Label::Background) => c.true_neg += 1,
                (Label::Foreground, Label::Background) => c.false_pos += 1,
                (Label::Background, Label::Foreground) => c.false_neg += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }

    /// Accuracy, precision, recall and F1 with the division-by-zero
    /// convention that an empty denominator scores 0.
    pub fn metrics(&self) -> MetricsReport {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let accuracy = ratio(self.true_pos + self.true_neg, self.total());
        let precision = ratio(self.true_pos, self.true_pos + self.false_pos);
        let recall = ratio(self.true_pos, self.true_pos + self.false_neg);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MetricsReport { accuracy, precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scores a predicted foreground mask against a labeled one.
pub fn point_metrics(pred: &[Label], gt: &[Label]) -> Result<MetricsReport, EvaluateError> {
    Ok(ConfusionCounts::from_masks(pred, gt)?.metrics())
}

// ---------------------------------------------------------------------
// Object level
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMatching {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    /// Matched (predicted index, ground truth index) pairs.
    pub pairs: Vec<(usize, usize)>,
    pub report: MetricsReport,
}

/// Greedy one-to-one matching of predicted boxes to ground truth boxes
/// by ascending bird's eye view center distance; a pair matches iff the
/// distance is at most `match_radius`. Unmatched predictions are false
/// positives, unmatched truths false negatives, so `tp + fp` equals the
/// prediction count and `tp + fn` the truth count. There are no true
/// negatives at this level; the accuracy slot carries
/// `tp / (tp + fp + fn)`.
pub fn object_metrics(
    pred: &[Obb],
    gt: &[Obb],
    match_radius: f64,
) -> Result<ObjectMatching, EvaluateError> {
    if !(match_radius > 0.0) || !match_radius.is_finite() {
        return Err(EvaluateError::InvalidParameter("match_radius"));
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, p) in pred.iter().enumerate() {
        for (gi, g) in gt.iter().enumerate() {
            let d = p.center.bev_dist(g.center);
            if d <= match_radius {
                pairs.push((d, pi, gi));
            }
        }
    }
    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let mut pred_taken = alloc::vec![false; pred.len()];
    let mut gt_taken = alloc::vec![false; gt.len()];
    let mut matched = Vec::new();
    for (_, pi, gi) in pairs {
        if !pred_taken[pi] && !gt_taken[gi] {
            pred_taken[pi] = true;
            gt_taken[gi] = true;
            matched.push((pi, gi));
        }
    }
    let tp = matched.len() as u64;
    let fp = pred.len() as u64 - tp;
    let fneg = gt.len() as u64 - tp;
    let counts = ConfusionCounts {
        true_pos: tp,
        true_neg: 0,
        false_pos: fp,
        false_neg: fneg,
    };
    Ok(ObjectMatching {
        true_pos: tp,
        false_pos: fp,
        false_neg: fneg,
        pairs: matched,
        report: counts.metrics(),
    })
}

// ---------------------------------------------------------------------
// Path level
// ---------------------------------------------------------------------

/// Directional count accuracy: `1 - |measured - reference| / reference`.
/// Unbounded below for wild overcounts; the reference must be positive.
pub fn path_count_accuracy(reference: u64, measured: u64) -> Result<f64, EvaluateError> {
    if reference == 0 {
        return Err(EvaluateError::ZeroReference);
    }
    let r = reference as f64;
    let m = measured as f64;
    Ok(1.0 - libm::fabs(m - r) / r)
}

/// Oriented segment in the XY plane. Its direction defines the sides: a
/// point with positive cross product against the direction is on the
/// left. Crossing left to right counts inbound, right to left outbound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Screenline {
    a: [f64; 2],
    b: [f64; 2],
}

impl Screenline {
    pub fn new(a: [f64; 2], b: [f64; 2]) -> Result<Self, EvaluateError> {
        let finite = a.iter().chain(&b).all(|v| v.is_finite());
        if !finite || a == b {
            return Err(EvaluateError::InvalidParameter("screenline"));
        }
        Ok(Screenline { a, b })
    }

    fn side(&self, x: f64, y: f64) -> f64 {
        let dx = self.b[0] - self.a[0];
        let dy = self.b[1] - self.a[1];
        dx * (y - self.a[1]) - dy * (x - self.a[0])
    }

    /// Does the motion segment p -> q pass through this segment?
    /// Endpoint grazes on the screenline's ends count; motion that only
    /// touches without changing side does not.
    pub fn crossing(&self, p: [f64; 2], q: [f64; 2]) -> Option<Crossing> {
        let sp = self.side(p[0], p[1]);
        let sq = self.side(q[0], q[1]);
        if !(sp > 0.0 && sq < 0.0) && !(sp < 0.0 && sq > 0.0) {
            return None;
        }
        // The screenline's endpoints must straddle the motion segment,
        // or the track passed beside the line, not through it.
        let mdx = q[0] - p[0];
        let mdy = q[1] - p[1];
        let ta = mdx * (self.a[1] - p[1]) - mdy * (self.a[0] - p[0]);
        let tb = mdx * (self.b[1] - p[1]) - mdy * (self.b[0] - p[0]);
        if ta * tb > 0.0 {
            return None;
        }
        Some(if sp > 0.0 { Crossing::Inbound } else { Crossing::Outbound })
    }
}

/// Which way a motion segment passed a [`Screenline`]: left to right of
/// its direction is inbound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    Inbound,
    Outbound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub timestamp: f64,
    pub x: f64,
    pub y: f64,
    pub status: TrackStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub track_id: u64,
    /// Time-ordered samples.
    pub samples: Vec<PathSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Movements {
    pub inbound: u64,
    pub outbound: u64,
}

/// Counts screenline crossings over confirmed motion. A crossing
/// requires the arriving sample to be confirmed, and further crossings
/// of the same track within `debounce_s` seconds of its last counted
/// one are dropped, so a track oscillating on the line scores once.
pub fn count_movements(
    trajectories: &[Trajectory],
    line: &Screenline,
    debounce_s: f64,
) -> Result<Movements, EvaluateError> {
    if !(debounce_s >= 0.0) || !debounce_s.is_finite() {
        return Err(EvaluateError::InvalidParameter("debounce_s"));
    }
    let mut out = Movements::default();
    for traj in trajectories {
        let mut last_counted: Option<f64> = None;
        for pair in traj.samples.windows(2) {
            let (prev, cur) = (&pair[0], &pair[1]);
            if cur.status != TrackStatus::Confirmed {
                continue;
            }
            let Some(dir) = line.crossing([prev.x, prev.y], [cur.x, cur.y]) else {
                continue;
            };
            if let Some(t0) = last_counted {
                if cur.timestamp - t0 < debounce_s {
                    continue;
                }
            }
            last_counted = Some(cur.timestamp);
            match dir {
                Crossing::Inbound => out.inbound += 1,
                Crossing::Outbound => out.outbound += 1,
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vec3;
    use proptest::prelude::*;

    fn mask(bits: &[u8]) -> Vec<Label> {
        bits.iter()
            .map(|&b| if b == 1 { Label::Foreground } else { Label::Background })
            .collect()
    }

    #[test]
    fn hand_confusion_case() {
        // 8 TP, 2 FP, 1 FN, 89 TN.
        let mut pred = Vec::new();
        let mut gt = Vec::new();
        for _ in 0..8 {
            pred.push(1);
            gt.push(1);
        }
        for _ in 0..2 {
            pred.push(1);
            gt.push(0);
        }
        pred.push(0);
        gt.push(1);
        for _ in 0..89 {
            pred.push(0);
            gt.push(0);
        }
        let r = point_metrics(&mask(&pred), &mask(&gt)).unwrap();
        assert!((r.accuracy - 0.97).abs() < 1e-12);
        assert!((r.precision - 0.8).abs() < 1e-12);
        assert!((r.recall - 8.0 / 9.0).abs() < 1e-12);
        let f1 = 2.0 * 0.8 * (8.0 / 9.0) / (0.8 + 8.0 / 9.0);
        assert!((r.f1 - f1).abs() < 1e-12);
        assert!((r.recall - 0.8889).abs() < 1e-4);
        assert!((r.f1 - 0.8421).abs() < 1e-4);
    }

    #[test]
    fn perfect_prediction_scores_all_ones() {
        let gt = mask(&[1, 0, 1, 1, 0]);
        let r = point_metrics(&gt, &gt).unwrap();
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn all_negative_on_all_negative_truth() {
        let m = mask(&[0, 0, 0, 0]);
        let r = point_metrics(&m, &m).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.precision, 0.0);
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn mismatched_masks_are_rejected() {
        let e = point_metrics(&mask(&[1]), &mask(&[1, 0])).unwrap_err();
        assert_eq!(e, EvaluateError::LengthMismatch { pred: 1, gt: 2 });
    }

    #[test]
    fn empty_masks_score_zero_by_convention() {
        let r = point_metrics(&[], &[]).unwrap();
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (0.0, 0.0, 0.0, 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn swapping_masks_swaps_precision_and_recall(
            bits in proptest::collection::vec((0u8..2, 0u8..2), 1..200),
        ) {
            let pred = mask(&bits.iter().map(|b| b.0).collect::<Vec<_>>());
            let gt = mask(&bits.iter().map(|b| b.1).collect::<Vec<_>>());
            let fwd = point_metrics(&pred, &gt).unwrap();
            let rev = point_metrics(&gt, &pred).unwrap();
            prop_assert!((fwd.precision - rev.recall).abs() < 1e-12);
            prop_assert!((fwd.recall - rev.precision).abs() < 1e-12);
            prop_assert!((fwd.accuracy - rev.accuracy).abs() < 1e-12);
            // Harmonic mean sits between its arguments.
            if fwd.f1 > 0.0 {
                let lo = fwd.precision.min(fwd.recall);
                let hi = fwd.precision.max(fwd.recall);
                prop_assert!(fwd.f1 >= lo - 1e-12 && fwd.f1 <= hi + 1e-12);
            }
        }

        #[test]
        fn identical_masks_with_both_classes_score_ones(
            bits in proptest::collection::vec(0u8..2, 2..100),
        ) {
            prop_assume!(bits.contains(&0) && bits.contains(&1));
            let m = mask(&bits);
            let r = point_metrics(&m, &m).unwrap();
            prop_assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (1.0, 1.0, 1.0, 1.0));
        }
    }

    // ---- object level ----

    fn box_at(x: f64, y: f64) -> Obb {
        Obb { center: Vec3::new(x, y, 0.8), length: 4.0, width: 1.8, height: 1.6, yaw: 0.0 }
    }

    #[test]
    fn identical_box_sets_match_perfectly() {
        let boxes = [box_at(0.0, 0.0), box_at(10.0, 3.0), box_at(-5.0, 7.0)];
        let m = object_metrics(&boxes, &boxes, 2.0).unwrap();
        assert_eq!((m.true_pos, m.false_pos, m.false_neg), (3, 0, 0));
        assert_eq!(m.report.precision, 1.0);
        assert_eq!(m.report.recall, 1.0);
    }

    #[test]
    fn empty_prediction_misses_everything() {
        let gt = [box_at(0.0, 0.0), box_at(9.0, 0.0)];
        let m = object_metrics(&[], &gt, 2.0).unwrap();
        assert_eq!((m.true_pos, m.false_pos, m.false_neg), (0, 0, 2));
        assert_eq!(m.report.recall, 0.0);
    }

    #[test]
    fn count_identities_hold() {
        let pred = [box_at(0.0, 0.0), box_at(0.5, 0.0), box_at(30.0, 0.0)];
        let gt = [box_at(0.2, 0.0), box_at(50.0, 0.0)];
        let m = object_metrics(&pred, &gt, 2.0).unwrap();
        assert_eq!(m.true_pos + m.false_neg, gt.len() as u64);
        assert_eq!(m.true_pos + m.false_pos, pred.len() as u64);
        // Greedy takes the closer of the two near-origin predictions.
        assert_eq!(m.pairs, vec![(0, 0)]);
    }

    // Exhaustive maximum matching for tiny instances.
    fn optimal_tp(pred: &[Obb], gt: &[Obb], radius: f64) -> u64 {
        fn recurse(pi: usize, pred: &[Obb], gt: &[Obb], used: &mut [bool], radius: f64) -> u64 {
            if pi == pred.len() {
                return 0;
            }
            // Skip this prediction.
            let mut best = recurse(pi + 1, pred, gt, used, radius);
            for gi in 0..gt.len() {
                if !used[gi] && pred[pi].center.bev_dist(gt[gi].center) <= radius {
                    used[gi] = true;
                    best = best.max(1 + recurse(pi + 1, pred, gt, used, radius));
                    used[gi] = false;
                }
            }
            best
        }
        let mut used = alloc::vec![false; gt.len()];
        recurse(0, pred, gt, &mut used, radius)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(80))]

        // Well-separated sites, each holding a handful of boxes: the
        // match graph splits into complete bipartite blocks, where
        // greedy attains the optimum.
        #[test]
        fn greedy_matches_brute_force_on_disjoint_neighborhoods(
            sites in proptest::collection::vec((0usize..3, 0usize..3), 1..4),
            jitter in proptest::collection::vec((-0.4f64..0.4, -0.4f64..0.4), 12),
        ) {
            let radius = 2.0;
            let mut pred = Vec::new();
            let mut gt = Vec::new();
            let mut j = jitter.iter().cycle();
            for (s, &(np, ng)) in sites.iter().enumerate() {
                let cx = s as f64 * 100.0;
                for _ in 0..np {
                    let (dx, dy) = *j.next().unwrap();
                    pred.push(box_at(cx + dx, dy));
                }
                for _ in 0..ng {
                    let (dx, dy) = *j.next().unwrap();
                    gt.push(box_at(cx + dx, dy));
                }
            }
            prop_assume!(pred.len() <= 6 && gt.len() <= 6);
            let m = object_metrics(&pred, &gt, radius).unwrap();
            prop_assert_eq!(m.true_pos, optimal_tp(&pred, &gt, radius));
            prop_assert_eq!(m.true_pos + m.false_neg, gt.len() as u64);
            prop_assert_eq!(m.true_pos + m.false_pos, pred.len() as u64);
        }
    }

    // ---- path level ----

    #[test]
    fn published_count_accuracies_reproduce() {
        let cases = [
            (211u64, 223u64, 0.9431),
            (221, 204, 0.9231),
            (86, 82, 0.9535),
            (92, 88, 0.9565),
        ];
        for (reference, measured, expect) in cases {
            let acc = path_count_accuracy(reference, measured).unwrap();
            assert!(
                (acc - expect).abs() <= 1e-4,
                "({reference}, {measured}) gave {acc}, wanted {expect}"
            );
        }
        assert_eq!(path_count_accuracy(50, 50).unwrap(), 1.0);
        assert_eq!(path_count_accuracy(0, 3), Err(EvaluateError::ZeroReference));
    }

    fn confirmed(t: f64, x: f64, y: f64) -> PathSample {
        PathSample { timestamp: t, x, y, status: TrackStatus::Confirmed }
    }

    fn vertical_line() -> Screenline {
        // Direction +y: the left side is x < 0, so crossing toward
        // positive x is inbound.
        Screenline::new([0.0, -10.0], [0.0, 10.0]).unwrap()
    }

    #[test]
    fn single_crossing_counts_inbound() {
        let traj = Trajectory {
            track_id: 1,
            samples: vec![confirmed(0.0, -2.0, 0.0), confirmed(0.1, 2.0, 0.0)],
        };
        let m = count_movements(&[traj], &vertical_line(), 2.0).unwrap();
        assert_eq!(m, Movements { inbound: 1, outbound: 0 });
    }

    #[test]
    fn reverse_crossing_counts_outbound() {
        let traj = Trajectory {
            track_id: 1,
            samples: vec![confirmed(0.0, 2.0, 1.0), confirmed(0.1, -2.0, 1.0)],
        };
        let m = count_movements(&[traj], &vertical_line(), 2.0).unwrap();
        assert_eq!(m, Movements { inbound: 0, outbound: 1 });
    }

    #[test]
    fn oscillation_within_the_window_counts_once() {
        let traj = Trajectory {
            track_id: 7,
            samples: vec![
                confirmed(0.0, -1.0, 0.0),
                confirmed(0.2, 1.0, 0.0),
                confirmed(0.4, -1.0, 0.0),
                confirmed(0.6, 1.0, 0.0),
                confirmed(0.8, -1.0, 0.0),
            ],
        };
        let m = count_movements(&[traj], &vertical_line(), 2.0).unwrap();
        assert_eq!(m.inbound + m.outbound, 1);
    }

    #[test]
    fn crossings_past_the_window_count_again() {
        let traj = Trajectory {
            track_id: 7,
            samples: vec![
                confirmed(0.0, -1.0, 0.0),
                confirmed(0.5, 1.0, 0.0),
                confirmed(5.0, 1.0, 0.0),
                confirmed(5.5, -1.0, 0.0),
            ],
        };
        let m = count_movements(&[traj], &vertical_line(), 2.0).unwrap();
        assert_eq!(m, Movements { inbound: 1, outbound: 1 });
    }

    #[test]
    fn unconfirmed_motion_is_ignored() {
        let mut samples =
            vec![confirmed(0.0, -2.0, 0.0), confirmed(0.1, 2.0, 0.0)];
        samples[1].status = TrackStatus::Candidate;
        let traj = Trajectory { track_id: 3, samples };
        let m = count_movements(&[traj], &vertical_line(), 2.0).unwrap();
        assert_eq!(m, Movements::default());
    }

    #[test]
    fn motion_beside_the_segment_does_not_count() {
        // Crosses the infinite line but 5 m beyond the segment's end.
        let traj = Trajectory {
            track_id: 9,
            samples: vec![confirmed(0.0, -2.0, 15.0), confirmed(0.1, 2.0, 15.0)],
        };
        let m = count_movements(&[traj], &vertical_line(), 2.0).unwrap();
        assert_eq!(m, Movements::default());
    }

    #[test]
    fn several_tracks_sum_independently() {
        let line = vertical_line();
        let mut trajectories = Vec::new();
        for i in 0..12u64 {
            trajectories.push(Trajectory {
                track_id: i,
                samples: vec![
                    confirmed(i as f64, -3.0, i as f64 - 6.0),
                    confirmed(i as f64 + 0.1, 3.0, i as f64 - 6.0),
                ],
            });
        }
        for i in 0..9u64 {
            trajectories.push(Trajectory {
                track_id: 100 + i,
                samples: vec![
                    confirmed(i as f64, 3.0, i as f64 - 4.0),
                    confirmed(i as f64 + 0.1, -3.0, i as f64 - 4.0),
                ],
            });
        }
        let m = count_movements(&trajectories, &line, 2.0).unwrap();
        assert_eq!(m, Movements { inbound: 12, outbound: 9 });
    }

    #[test]
    fn degenerate_screenline_is_rejected() {
        assert!(Screenline::new([1.0, 1.0], [1.0, 1.0]).is_err());
        assert!(Screenline::new([f64::NAN, 0.0], [1.0, 1.0]).is_err());
    }
}
