//! Object extraction over foreground points: geofence filter, local
//! outlier removal, density clustering, oriented boxes, rule-based road
//! user classification and track lifecycle management.
//!
//! Stage order within a frame is fixed: geofence, background
//! subtraction (elsewhere), outlier removal, clustering, box fitting,
//! classification, tracking. [`segment_objects`] drives the middle
//! stages and guarantees that every input point lands in exactly one of
//! a cluster, the outlier-removed set, or clustering noise.

use crate::linalg::Vec3;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[non_exhaustive]
pub enum DetectError {
    InvalidPolygon(&'static str),
    InvalidParameter(&'static str),
    DegenerateCluster,
}

impl fmt::Display for DetectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectError::InvalidPolygon(why) => write!(f, "invalid polygon: {why}"),
            DetectError::InvalidParameter(which) => write!(f, "invalid parameter: {which}"),
            DetectError::DegenerateCluster => {
                write!(f, "cluster is too small or collinear for a box fit")
            }
        }
    }
}

impl core::error::Error for DetectError {}

// ---------------------------------------------------------------------
// Geofence
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FenceMode {
    Include,
    Exclude,
}

/// Simple polygon over the sensor XY plane. Construction checks the
/// shape once so membership tests never fail.
#[derive(Debug, Clone, PartialEq)]
pub struct GeofencePolygon {
    vertices: Vec<[f64; 2]>,
    mode: FenceMode,
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn point_on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    if libm::fabs(cross2(a, b, p)) > 1e-12 {
        return false;
    }
    p[0] >= a[0].min(b[0]) - 1e-12
        && p[0] <= a[0].max(b[0]) + 1e-12
        && p[1] >= a[1].min(b[1]) - 1e-12
        && p[1] <= a[1].max(b[1]) + 1e-12
}

/// True when segments ab and cd share any point.
fn segments_touch(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross2(c, d, a);
    let d2 = cross2(c, d, b);
    let d3 = cross2(a, b, c);
    let d4 = cross2(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    point_on_segment(c, d, a)
        || point_on_segment(c, d, b)
        || point_on_segment(a, b, c)
        || point_on_segment(a, b, d)
}

impl GeofencePolygon {
    pub fn new(vertices: Vec<[f64; 2]>, mode: FenceMode) -> Result<Self, DetectError> {
        let n = vertices.len();
        if n < 3 {
            return Err(DetectError::InvalidPolygon("fewer than 3 vertices"));
        }
        if vertices.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(DetectError::InvalidPolygon("non-finite vertex"));
        }
        for i in 0..n {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            if a == b {
                return Err(DetectError::InvalidPolygon("zero-length edge"));
            }
            for j in (i + 1)..n {
                // Edges sharing a vertex may touch only there; all other
                // pairs must stay disjoint for the polygon to be simple.
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    let shared = if j == i + 1 { b } else { a };
                    let (oa, oc) = if j == i + 1 { (a, d) } else { (b, c) };
                    if point_on_segment(c, d, oa) && oa != shared {
                        return Err(DetectError::InvalidPolygon("edges overlap"));
                    }
                    if point_on_segment(a, b, oc) && oc != shared {
                        return Err(DetectError::InvalidPolygon("edges overlap"));
                    }
                } else if segments_touch(a, b, c, d) {
                    return Err(DetectError::InvalidPolygon("self-intersecting"));
                }
            }
        }
        Ok(GeofencePolygon { vertices, mode })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn mode(&self) -> FenceMode {
        self.mode
    }

    /// Winding-number membership; the boundary counts as inside.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let p = [x, y];
        let n = self.vertices.len();
        let mut winding = 0i32;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if point_on_segment(a, b, p) {
                return true;
            }
            if a[1] <= p[1] {
                if b[1] > p[1] && cross2(a, b, p) > 0.0 {
                    winding += 1;
                }
            } else if b[1] <= p[1] && cross2(a, b, p) < 0.0 {
                winding -= 1;
            }
        }
        winding != 0
    }
}

/// Indices of the points kept by the fence set: inside some Include
/// region (or all of them, when none is configured) and outside every
/// Exclude region.
pub fn geofence_filter(points: &[Vec3], fences: &[GeofencePolygon]) -> Vec<usize> {
    let any_include = fences.iter().any(|f| f.mode == FenceMode::Include);
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let included = !any_include
                || fences
                    .iter()
                    .any(|f| f.mode == FenceMode::Include && f.contains(p.x, p.y));
            let excluded = fences
                .iter()
                .any(|f| f.mode == FenceMode::Exclude && f.contains(p.x, p.y));
            included && !excluded
        })
        .map(|(i, _)| i)
        .collect()
}

// ---------------------------------------------------------------------
// Local outlier factor
// ---------------------------------------------------------------------

/// Classical LOF scores: k-distance neighborhoods (distance ties all
/// included), reachability distances, local reachability density, and
/// the density ratio. Fewer than k+1 points score 1.0 across the board,
/// matching the pass-through rule of [`lof_filter`].
pub fn lof_scores(points: &[Vec3], k: usize) -> Result<Vec<f64>, DetectError> {
    if k < 1 {
        return Err(DetectError::InvalidParameter("k"));
    }
    let n = points.len();
    if n < k + 1 {
        return Ok(vec![1.0; n]);
    }

    // k-distance and neighborhood per point.
    let mut kdist = vec![0.0f64; n];
    let mut neighborhoods: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        dists.clear();
        for j in 0..n {
            if j != i {
                dists.push((libm::sqrt(points[i].dist2(points[j])), j));
            }
        }
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        let kd = dists[k - 1].0;
        kdist[i] = kd;
        neighborhoods.push(
            dists
                .iter()
                .take_while(|(d, _)| *d <= kd)
                .map(|&(_, j)| j)
                .collect(),
        );
    }

    let mut lrd = vec![0.0f64; n];
    for i in 0..n {
        let mut reach_sum = 0.0;
        for &j in &neighborhoods[i] {
            let d = libm::sqrt(points[i].dist2(points[j]));
            reach_sum += d.max(kdist[j]);
        }
        // All neighbors coincident with the point: infinite density.
        lrd[i] = if reach_sum > 0.0 {
            neighborhoods[i].len() as f64 / reach_sum
        } else {
            f64::INFINITY
        };
    }

    let mut scores = vec![1.0f64; n];
    for i in 0..n {
        if lrd[i].is_infinite() {
            // Densest possible point; by convention not an outlier.
            scores[i] = 1.0;
            continue;
        }
        let sum: f64 = neighborhoods[i].iter().map(|&j| lrd[j]).sum();
        scores[i] = if sum.is_infinite() {
            f64::INFINITY
        } else {
            sum / (neighborhoods[i].len() as f64 * lrd[i])
        };
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LofSplit {
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
}

/// Removes points whose LOF exceeds the threshold. Fewer than k+1
/// points pass through untouched.
pub fn lof_filter(points: &[Vec3], k: usize, threshold: f64) -> Result<LofSplit, DetectError> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(DetectError::InvalidParameter("threshold"));
    }
    let scores = lof_scores(points, k)?;
    let mut split = LofSplit { kept: Vec::new(), removed: Vec::new() };
    for (i, &s) in scores.iter().enumerate() {
        if s > threshold {
            split.removed.push(i);
        } else {
            split.kept.push(i);
        }
    }
    Ok(split)
}

// ---------------------------------------------------------------------
// Density clustering
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    /// Neighborhood radius, meters.
    pub eps_m: f64,
    /// Neighborhood population (the point itself included) that makes a
    /// core point.
    pub min_pts: usize,
    /// Optional radius growth per meter of pair range, for sparser
    /// returns at distance: the pair radius is
    /// `eps_m * (1 + eps_per_meter * mean(|p|, |q|))`. Zero keeps the
    /// textbook fixed radius.
    pub eps_per_meter: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { eps_m: 0.8, min_pts: 5, eps_per_meter: 0.0 }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.eps_m > 0.0) || !self.eps_m.is_finite() {
            return Err(DetectError::InvalidParameter("eps_m"));
        }
        if self.min_pts < 1 {
            return Err(DetectError::InvalidParameter("min_pts"));
        }
        if !(self.eps_per_meter >= 0.0) || !self.eps_per_meter.is_finite() {
            return Err(DetectError::InvalidParameter("eps_per_meter"));
        }
        Ok(())
    }

    fn pair_eps(&self, p: Vec3, q: Vec3) -> f64 {
        self.eps_m * (1.0 + self.eps_per_meter * 0.5 * (p.norm() + q.norm()))
    }
}

/// Canonical clustering output: clusters ordered by their smallest
/// member index, members ascending, noise ascending. Two runs over
/// permuted input agree after mapping indices back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

/// Hash grid over 3-D voxels of a fixed cell size; candidate neighbors
/// of a point are the 27 cells around it.
struct VoxelIndex {
    cell: f64,
    /// Sorted (voxel key, point index) pairs; binary search per key.
    entries: Vec<([i64; 3], usize)>,
}

impl VoxelIndex {
    fn build(points: &[Vec3], cell: f64) -> VoxelIndex {
        let mut entries: Vec<([i64; 3], usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (Self::key_for(*p, cell), i))
            .collect();
        entries.sort();
        VoxelIndex { cell, entries }
    }

    fn key_for(p: Vec3, cell: f64) -> [i64; 3] {
        [
            libm::floor(p.x / cell) as i64,
            libm::floor(p.y / cell) as i64,
            libm::floor(p.z / cell) as i64,
        ]
    }

    fn candidates(&self, p: Vec3, out: &mut Vec<usize>) {
        out.clear();
        let k = Self::key_for(p, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let key = [k[0] + dx, k[1] + dy, k[2] + dz];
                    let start = self.entries.partition_point(|(e, _)| *e < key);
                    for (e, idx) in &self.entries[start..] {
                        if *e != key {
                            break;
                        }
                        out.push(*idx);
                    }
                }
            }
        }
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect() }
    }

    fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = i;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Lower root wins, keeping labels deterministic.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Density clustering with core/border/noise semantics. Core points
/// within the pair radius connect into one cluster; a non-core point
/// joins its nearest core neighbor's cluster (ties toward the lower
/// index), which makes the partition independent of input order; the
/// rest is noise.
pub fn cluster(points: &[Vec3], cfg: &ClusterConfig) -> Result<Clustering, DetectError> {
    cfg.validate()?;
    let n = points.len();
    if n == 0 {
        return Ok(Clustering { clusters: Vec::new(), noise: Vec::new() });
    }

    let max_range = points.iter().map(|p| p.norm()).fold(0.0f64, f64::max);
    let eps_max = cfg.eps_m * (1.0 + cfg.eps_per_meter * max_range);
    let index = VoxelIndex::build(points, eps_max);

    // Neighbor lists once; everything below reuses them.
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut cand = Vec::new();
    for i in 0..n {
        index.candidates(points[i], &mut cand);
        for &j in &cand {
            if j == i {
                continue;
            }
            let eps = cfg.pair_eps(points[i], points[j]);
            if points[i].dist2(points[j]) <= eps * eps {
                neighbors[i].push(j);
            }
        }
    }

    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() + 1 >= cfg.min_pts).collect();

    let mut dsu = DisjointSet::new(n);
    for i in 0..n {
        if !core[i] {
            continue;
        }
        for &j in &neighbors[i] {
            if core[j] {
                dsu.union(i, j);
            }
        }
    }

    // Border points attach to their nearest core neighbor.
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        if core[i] {
            assignment[i] = Some(dsu.find(i));
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for &j in &neighbors[i] {
            if !core[j] {
                continue;
            }
            let d = points[i].dist2(points[j]);
            if best.map_or(true, |(bd, bj)| d < bd || (d == bd && j < bj)) {
                best = Some((d, j));
            }
        }
        assignment[i] = best.map(|(_, j)| dsu.find(j));
    }

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut root_slot: Vec<Option<usize>> = vec![None; n];
    let mut noise = Vec::new();
    for i in 0..n {
        match assignment[i] {
            None => noise.push(i),
            Some(root) => match root_slot[root] {
                Some(slot) => clusters[slot].push(i),
                None => {
                    root_slot[root] = Some(clusters.len());
                    clusters.push(vec![i]);
                }
            },
        }
    }
    // First members arrive in index order, so clusters are already
    // sorted by smallest member and members are ascending.
    Ok(Clustering { clusters, noise })
}

// ---------------------------------------------------------------------
// Oriented bounding boxes
// ---------------------------------------------------------------------

/// Box around a cluster: `yaw` is the heading of the long side in the
/// XY plane, always in [0, pi); `length >= width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub center: Vec3,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
}

impl Obb {
    /// Membership with slack on every half-extent.
    pub fn contains(&self, p: Vec3, slack: f64) -> bool {
        let (c, s) = (libm::cos(self.yaw), libm::sin(self.yaw));
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        let along = c * dx + s * dy;
        let across = -s * dx + c * dy;
        libm::fabs(along) <= self.length / 2.0 + slack
            && libm::fabs(across) <= self.width / 2.0 + slack
            && libm::fabs(p.z - self.center.z) <= self.height / 2.0 + slack
    }
}

/// Principal-axis box fit: yaw from the XY covariance, extents from the
/// rotated spans, height from the z range.
pub fn fit_obb(points: &[Vec3]) -> Result<Obb, DetectError> {
    if points.len() < 3 {
        return Err(DetectError::DegenerateCluster);
    }
    let n = points.len() as f64;
    let mut mx = 0.0;
    let mut my = 0.0;
    for p in points {
        mx += p.x;
        my += p.y;
    }
    mx /= n;
    my /= n;
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p.x - mx;
        let dy = p.y - my;
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
    }
    cxx /= n;
    cyy /= n;
    cxy /= n;

    let half_trace = (cxx + cyy) / 2.0;
    let radius = libm::sqrt((cxx - cyy) * (cxx - cyy) / 4.0 + cxy * cxy);
    if half_trace - radius <= 1e-9 {
        return Err(DetectError::DegenerateCluster);
    }
    let mut yaw = 0.5 * libm::atan2(2.0 * cxy, cxx - cyy);

    let (c, s) = (libm::cos(yaw), libm::sin(yaw));
    let mut lo_a = f64::INFINITY;
    let mut hi_a = f64::NEG_INFINITY;
    let mut lo_b = f64::INFINITY;
    let mut hi_b = f64::NEG_INFINITY;
    let mut lo_z = f64::INFINITY;
    let mut hi_z = f64::NEG_INFINITY;
    for p in points {
        let along = c * p.x + s * p.y;
        let across = -s * p.x + c * p.y;
        lo_a = lo_a.min(along);
        hi_a = hi_a.max(along);
        lo_b = lo_b.min(across);
        hi_b = hi_b.max(across);
        lo_z = lo_z.min(p.z);
        hi_z = hi_z.max(p.z);
    }
    let mut length = hi_a - lo_a;
    let mut width = hi_b - lo_b;
    let center_along = (hi_a + lo_a) / 2.0;
    let center_across = (hi_b + lo_b) / 2.0;
    if width > length {
        core::mem::swap(&mut length, &mut width);
        yaw += core::f64::consts::FRAC_PI_2;
    }
    // The world center comes from the frame the spans were measured in;
    // the later yaw adjustments rotate the frame by multiples of 90
    // degrees, which moves axis labels but not this point.
    let center = Vec3::new(
        c * center_along - s * center_across,
        s * center_along + c * center_across,
        (hi_z + lo_z) / 2.0,
    );
    let yaw = normalize_yaw(yaw);
    Ok(Obb { center, length, width, height: hi_z - lo_z, yaw })
}

fn normalize_yaw(yaw: f64) -> f64 {
    let pi = core::f64::consts::PI;
    let mut y = yaw % pi;
    if y < 0.0 {
        y += pi;
    }
    if y >= pi {
        y -= pi;
    }
    y
}

// ---------------------------------------------------------------------
// Road-user classification
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectClass {
    Pedestrian,
    Car,
    Truck,
    LargeFreight,
    Unknown,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 5] = [
        ObjectClass::Pedestrian,
        ObjectClass::Car,
        ObjectClass::Truck,
        ObjectClass::LargeFreight,
        ObjectClass::Unknown,
    ];

    pub fn index(self) -> usize {
        match self {
            ObjectClass::Pedestrian => 0,
            ObjectClass::Car => 1,
            ObjectClass::Truck => 2,
            ObjectClass::LargeFreight => 3,
            ObjectClass::Unknown => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Pedestrian => "pedestrian",
            ObjectClass::Car => "car",
            ObjectClass::Truck => "truck",
            ObjectClass::LargeFreight => "large_freight",
            ObjectClass::Unknown => "unknown",
        }
    }
}

/// Size and speed thresholds for the rule table, meters and m/s. The
/// defaults are engineering choices, deliberately overridable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRules {
    pub ped_max_length: f64,
    pub ped_min_height: f64,
    pub ped_max_height: f64,
    pub ped_max_speed: f64,
    pub car_min_length: f64,
    pub car_max_length: f64,
    pub car_max_height: f64,
    pub truck_max_length: f64,
    pub truck_min_height: f64,
    pub truck_max_height: f64,
    pub freight_min_length: f64,
    pub freight_min_height: f64,
}

impl Default for ClassRules {
    fn default() -> Self {
        ClassRules {
            ped_max_length: 1.2,
            ped_min_height: 1.0,
            ped_max_height: 2.2,
            ped_max_speed: 3.0,
            car_min_length: 3.0,
            car_max_length: 6.0,
            car_max_height: 2.2,
            truck_max_length: 10.0,
            truck_min_height: 2.2,
            truck_max_height: 3.5,
            freight_min_length: 10.0,
            freight_min_height: 3.5,
        }
    }
}

/// Rule-table classification on box length L, height H and speed v.
/// Rules fire in size order so the overlapping cells resolve the same
/// way every time: LargeFreight (L > 10 or H > 3.5), then Truck
/// (L in (6,10] or L in [3,6] with H in [2.2,3.5]), then Car
/// (L in [3,6], H < 2.2), then Pedestrian (L < 1.2, H in [1.0,2.2],
/// v < 3), else Unknown.
pub fn classify_object(obb: &Obb, speed: f64, rules: &ClassRules) -> ObjectClass {
    let l = obb.length;
    let h = obb.height;
    if l > rules.freight_min_length || h > rules.freight_min_height {
        return ObjectClass::LargeFreight;
    }
    let mid_length = l >= rules.car_min_length && l <= rules.car_max_length;
    if (l > rules.car_max_length && l <= rules.truck_max_length)
        || (mid_length && h >= rules.truck_min_height && h <= rules.truck_max_height)
    {
        return ObjectClass::Truck;
    }
    if mid_length && h < rules.car_max_height {
        return ObjectClass::Car;
    }
    if l < rules.ped_max_length
        && h >= rules.ped_min_height
        && h <= rules.ped_max_height
        && speed < rules.ped_max_speed
    {
        return ObjectClass::Pedestrian;
    }
    ObjectClass::Unknown
}

// ---------------------------------------------------------------------
// Detections
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub centroid: Vec3,
    pub obb: Obb,
    pub point_count: usize,
    pub class: ObjectClass,
}

/// Builds one detection from a cluster's points. Speed is unknown at
/// this stage, so the size rules run with speed 0; the tracker re-votes
/// with its own estimate.
pub fn make_detection(points: &[Vec3], rules: &ClassRules) -> Result<Detection, DetectError> {
    let obb = fit_obb(points)?;
    let n = points.len() as f64;
    let mut centroid = Vec3::ZERO;
    for p in points {
        centroid = centroid + *p;
    }
    let centroid = centroid * (1.0 / n);
    Ok(Detection {
        centroid,
        obb,
        point_count: points.len(),
        class: classify_object(&obb, 0.0, rules),
    })
}

/// Outlier removal then clustering; all indices refer to the input
/// slice. Every input index lands in exactly one of `clusters`,
/// `lof_removed`, or `noise`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub clusters: Vec<Vec<usize>>,
    pub lof_removed: Vec<usize>,
    pub noise: Vec<usize>,
}

pub fn segment_objects(
    points: &[Vec3],
    lof_k: usize,
    lof_threshold: f64,
    cfg: &ClusterConfig,
) -> Result<Segmentation, DetectError> {
    let split = lof_filter(points, lof_k, lof_threshold)?;
    let survivors: Vec<Vec3> = split.kept.iter().map(|&i| points[i]).collect();
    let clustering = cluster(&survivors, cfg)?;
    Ok(Segmentation {
        clusters: clustering
            .clusters
            .into_iter()
            .map(|c| c.into_iter().map(|i| split.kept[i]).collect())
            .collect(),
        lof_removed: split.removed,
        noise: clustering.noise.into_iter().map(|i| split.kept[i]).collect(),
    })
}

// ---------------------------------------------------------------------
// Tracking
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Candidate,
    Confirmed,
    Deleted,
}

impl TrackStatus {
    pub fn name(self) -> &'static str {
        match self {
            TrackStatus::Candidate => "candidate",
            TrackStatus::Confirmed => "confirmed",
            TrackStatus::Deleted => "deleted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Association gate in the XY plane, meters.
    pub gate_m: f64,
    /// Consecutive hits that confirm a candidate.
    pub confirm_hits: u32,
    /// Misses within the 8-frame window that delete a track.
    pub delete_misses: u32,
    /// Whether the spawning detection counts as the first hit or the
    /// streak starts at zero.
    pub spawn_counts_as_hit: bool,
    /// Fraction of the newly measured velocity blended in per match.
    pub velocity_blend: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            gate_m: 3.0,
            confirm_hits: 6,
            delete_misses: 7,
            spawn_counts_as_hit: true,
            velocity_blend: 0.5,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.gate_m > 0.0) || !self.gate_m.is_finite() {
            return Err(DetectError::InvalidParameter("gate_m"));
        }
        if self.confirm_hits < 1 {
            return Err(DetectError::InvalidParameter("confirm_hits"));
        }
        if self.delete_misses < 1 || self.delete_misses > 8 {
            return Err(DetectError::InvalidParameter("delete_misses"));
        }
        if !(0.0..=1.0).contains(&self.velocity_blend) {
            return Err(DetectError::InvalidParameter("velocity_blend"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    id: u64,
    position: Vec3,
    velocity: [f64; 2],
    yaw: f64,
    status: TrackStatus,
    /// Hit/miss bits, most recent in bit 0; only the low `age` bits are
    /// meaningful while the track is younger than the window.
    hit_history: u8,
    consecutive_hits: u32,
    age: u32,
    class_votes: [u32; 5],
}

impl Track {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn velocity(&self) -> [f64; 2] {
        self.velocity
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn speed(&self) -> f64 {
        libm::sqrt(self.velocity[0] * self.velocity[0] + self.velocity[1] * self.velocity[1])
    }

    pub fn status(&self) -> TrackStatus {
        self.status
    }

    pub fn consecutive_hits(&self) -> u32 {
        self.consecutive_hits
    }

    pub fn age(&self) -> u32 {
        self.age
    }

    /// Majority class over every matched detection; ties resolve to the
    /// smaller class, with Unknown ordered last.
    pub fn class(&self) -> ObjectClass {
        let mut best = ObjectClass::Unknown;
        let mut best_votes = 0u32;
        for class in ObjectClass::ALL {
            let v = self.class_votes[class.index()];
            if v > best_votes {
                best = class;
                best_votes = v;
            }
        }
        best
    }

    /// Misses within the last 8 frames, not counting frames before the
    /// track existed.
    fn misses_in_window(&self) -> u32 {
        let window = self.age.min(8);
        let mask = if window >= 8 { 0xffu8 } else { (1u8 << window) - 1 };
        window - (self.hit_history & mask).count_ones()
    }

    fn push_hit(&mut self) {
        self.hit_history = (self.hit_history << 1) | 1;
        self.consecutive_hits += 1;
        self.age = self.age.saturating_add(1);
    }

    fn push_miss(&mut self) {
        self.hit_history <<= 1;
        self.consecutive_hits = 0;
        self.age = self.age.saturating_add(1);
    }
}

/// Constant-velocity multi-target tracker with greedy nearest-neighbor
/// association and the fixed lifecycle: candidates confirm on the 6th
/// consecutive hit, anything missing 7 of its last 8 frames is deleted.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self, DetectError> {
        cfg.validate()?;
        Ok(Tracker { cfg, tracks: Vec::new(), next_id: 0 })
    }

    /// Every track, including ones deleted by the most recent step;
    /// those disappear on the next step.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Advances one frame: predict, associate, update, spawn, retire.
    pub fn step(&mut self, detections: &[Detection], dt: f64) -> Result<(), DetectError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(DetectError::InvalidParameter("dt"));
        }
        self.tracks.retain(|t| t.status != TrackStatus::Deleted);

        // Keep the pre-predict positions: velocity is measured against
        // where the track actually was, not where we guessed it would be.
        let previous: Vec<Vec3> = self.tracks.iter().map(|t| t.position).collect();
        for t in self.tracks.iter_mut() {
            t.position.x += t.velocity[0] * dt;
            t.position.y += t.velocity[1] * dt;
        }

        // Globally greedy one-to-one assignment, closest pairs first.
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, t) in self.tracks.iter().enumerate() {
            for (di, d) in detections.iter().enumerate() {
                let dist = t.position.bev_dist(d.centroid);
                if dist <= self.cfg.gate_m {
                    pairs.push((dist, ti, di));
                }
            }
        }
        pairs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        let mut track_match: Vec<Option<usize>> = vec![None; self.tracks.len()];
        let mut det_taken = vec![false; detections.len()];
        for (_, ti, di) in pairs {
            if track_match[ti].is_none() && !det_taken[di] {
                track_match[ti] = Some(di);
                det_taken[di] = true;
            }
        }

        for (ti, matched) in track_match.iter().enumerate() {
            let t = &mut self.tracks[ti];
            match matched {
                Some(di) => {
                    let d = &detections[*di];
                    let measured = [
                        (d.centroid.x - previous[ti].x) / dt,
                        (d.centroid.y - previous[ti].y) / dt,
                    ];
                    let b = self.cfg.velocity_blend;
                    t.velocity[0] = (1.0 - b) * t.velocity[0] + b * measured[0];
                    t.velocity[1] = (1.0 - b) * t.velocity[1] + b * measured[1];
                    t.position = d.centroid;
                    t.yaw = d.obb.yaw;
                    t.class_votes[d.class.index()] += 1;
                    t.push_hit();
                    if t.status == TrackStatus::Candidate
                        && t.consecutive_hits >= self.cfg.confirm_hits
                    {
                        t.status = TrackStatus::Confirmed;
                    }
                }
                None => t.push_miss(),
            }
            if t.misses_in_window() >= self.cfg.delete_misses {
                t.status = TrackStatus::Deleted;
            }
        }

        for (di, d) in detections.iter().enumerate() {
            if det_taken[di] {
                continue;
            }
            let mut track = Track {
                id: self.next_id,
                position: d.centroid,
                velocity: [0.0, 0.0],
                yaw: d.obb.yaw,
                status: TrackStatus::Candidate,
                hit_history: 1,
                consecutive_hits: u32::from(self.cfg.spawn_counts_as_hit),
                age: 1,
                class_votes: [0; 5],
            };
            track.class_votes[d.class.index()] = 1;
            self.next_id += 1;
            self.tracks.push(track);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn square(cx: f64, cy: f64, half: f64, mode: FenceMode) -> GeofencePolygon {
        GeofencePolygon::new(
            vec![
                [cx - half, cy - half],
                [cx + half, cy - half],
                [cx + half, cy + half],
                [cx - half, cy + half],
            ],
            mode,
        )
        .unwrap()
    }

    // Crossing-number membership, written independently of the winding
    // implementation, for equivalence checks.
    fn ray_cast_contains(verts: &[[f64; 2]], x: f64, y: f64) -> bool {
        let n = verts.len();
        for i in 0..n {
            if point_on_segment(verts[i], verts[(i + 1) % n], [x, y]) {
                return true;
            }
        }
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = (verts[i][0], verts[i][1]);
            let (xj, yj) = (verts[j][0], verts[j][1]);
            if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    #[test]
    fn no_fences_is_identity() {
        let pts = [p(1.0, 2.0, 0.0), p(-3.0, 0.5, 1.0)];
        assert_eq!(geofence_filter(&pts, &[]), vec![0, 1]);
    }

    #[test]
    fn include_square_keeps_inside_drops_outside() {
        let sq = GeofencePolygon::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            FenceMode::Include,
        )
        .unwrap();
        let pts = [p(0.5, 0.5, 3.0), p(2.0, 2.0, -1.0), p(1.0, 0.5, 0.0)];
        // The boundary point is kept.
        assert_eq!(geofence_filter(&pts, &[sq]), vec![0, 2]);
    }

    #[test]
    fn exclude_cuts_a_hole_in_include() {
        let outer = square(0.0, 0.0, 10.0, FenceMode::Include);
        let inner = square(0.0, 0.0, 3.0, FenceMode::Exclude);
        let fences = [outer.clone(), inner.clone()];
        // Grid sweep against the ray-casting oracle.
        let mut i = -12.0;
        while i <= 12.0 {
            let mut j = -12.0;
            while j <= 12.0 {
                let kept = !geofence_filter(&[p(i, j, 0.0)], &fences).is_empty();
                let expect = ray_cast_contains(outer.vertices(), i, j)
                    && !ray_cast_contains(inner.vertices(), i, j);
                assert_eq!(kept, expect, "at ({i}, {j})");
                j += 0.75;
            }
            i += 0.75;
        }
    }

    #[test]
    fn winding_matches_ray_casting_on_a_concave_polygon() {
        let verts = vec![
            [0.0, 0.0],
            [6.0, 0.0],
            [6.0, 6.0],
            [3.0, 2.5],
            [0.0, 6.0],
        ];
        let poly = GeofencePolygon::new(verts.clone(), FenceMode::Include).unwrap();
        let mut x = -1.0;
        while x <= 7.0 {
            let mut y = -1.0;
            while y <= 7.0 {
                assert_eq!(
                    poly.contains(x, y),
                    ray_cast_contains(&verts, x, y),
                    "at ({x}, {y})"
                );
                y += 0.37;
            }
            x += 0.37;
        }
    }

    #[test]
    fn bad_polygons_are_rejected() {
        assert_eq!(
            GeofencePolygon::new(vec![[0.0, 0.0], [1.0, 0.0]], FenceMode::Include),
            Err(DetectError::InvalidPolygon("fewer than 3 vertices"))
        );
        // Bowtie.
        assert!(GeofencePolygon::new(
            vec![[0.0, 0.0], [2.0, 2.0], [2.0, 0.0], [0.0, 2.0]],
            FenceMode::Include,
        )
        .is_err());
        // Repeated vertex makes a zero-length edge.
        assert!(GeofencePolygon::new(
            vec![[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]],
            FenceMode::Include,
        )
        .is_err());
    }

    // ---- LOF ----

    fn grid_points(nx: usize, ny: usize, spacing: f64) -> Vec<Vec3> {
        let mut pts = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                pts.push(p(i as f64 * spacing, j as f64 * spacing, 0.0));
            }
        }
        pts
    }

    #[test]
    fn uniform_grid_scores_near_one_and_survives() {
        let pts = grid_points(8, 8, 0.5);
        let scores = lof_scores(&pts, 10).unwrap();
        for (i, s) in scores.iter().enumerate() {
            assert!(*s < 1.5, "point {i} scored {s}");
        }
        let split = lof_filter(&pts, 10, 1.5).unwrap();
        assert!(split.removed.is_empty());
        assert_eq!(split.kept.len(), pts.len());
    }

    #[test]
    fn isolated_point_is_removed() {
        let mut pts = grid_points(5, 5, 0.2);
        pts.push(p(10.0, 10.0, 0.0));
        let split = lof_filter(&pts, 5, 1.5).unwrap();
        assert_eq!(split.removed, vec![pts.len() - 1]);
    }

    #[test]
    fn tiny_inputs_pass_through() {
        let pts = [p(0.0, 0.0, 0.0), p(100.0, 0.0, 0.0)];
        let split = lof_filter(&pts, 10, 1.5).unwrap();
        assert_eq!(split.kept, vec![0, 1]);
        assert!(split.removed.is_empty());
        assert!(lof_scores(&pts, 0).is_err());
    }

    #[test]
    fn coincident_points_do_not_blow_up() {
        let mut pts = vec![p(0.0, 0.0, 0.0); 6];
        pts.push(p(0.3, 0.0, 0.0));
        let scores = lof_scores(&pts, 3).unwrap();
        assert!(scores.iter().all(|s| s.is_finite() || s.is_infinite()));
        // The coincident pile is maximally dense: never outliers.
        for s in &scores[..6] {
            assert_eq!(*s, 1.0);
        }
    }

    // Brute-force oracle with its own neighborhood bookkeeping.
    fn lof_oracle(points: &[Vec3], k: usize) -> Vec<f64> {
        let n = points.len();
        let d = |a: usize, b: usize| libm::sqrt(points[a].dist2(points[b]));
        let mut kdist = vec![0.0; n];
        let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let mut all: Vec<(f64, usize)> =
                (0..n).filter(|&j| j != i).map(|j| (d(i, j), j)).collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            kdist[i] = all[k - 1].0;
            nbrs[i] = all.iter().filter(|(dd, _)| *dd <= kdist[i]).map(|&(_, j)| j).collect();
        }
        let lrd: Vec<f64> = (0..n)
            .map(|i| {
                let s: f64 = nbrs[i].iter().map(|&j| d(i, j).max(kdist[j])).sum();
                if s > 0.0 {
                    nbrs[i].len() as f64 / s
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        (0..n)
            .map(|i| {
                if lrd[i].is_infinite() {
                    return 1.0;
                }
                let s: f64 = nbrs[i].iter().map(|&j| lrd[j]).sum();
                if s.is_infinite() {
                    f64::INFINITY
                } else {
                    s / (nbrs[i].len() as f64 * lrd[i])
                }
            })
            .collect()
    }

    // ---- clustering ----

    fn blob(cx: f64, cy: f64, n: usize, spacing: f64) -> Vec<Vec3> {
        // Dense line of points, pairwise reachable at `spacing`.
        (0..n).map(|i| p(cx + i as f64 * spacing, cy, 0.0)).collect()
    }

    #[test]
    fn two_separated_blobs_are_two_clusters() {
        // Spacing 0.3 keeps two-step gaps (0.6) well inside eps 0.8, so
        // the interior points are unambiguously core.
        let cfg = ClusterConfig::default();
        let mut pts = blob(0.0, 0.0, 8, 0.3);
        pts.extend(blob(0.0, 8.0 * cfg.eps_m + 5.0, 8, 0.3));
        let out = cluster(&pts, &cfg).unwrap();
        assert_eq!(out.clusters.len(), 2);
        assert!(out.noise.is_empty());
        assert_eq!(out.clusters[0], (0..8).collect::<Vec<_>>());
        assert_eq!(out.clusters[1], (8..16).collect::<Vec<_>>());
    }

    #[test]
    fn scattered_points_are_all_noise() {
        let cfg = ClusterConfig { min_pts: 3, ..ClusterConfig::default() };
        let pts: Vec<Vec3> = (0..10).map(|i| p(i as f64 * 10.0, 0.0, 0.0)).collect();
        let out = cluster(&pts, &cfg).unwrap();
        assert!(out.clusters.is_empty());
        assert_eq!(out.noise, (0..10).collect::<Vec<_>>());
    }

    // O(n^2) reference with the same border rule.
    fn dbscan_oracle(points: &[Vec3], cfg: &ClusterConfig) -> Clustering {
        let n = points.len();
        let within = |i: usize, j: usize| {
            let eps = cfg.pair_eps(points[i], points[j]);
            points[i].dist2(points[j]) <= eps * eps
        };
        let core: Vec<bool> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && within(i, j)).count() + 1 >= cfg.min_pts)
            .collect();
        // Flood-fill core components.
        let mut comp: Vec<Option<usize>> = vec![None; n];
        let mut next = 0usize;
        for start in 0..n {
            if !core[start] || comp[start].is_some() {
                continue;
            }
            let mut stack = vec![start];
            comp[start] = Some(next);
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    if core[j] && comp[j].is_none() && within(i, j) {
                        comp[j] = Some(next);
                        stack.push(j);
                    }
                }
            }
            next += 1;
        }
        let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); next];
        let mut noise = Vec::new();
        for i in 0..n {
            if core[i] {
                clusters[comp[i].unwrap()].push(i);
                continue;
            }
            let mut best: Option<(f64, usize)> = None;
            for j in 0..n {
                if j == i || !core[j] || !within(i, j) {
                    continue;
                }
                let dd = points[i].dist2(points[j]);
                if best.map_or(true, |(bd, bj)| dd < bd || (dd == bd && j < bj)) {
                    best = Some((dd, j));
                }
            }
            match best {
                Some((_, j)) => clusters[comp[j].unwrap()].push(i),
                None => noise.push(i),
            }
        }
        for c in clusters.iter_mut() {
            c.sort_unstable();
        }
        clusters.sort_by_key(|c| c[0]);
        Clustering { clusters, noise }
    }

    #[test]
    fn border_points_attach_to_the_nearest_core() {
        // Two cores exactly eps apart from a border point; the nearer
        // core is unambiguous.
        let cfg = ClusterConfig { eps_m: 1.0, min_pts: 3, eps_per_meter: 0.0 };
        let pts = vec![
            p(0.0, 0.0, 0.0),
            p(0.5, 0.0, 0.0),
            p(1.0, 0.0, 0.0), // core of left

            p(4.0, 0.0, 0.0),
            p(4.5, 0.0, 0.0),
            p(5.0, 0.0, 0.0), // core of right

            p(1.9, 0.0, 0.0), // border: 0.9 from left core, 2.1 from right
        ];
        let out = cluster(&pts, &cfg).unwrap();
        assert_eq!(out, dbscan_oracle(&pts, &cfg));
        let holding = out.clusters.iter().find(|c| c.contains(&6)).unwrap();
        assert!(holding.contains(&2));
    }

    // ---- OBB ----

    fn rect_points(l: f64, w: f64, yaw: f64, center: [f64; 2]) -> Vec<Vec3> {
        let (c, s) = (libm::cos(yaw), libm::sin(yaw));
        let mut pts = Vec::new();
        let steps = 7;
        for i in 0..=steps {
            for j in 0..=steps {
                let a = -l / 2.0 + l * i as f64 / steps as f64;
                let b = -w / 2.0 + w * j as f64 / steps as f64;
                pts.push(p(
                    center[0] + c * a - s * b,
                    center[1] + s * a + c * b,
                    0.1 * (i as f64 % 3.0),
                ));
            }
        }
        pts
    }

    #[test]
    fn axis_aligned_rectangle_recovers_extents() {
        let obb = fit_obb(&rect_points(4.0, 2.0, 0.0, [10.0, -5.0])).unwrap();
        assert!(obb.yaw.abs() < 1e-9 || (obb.yaw - core::f64::consts::PI).abs() < 1e-9);
        assert!((obb.length - 4.0).abs() < 1e-9);
        assert!((obb.width - 2.0).abs() < 1e-9);
        assert!((obb.center.x - 10.0).abs() < 1e-9);
        assert!((obb.center.y + 5.0).abs() < 1e-9);
    }

    #[test]
    fn rotation_equivariance_at_thirty_degrees() {
        let deg30 = 30.0f64.to_radians();
        let flat = fit_obb(&rect_points(4.0, 2.0, 0.0, [0.0, 0.0])).unwrap();
        let turned = fit_obb(&rect_points(4.0, 2.0, deg30, [0.0, 0.0])).unwrap();
        assert!((turned.length - flat.length).abs() < 1e-6);
        assert!((turned.width - flat.width).abs() < 1e-6);
        let dyaw = (turned.yaw - deg30).abs();
        assert!(dyaw < 1.0f64.to_radians(), "yaw off by {dyaw} rad");
    }

    #[test]
    fn degenerate_clusters_are_refused() {
        assert_eq!(fit_obb(&[p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0)]), Err(DetectError::DegenerateCluster));
        let collinear: Vec<Vec3> = (0..5).map(|i| p(i as f64, 2.0 * i as f64, 0.3)).collect();
        assert_eq!(fit_obb(&collinear), Err(DetectError::DegenerateCluster));
    }

    // ---- classification ----

    fn obb_of(length: f64, height: f64) -> Obb {
        Obb {
            center: Vec3::ZERO,
            length,
            width: length.min(2.0) / 2.0,
            height,
            yaw: 0.0,
        }
    }

    #[test]
    fn rule_table_hand_cases() {
        let rules = ClassRules::default();
        assert_eq!(classify_object(&obb_of(0.5, 1.7), 1.2, &rules), ObjectClass::Pedestrian);
        assert_eq!(classify_object(&obb_of(4.5, 1.5), 10.0, &rules), ObjectClass::Car);
        assert_eq!(classify_object(&obb_of(15.0, 4.0), 0.0, &rules), ObjectClass::LargeFreight);
        assert_eq!(classify_object(&obb_of(15.0, 4.0), 30.0, &rules), ObjectClass::LargeFreight);
        assert_eq!(classify_object(&obb_of(8.0, 3.0), 15.0, &rules), ObjectClass::Truck);
        assert_eq!(classify_object(&obb_of(4.5, 2.8), 10.0, &rules), ObjectClass::Truck);
        // Size precedence: tall mid-length boxes are freight, not truck.
        assert_eq!(classify_object(&obb_of(8.0, 3.6), 15.0, &rules), ObjectClass::LargeFreight);
        // A fast pedestrian-sized box matches nothing.
        assert_eq!(classify_object(&obb_of(0.5, 1.7), 8.0, &rules), ObjectClass::Unknown);
        assert_eq!(classify_object(&obb_of(2.0, 0.5), 5.0, &rules), ObjectClass::Unknown);
    }

    // ---- tracking ----

    fn det_at(x: f64, y: f64) -> Detection {
        let obb = Obb {
            center: Vec3::new(x, y, 0.75),
            length: 4.5,
            width: 1.8,
            height: 1.5,
            yaw: 0.0,
        };
        Detection { centroid: obb.center, obb, point_count: 40, class: ObjectClass::Car }
    }

    #[test]
    fn confirmation_lands_exactly_on_the_sixth_consecutive_hit() {
        let mut tracker = Tracker::new(TrackerConfig::default()).unwrap();
        for frame in 0..6 {
            tracker.step(&[det_at(frame as f64 * 1.5, 0.0)], 0.1).unwrap();
            let t = &tracker.tracks()[0];
            if frame < 5 {
                assert_eq!(t.status(), TrackStatus::Candidate, "frame {frame}");
            } else {
                assert_eq!(t.status(), TrackStatus::Confirmed, "frame {frame}");
            }
        }
    }

    #[test]
    fn a_miss_resets_the_confirmation_streak() {
        let mut tracker = Tracker::new(TrackerConfig::default()).unwrap();
        for frame in 0..5 {
            tracker.step(&[det_at(frame as f64 * 0.5, 0.0)], 0.1).unwrap();
        }
        tracker.step(&[], 0.1).unwrap();
        assert_eq!(tracker.tracks()[0].status(), TrackStatus::Candidate);
        assert_eq!(tracker.tracks()[0].consecutive_hits(), 0);
        // Five more hits: still not confirmed (streak broke).
        for frame in 0..5 {
            tracker.step(&[det_at(2.5 + frame as f64 * 0.5, 0.0)], 0.1).unwrap();
            assert_eq!(tracker.tracks()[0].status(), TrackStatus::Candidate, "hit {frame}");
        }
        // The sixth consecutive confirms.
        tracker.step(&[det_at(5.0, 0.0)], 0.1).unwrap();
        assert_eq!(tracker.tracks()[0].status(), TrackStatus::Confirmed);
    }

    #[test]
    fn deletion_lands_when_the_seventh_miss_enters_the_window() {
        let mut tracker = Tracker::new(TrackerConfig::default()).unwrap();
        // Confirm a stationary target.
        for _ in 0..6 {
            tracker.step(&[det_at(0.0, 0.0)], 0.1).unwrap();
        }
        assert_eq!(tracker.tracks()[0].status(), TrackStatus::Confirmed);
        // Six misses: still alive (6 of last 8).
        for m in 1..=6 {
            tracker.step(&[], 0.1).unwrap();
            assert_eq!(
                tracker.tracks()[0].status(),
                TrackStatus::Confirmed,
                "after miss {m}"
            );
        }
        // Seventh miss within the window: deleted this very step.
        tracker.step(&[], 0.1).unwrap();
        assert_eq!(tracker.tracks()[0].status(), TrackStatus::Deleted);
        // The next step prunes it.
        tracker.step(&[], 0.1).unwrap();
        assert!(tracker.tracks().is_empty());
    }

    #[test]
    fn spawn_not_counting_as_hit_delays_confirmation_one_frame() {
        let cfg = TrackerConfig { spawn_counts_as_hit: false, ..TrackerConfig::default() };
        let mut tracker = Tracker::new(cfg).unwrap();
        for frame in 0..7 {
            tracker.step(&[det_at(frame as f64 * 0.5, 0.0)], 0.1).unwrap();
            let expect = if frame < 6 { TrackStatus::Candidate } else { TrackStatus::Confirmed };
            assert_eq!(tracker.tracks()[0].status(), expect, "frame {frame}");
        }
    }

    #[test]
    fn ids_are_never_reused() {
        let mut tracker = Tracker::new(TrackerConfig::default()).unwrap();
        tracker.step(&[det_at(0.0, 0.0)], 0.1).unwrap();
        let first = tracker.tracks()[0].id();
        // Kill it with 7 straight misses.
        for _ in 0..7 {
            tracker.step(&[], 0.1).unwrap();
        }
        tracker.step(&[det_at(50.0, 50.0)], 0.1).unwrap();
        let second = tracker.tracks()[0].id();
        assert_ne!(first, second);
        assert!(second > first);
    }

    #[test]
    fn out_of_gate_detection_spawns_instead_of_matching() {
        let mut tracker = Tracker::new(TrackerConfig::default()).unwrap();
        tracker.step(&[det_at(0.0, 0.0)], 0.1).unwrap();
        tracker.step(&[det_at(10.0, 0.0)], 0.1).unwrap();
        assert_eq!(tracker.tracks().len(), 2);
        // The old track missed, the new one was born this frame.
        assert_eq!(tracker.tracks()[0].consecutive_hits(), 0);
        assert_eq!(tracker.tracks()[1].consecutive_hits(), 1);
    }

    #[test]
    fn two_well_separated_targets_keep_their_identities() {
        let mut tracker = Tracker::new(TrackerConfig::default()).unwrap();
        let dt = 0.1;
        // Target A moves +x along y=0, target B moves -x along y=20.
        for frame in 0..30 {
            let a = det_at(frame as f64 * 1.0, 0.0);
            let b = det_at(30.0 - frame as f64 * 1.0, 20.0);
            tracker.step(&[a, b], dt).unwrap();
        }
        let tracks = tracker.tracks();
        assert_eq!(tracks.len(), 2);
        let a = tracks.iter().find(|t| t.id() == 0).unwrap();
        let b = tracks.iter().find(|t| t.id() == 1).unwrap();
        assert!((a.position().x - 29.0).abs() < 1e-9 && a.position().y.abs() < 1e-9);
        assert!((b.position().x - 1.0).abs() < 1e-9 && (b.position().y - 20.0).abs() < 1e-9);
        assert_eq!(a.status(), TrackStatus::Confirmed);
        assert_eq!(b.status(), TrackStatus::Confirmed);
        // Speed estimate approaches 10 m/s from below.
        assert!(a.speed() > 8.0 && a.speed() <= 10.0 + 1e-9);
        assert_eq!(a.class(), ObjectClass::Car);
    }

    #[test]
    fn tracker_rejects_bad_dt_and_bad_config() {
        let mut tracker = Tracker::new(TrackerConfig::default()).unwrap();
        assert!(tracker.step(&[], 0.0).is_err());
        assert!(tracker.step(&[], -1.0).is_err());
        let bad = TrackerConfig { delete_misses: 9, ..TrackerConfig::default() };
        assert!(Tracker::new(bad).is_err());
    }

    // ---- property tests ----

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn clustering_matches_the_quadratic_oracle(
            pts in proptest::collection::vec(
                (-6.0f64..6.0, -6.0f64..6.0, -1.0f64..1.0), 0..60),
            min_pts in 2usize..6,
            scaled in proptest::bool::ANY,
        ) {
            let points: Vec<Vec3> = pts.iter().map(|&(x, y, z)| p(x, y, z)).collect();
            let cfg = ClusterConfig {
                eps_m: 1.1,
                min_pts,
                eps_per_meter: if scaled { 0.05 } else { 0.0 },
            };
            let fast = cluster(&points, &cfg).unwrap();
            let slow = dbscan_oracle(&points, &cfg);
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn clustering_is_input_order_independent(
            pts in proptest::collection::vec(
                (-5.0f64..5.0, -5.0f64..5.0, 0.0f64..0.5), 1..40),
            rot in 0usize..40,
        ) {
            let points: Vec<Vec3> = pts.iter().map(|&(x, y, z)| p(x, y, z)).collect();
            let cfg = ClusterConfig { eps_m: 1.0, min_pts: 3, eps_per_meter: 0.0 };
            let base = cluster(&points, &cfg).unwrap();

            let shift = rot % points.len();
            let rotated: Vec<Vec3> =
                points[shift..].iter().chain(&points[..shift]).copied().collect();
            let out = cluster(&rotated, &cfg).unwrap();
            // Map rotated indices back to the original labels.
            let back = |i: usize| (i + shift) % points.len();
            let mut clusters: Vec<Vec<usize>> = out
                .clusters
                .iter()
                .map(|c| {
                    let mut v: Vec<usize> = c.iter().map(|&i| back(i)).collect();
                    v.sort_unstable();
                    v
                })
                .collect();
            clusters.sort_by_key(|c| c[0]);
            let mut noise: Vec<usize> = out.noise.iter().map(|&i| back(i)).collect();
            noise.sort_unstable();
            prop_assert_eq!(clusters, base.clusters);
            prop_assert_eq!(noise, base.noise);
        }

        #[test]
        fn lof_matches_the_brute_force_oracle(
            pts in proptest::collection::vec(
                (-4.0f64..4.0, -4.0f64..4.0, -1.0f64..1.0), 6..40),
            k in 2usize..6,
        ) {
            let points: Vec<Vec3> = pts.iter().map(|&(x, y, z)| p(x, y, z)).collect();
            let mine = lof_scores(&points, k).unwrap();
            let oracle = lof_oracle(&points, k);
            for (i, (a, b)) in mine.iter().zip(&oracle).enumerate() {
                if a.is_infinite() || b.is_infinite() {
                    prop_assert_eq!(a.is_infinite(), b.is_infinite(), "point {}", i);
                } else {
                    prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0), "point {}: {} vs {}", i, a, b);
                }
            }
        }

        #[test]
        fn obb_contains_all_its_points(
            pts in proptest::collection::vec(
                (-8.0f64..8.0, -8.0f64..8.0, -2.0f64..2.0), 3..50),
        ) {
            let points: Vec<Vec3> = pts.iter().map(|&(x, y, z)| p(x, y, z)).collect();
            match fit_obb(&points) {
                Ok(obb) => {
                    prop_assert!(obb.length >= obb.width);
                    prop_assert!(obb.width >= 0.0);
                    prop_assert!((0.0..core::f64::consts::PI).contains(&obb.yaw));
                    for (i, q) in points.iter().enumerate() {
                        prop_assert!(obb.contains(*q, 1e-6), "point {} escaped", i);
                    }
                }
                Err(DetectError::DegenerateCluster) => {}
                Err(e) => return Err(TestCaseError::fail(alloc::format!("{e}"))),
            }
        }

        #[test]
        fn segmentation_is_a_partition(
            pts in proptest::collection::vec(
                (-6.0f64..6.0, -6.0f64..6.0, 0.0f64..1.0), 0..50),
        ) {
            let points: Vec<Vec3> = pts.iter().map(|&(x, y, z)| p(x, y, z)).collect();
            let cfg = ClusterConfig { eps_m: 1.0, min_pts: 4, eps_per_meter: 0.0 };
            let seg = segment_objects(&points, 5, 1.5, &cfg).unwrap();
            let mut seen = vec![0u32; points.len()];
            for c in &seg.clusters {
                for &i in c {
                    seen[i] += 1;
                }
            }
            for &i in seg.lof_removed.iter().chain(&seg.noise) {
                seen[i] += 1;
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }
}
