//! Deterministic synthetic roadside scenes: a scanning sensor at the
//! origin, static surfaces, boxy road users moving along waypoint
//! polylines, falling snow, angular drift and jitter, and full ground
//! truth (per-point labels, true boxes, trajectories, screenline
//! counts) for scoring a run end to end.

use crate::detect::{Obb, ObjectClass};
use crate::evaluate::{Crossing, Screenline};
use crate::geom;
use crate::linalg::Vec3;
use crate::tensor::{Frame, PointRecord, Sample, SensorConfig};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

/// Clutter (snow) lives in this range shell, meters.
pub const SNOW_SHELL_M: (f64, f64) = (0.8, 2.0);
/// Snow reflects dimly; intensities are drawn uniformly from this band.
pub const SNOW_INTENSITY: (f64, f64) = (2.0, 30.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[non_exhaustive]
pub enum SynthError {
    InvalidConfig(&'static str),
    EmptyInput,
    Mismatch,
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::InvalidConfig(which) => write!(f, "invalid scene config: {which}"),
            SynthError::EmptyInput => write!(f, "no frames to evaluate"),
            SynthError::Mismatch => write!(f, "ground truth does not line up with the frames"),
        }
    }
}

impl core::error::Error for SynthError {}

/// Per-point ground truth. Snow is clutter: real returns that belong to
/// no object and should be suppressed alongside the background.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtLabel {
    Background,
    Foreground,
    Clutter,
}

impl GtLabel {
    /// The binary target for point-level scoring: only object returns
    /// count as positive, clutter scores as background.
    pub fn binary(self) -> crate::model::Label {
        match self {
            GtLabel::Foreground => crate::model::Label::Foreground,
            GtLabel::Background | GtLabel::Clutter => crate::model::Label::Background,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GtLabel::Background => "background",
            GtLabel::Foreground => "foreground",
            GtLabel::Clutter => "clutter",
        }
    }
}

/// Static scene geometry. Reflectivity in [0, 1] scales the sensor's
/// intensity range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    /// Horizontal plane at height `z`.
    Ground { z: f64, reflectivity: f64 },
    /// Vertical rectangle over the XY segment a-b, rising `height`
    /// meters from the ground plane.
    Wall { a: [f64; 2], b: [f64; 2], height: f64, reflectivity: f64 },
    /// Vertical cylinder (side surface only).
    Pole { center: [f64; 2], radius: f64, height: f64, reflectivity: f64 },
}

impl Surface {
    fn reflectivity(&self) -> f64 {
        match *self {
            Surface::Ground { reflectivity, .. }
            | Surface::Wall { reflectivity, .. }
            | Surface::Pole { reflectivity, .. } => reflectivity,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let r = self.reflectivity();
        if !(0.0..=1.0).contains(&r) {
            return Err(SynthError::InvalidConfig("surface reflectivity"));
        }
        match *self {
            Surface::Ground { z, .. } => {
                if !z.is_finite() {
                    return Err(SynthError::InvalidConfig("ground height"));
                }
            }
            Surface::Wall { a, b, height, .. } => {
                if a == b || !(height > 0.0) {
                    return Err(SynthError::InvalidConfig("wall geometry"));
                }
            }
            Surface::Pole { radius, height, .. } => {
                if !(radius > 0.0) || !(height > 0.0) {
                    return Err(SynthError::InvalidConfig("pole geometry"));
                }
            }
        }
        Ok(())
    }
}

/// A road user: a box gliding along a waypoint polyline at constant
/// speed, headed along the current segment, resting on the ground.
#[derive(Debug, Clone, PartialEq)]
pub struct PathedObject {
    pub waypoints: Vec<[f64; 2]>,
    pub speed_mps: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub reflectivity: f64,
    pub class: ObjectClass,
    /// Departure from the first waypoint, seconds into the scene.
    pub start_time_s: f64,
}

impl PathedObject {
    fn validate(&self) -> Result<(), SynthError> {
        if self.waypoints.len() < 2 {
            return Err(SynthError::InvalidConfig("object needs two waypoints"));
        }
        if self
            .waypoints
            .windows(2)
            .any(|w| w[0] == w[1])
        {
            return Err(SynthError::InvalidConfig("repeated waypoint"));
        }
        if !(self.speed_mps > 0.0) {
            return Err(SynthError::InvalidConfig("object speed"));
        }
        if !(self.length > 0.0 && self.width > 0.0 && self.height > 0.0) {
            return Err(SynthError::InvalidConfig("object dimensions"));
        }
        if !(0.0..=1.0).contains(&self.reflectivity) {
            return Err(SynthError::InvalidConfig("object reflectivity"));
        }
        if !self.start_time_s.is_finite() || self.start_time_s < 0.0 {
            return Err(SynthError::InvalidConfig("object start time"));
        }
        Ok(())
    }

    /// Box pose at time `t`, or None before departure / after arrival.
    fn pose(&self, t: f64, ground_z: f64) -> Option<Obb> {
        let mut remaining = self.speed_mps * (t - self.start_time_s);
        if remaining < 0.0 {
            return None;
        }
        for w in self.waypoints.windows(2) {
            let dx = w[1][0] - w[0][0];
            let dy = w[1][1] - w[0][1];
            let seg = libm::sqrt(dx * dx + dy * dy);
            if remaining <= seg {
                let f = remaining / seg;
                return Some(Obb {
                    center: Vec3::new(
                        w[0][0] + f * dx,
                        w[0][1] + f * dy,
                        ground_z + self.height / 2.0,
                    ),
                    length: self.length,
                    width: self.width,
                    height: self.height,
                    yaw: libm::atan2(dy, dx),
                });
            }
            remaining -= seg;
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub sensor: SensorConfig,
    pub duration_frames: u32,
    pub surfaces: Vec<Surface>,
    pub objects: Vec<PathedObject>,
    /// Expected clutter returns per frame (Poisson).
    pub snow_rate: f64,
    /// Per-firing azimuth tremble, degrees (standard deviation).
    pub jitter_sd_deg: f64,
    /// Whole-frame azimuth offset drawn uniformly from plus/minus this,
    /// degrees.
    pub drift_amplitude_deg: f64,
    /// Chance any firing silently drops out.
    pub no_return_prob: f64,
    /// Where directional traffic is counted, if anywhere.
    pub screenline: Option<[[f64; 2]; 2]>,
    pub seed: u64,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.duration_frames == 0 {
            return Err(SynthError::InvalidConfig("duration_frames"));
        }
        if !(self.snow_rate >= 0.0) || !self.snow_rate.is_finite() {
            return Err(SynthError::InvalidConfig("snow_rate"));
        }
        if !(self.jitter_sd_deg >= 0.0) || !self.jitter_sd_deg.is_finite() {
            return Err(SynthError::InvalidConfig("jitter_sd_deg"));
        }
        if !(self.drift_amplitude_deg >= 0.0) || !self.drift_amplitude_deg.is_finite() {
            return Err(SynthError::InvalidConfig("drift_amplitude_deg"));
        }
        if !(0.0..=1.0).contains(&self.no_return_prob) {
            return Err(SynthError::InvalidConfig("no_return_prob"));
        }
        if let Some([a, b]) = self.screenline {
            if Screenline::new(a, b).is_err() {
                return Err(SynthError::InvalidConfig("screenline"));
            }
        }
        for s in &self.surfaces {
            s.validate()?;
        }
        for o in &self.objects {
            o.validate()?;
        }
        Ok(())
    }

    /// Height objects rest on: the ground surface if one exists.
    pub fn ground_z(&self) -> f64 {
        self.surfaces
            .iter()
            .find_map(|s| match *s {
                Surface::Ground { z, .. } => Some(z),
                _ => None,
            })
            .unwrap_or(0.0)
    }
}

/// A labeled box visible in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueBox {
    pub object_id: u64,
    pub obb: Obb,
    pub class: ObjectClass,
}

/// One object's true center path, only over frames it exists in.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueTrajectory {
    pub object_id: u64,
    pub class: ObjectClass,
    /// (frame id, timestamp, x, y)
    pub samples: Vec<(u64, f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// One label per point record of the matching frame.
    pub labels: Vec<Vec<GtLabel>>,
    /// Boxes visible per frame.
    pub boxes: Vec<Vec<TrueBox>>,
    pub trajectories: Vec<TrueTrajectory>,
    /// Screenline crossings of the true center paths, if a screenline
    /// was configured.
    pub inbound: u64,
    pub outbound: u64,
}

// ---------------------------------------------------------------------
// Ray casting
// ---------------------------------------------------------------------

/// First positive hit distance of the unit ray `d` from the origin
/// against an oriented box, by the slab method in the box frame.
pub fn ray_box_distance(d: Vec3, obb: &Obb) -> Option<f64> {
    let (c, s) = (libm::cos(obb.yaw), libm::sin(obb.yaw));
    // Rotate by -yaw: world -> box axes.
    let o = Vec3::new(
        c * -obb.center.x + s * -obb.center.y,
        -s * -obb.center.x + c * -obb.center.y,
        -obb.center.z,
    );
    let dir = Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z);
    let half = [obb.length / 2.0, obb.width / 2.0, obb.height / 2.0];
    let (mut t_enter, mut t_exit) = (f64::NEG_INFINITY, f64::INFINITY);
    for axis in 0..3 {
        let (oa, da) = match axis {
            0 => (o.x, dir.x),
            1 => (o.y, dir.y),
            _ => (o.z, dir.z),
        };
        if da == 0.0 {
            if libm::fabs(oa) > half[axis] {
                return None;
            }
            continue;
        }
        let mut t1 = (-half[axis] - oa) / da;
        let mut t2 = (half[axis] - oa) / da;
        if t1 > t2 {
            core::mem::swap(&mut t1, &mut t2);
        }
        t_enter = t_enter.max(t1);
        t_exit = t_exit.min(t2);
        if t_enter > t_exit {
            return None;
        }
    }
    // A sensor inside the box sees nothing sensible; require entry in
    // front of it.
    (t_enter > 1e-9).then_some(t_enter)
}

fn ray_ground(d: Vec3, z: f64) -> Option<f64> {
    // Positive only when the ray descends toward a plane below the
    // sensor, or rises toward one above it.
    let t = z / d.z;
    (t.is_finite() && t > 1e-9).then_some(t)
}

fn ray_wall(d: Vec3, a: [f64; 2], b: [f64; 2], z0: f64, height: f64) -> Option<f64> {
    // Solve t * d_xy = a + s * (b - a) for t, s.
    let ex = b[0] - a[0];
    let ey = b[1] - a[1];
    let det = d.x * -ey - d.y * -ex;
    if libm::fabs(det) < 1e-12 {
        return None;
    }
    let t = (a[0] * -ey - a[1] * -ex) / det;
    let s = (d.x * a[1] - d.y * a[0]) / det;
    if t <= 1e-9 || !(0.0..=1.0).contains(&s) {
        return None;
    }
    let hit_z = t * d.z;
    (hit_z >= z0 && hit_z <= z0 + height).then_some(t)
}

fn ray_pole(d: Vec3, center: [f64; 2], radius: f64, z0: f64, height: f64) -> Option<f64> {
    // |t * d_xy - c|^2 = r^2.
    let aa = d.x * d.x + d.y * d.y;
    if aa < 1e-15 {
        return None;
    }
    let bb = -2.0 * (d.x * center[0] + d.y * center[1]);
    let cc = center[0] * center[0] + center[1] * center[1] - radius * radius;
    let disc = bb * bb - 4.0 * aa * cc;
    if disc < 0.0 {
        return None;
    }
    let sq = libm::sqrt(disc);
    for t in [(-bb - sq) / (2.0 * aa), (-bb + sq) / (2.0 * aa)] {
        if t > 1e-9 {
            let hit_z = t * d.z;
            if hit_z >= z0 && hit_z <= z0 + height {
                return Some(t);
            }
        }
    }
    None
}

fn ray_surface(d: Vec3, surface: &Surface, ground_z: f64) -> Option<f64> {
    match *surface {
        Surface::Ground { z, .. } => ray_ground(d, z),
        Surface::Wall { a, b, height, .. } => ray_wall(d, a, b, ground_z, height),
        Surface::Pole { center, radius, height, .. } => {
            ray_pole(d, center, radius, ground_z, height)
        }
    }
}

// ---------------------------------------------------------------------
// Frame generation
// ---------------------------------------------------------------------

/// Everything one frame produced, before scene-level assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub frame: Frame,
    pub labels: Vec<GtLabel>,
    pub boxes: Vec<TrueBox>,
}

fn clamp_intensity(v: f64, max: f64) -> f64 {
    v.clamp(0.0, max)
}

fn wrap_azimuth(mut a: f64) -> f64 {
    a %= 360.0;
    if a <= 0.0 {
        a += 360.0;
    }
    a
}

/// Generates one frame from the per-frame random stream. Frames are
/// independent given (config, frame id), so callers may fan out across
/// frames and reassemble in order.
pub fn generate_frame(cfg: &SceneConfig, frame_id: u64) -> Result<FrameTruth, SynthError> {
    cfg.validate()?;
    if frame_id >= cfg.duration_frames as u64 {
        return Err(SynthError::InvalidConfig("frame id past duration"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(frame_id + 1);

    let sensor = &cfg.sensor;
    let period = sensor.frame_period_s();
    let t = frame_id as f64 * period;
    let ground_z = cfg.ground_z();

    let drift = if cfg.drift_amplitude_deg > 0.0 {
        rng.random_range(-cfg.drift_amplitude_deg..=cfg.drift_amplitude_deg)
    } else {
        0.0
    };
    let jitter = Normal::new(0.0, cfg.jitter_sd_deg.max(1e-12)).expect("validated sd");

    let mut boxes: Vec<TrueBox> = Vec::new();
    for (i, obj) in cfg.objects.iter().enumerate() {
        if let Some(obb) = obj.pose(t, ground_z) {
            boxes.push(TrueBox { object_id: i as u64, obb, class: obj.class });
        }
    }

    // Snowflakes claim firings up front; the flake is what the beam
    // sees, nothing behind it matters.
    let bins = sensor.azimuth_bins;
    let beams = sensor.beams;
    let mut snow: Vec<Option<(f64, f64)>> = vec![None; beams as usize * bins as usize];
    if cfg.snow_rate > 0.0 {
        let n = Poisson::new(cfg.snow_rate)
            .map_err(|_| SynthError::InvalidConfig("snow_rate"))?
            .sample(&mut rng) as u64;
        for _ in 0..n {
            let beam = rng.random_range(0..beams as usize);
            let bin = rng.random_range(0..bins as usize);
            let range = rng.random_range(SNOW_SHELL_M.0..SNOW_SHELL_M.1);
            let intensity = rng.random_range(SNOW_INTENSITY.0..SNOW_INTENSITY.1);
            snow[beam * bins as usize + bin] = Some((range, intensity));
        }
    }

    let intensity_noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut points = Vec::with_capacity(beams as usize * bins as usize);
    let mut labels = Vec::with_capacity(points.capacity());

    for beam in 0..beams {
        let elevation = sensor.elevation_deg[beam as usize];
        for bin in 0..bins {
            let nominal = (bin as f64 + 1.0) * sensor.azimuth_resolution_deg;
            let azimuth = wrap_azimuth(nominal + drift + jitter.sample(&mut rng));

            if let Some((range, intensity)) = snow[beam as usize * bins as usize + bin as usize]
            {
                points.push(PointRecord {
                    frame_id,
                    beam_id: beam,
                    azimuth_deg: azimuth,
                    sample: Sample::Spherical { range_m: range, intensity },
                });
                labels.push(GtLabel::Clutter);
                continue;
            }

            if cfg.no_return_prob > 0.0 && rng.random::<f64>() < cfg.no_return_prob {
                points.push(PointRecord {
                    frame_id,
                    beam_id: beam,
                    azimuth_deg: azimuth,
                    sample: Sample::NoReturn,
                });
                labels.push(GtLabel::Background);
                continue;
            }

            let d = geom::spherical_to_cartesian(1.0, elevation, azimuth);
            let mut best: Option<(f64, f64, GtLabel)> = None;
            for tb in &boxes {
                if let Some(dist) = ray_box_distance(d, &tb.obb) {
                    let obj = &cfg.objects[tb.object_id as usize];
                    if best.map_or(true, |(b, _, _)| dist < b) {
                        best = Some((dist, obj.reflectivity, GtLabel::Foreground));
                    }
                }
            }
            for surface in &cfg.surfaces {
                if let Some(dist) = ray_surface(d, surface, ground_z) {
                    if best.map_or(true, |(b, _, _)| dist < b) {
                        best = Some((dist, surface.reflectivity(), GtLabel::Background));
                    }
                }
            }

            match best {
                Some((range, reflect, label)) if range <= sensor.max_range_m => {
                    let sd = if label == GtLabel::Foreground { 8.0 } else { 2.0 };
                    let intensity = clamp_intensity(
                        reflect * sensor.max_intensity
                            + sd * intensity_noise.sample(&mut rng),
                        sensor.max_intensity,
                    );
                    points.push(PointRecord {
                        frame_id,
                        beam_id: beam,
                        azimuth_deg: azimuth,
                        sample: Sample::Spherical { range_m: range, intensity },
                    });
                    labels.push(label);
                }
                _ => {
                    points.push(PointRecord {
                        frame_id,
                        beam_id: beam,
                        azimuth_deg: azimuth,
                        sample: Sample::NoReturn,
                    });
                    labels.push(GtLabel::Background);
                }
            }
        }
    }

    Ok(FrameTruth {
        frame: Frame { frame_id, timestamp_s: t, points },
        labels,
        boxes,
    })
}

/// Generates the whole scene in frame order and assembles the ground
/// truth (labels, boxes, center trajectories, screenline counts).
pub fn generate_scene(cfg: &SceneConfig) -> Result<(Vec<Frame>, GroundTruth), SynthError> {
    cfg.validate()?;
    let mut frames = Vec::with_capacity(cfg.duration_frames as usize);
    let mut labels = Vec::with_capacity(frames.capacity());
    let mut boxes = Vec::with_capacity(frames.capacity());
    for frame_id in 0..cfg.duration_frames as u64 {
        let ft = generate_frame(cfg, frame_id)?;
        frames.push(ft.frame);
        labels.push(ft.labels);
        boxes.push(ft.boxes);
    }
    let (trajectories, inbound, outbound) = assemble_paths(cfg, &boxes);
    Ok((frames, GroundTruth { labels, boxes, trajectories, inbound, outbound }))
}

fn assemble_paths(
    cfg: &SceneConfig,
    boxes: &[Vec<TrueBox>],
) -> (Vec<TrueTrajectory>, u64, u64) {
    let period = cfg.sensor.frame_period_s();
    let mut trajectories: Vec<TrueTrajectory> = cfg
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| TrueTrajectory {
            object_id: i as u64,
            class: o.class,
            samples: Vec::new(),
        })
        .collect();
    for (frame_id, frame_boxes) in boxes.iter().enumerate() {
        let t = frame_id as f64 * period;
        for tb in frame_boxes {
            trajectories[tb.object_id as usize].samples.push((
                frame_id as u64,
                t,
                tb.obb.center.x,
                tb.obb.center.y,
            ));
        }
    }
    trajectories.retain(|tr| !tr.samples.is_empty());

    let (mut inbound, mut outbound) = (0u64, 0u64);
    if let Some([a, b]) = cfg.screenline {
        let line = Screenline::new(a, b).expect("validated screenline");
        for tr in &trajectories {
            for w in tr.samples.windows(2) {
                match line.crossing([w[0].2, w[0].3], [w[1].2, w[1].3]) {
                    Some(Crossing::Inbound) => inbound += 1,
                    Some(Crossing::Outbound) => outbound += 1,
                    None => {}
                }
            }
        }
    }
    (trajectories, inbound, outbound)
}

/// Share of actual returns labeled Background. No-return firings are
/// not points and do not count; clutter counts in the denominator.
pub fn background_fraction(frames: &[Frame], gt: &GroundTruth) -> Result<f64, SynthError> {
    if frames.is_empty() {
        return Err(SynthError::EmptyInput);
    }
    if gt.labels.len() != frames.len() {
        return Err(SynthError::Mismatch);
    }
    let mut background = 0u64;
    let mut total = 0u64;
    for (frame, labels) in frames.iter().zip(&gt.labels) {
        if labels.len() != frame.points.len() {
            return Err(SynthError::Mismatch);
        }
        for (p, l) in frame.points.iter().zip(labels) {
            if p.sample.is_return() {
                total += 1;
                if *l == GtLabel::Background {
                    background += 1;
                }
            }
        }
    }
    if total == 0 {
        return Err(SynthError::EmptyInput);
    }
    Ok(background as f64 / total as f64)
}

// ---------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------

/// Desk-scale 16-beam unit: 0.4 degree steps (900 bins), 10 Hz, pole
/// mounted 2 m up (ground at z = -2 in presets).
pub fn desk_sensor() -> SensorConfig {
    let elevations: Vec<f64> = (0..16).map(|i| -15.0 + 2.0 * i as f64).collect();
    SensorConfig::new(elevations, 10.0, 0.4, 80.0).expect("static sensor table")
}

/// Stress-scale unit for throughput runs: 32 beams, 0.2 degree steps
/// (1800 bins), 10 Hz.
pub fn bench_sensor() -> SensorConfig {
    let elevations: Vec<f64> = (0..32).map(|i| -25.0 + 1.25 * i as f64).collect();
    SensorConfig::new(elevations, 10.0, 0.2, 120.0).expect("static sensor table")
}

fn base_surfaces() -> Vec<Surface> {
    vec![
        Surface::Ground { z: -2.0, reflectivity: 0.25 },
        // Building face along one side of the road.
        Surface::Wall { a: [-40.0, 14.0], b: [40.0, 14.0], height: 8.0, reflectivity: 0.55 },
        // Sound barrier on the other side.
        Surface::Wall { a: [-40.0, -12.0], b: [40.0, -12.0], height: 4.0, reflectivity: 0.45 },
        Surface::Pole { center: [12.0, 9.0], radius: 0.3, height: 7.0, reflectivity: 0.7 },
        Surface::Pole { center: [-18.0, 9.5], radius: 0.3, height: 7.0, reflectivity: 0.7 },
    ]
}

fn car(y: f64, start: f64, eastbound: bool, speed: f64) -> PathedObject {
    let (x0, x1) = if eastbound { (-45.0, 45.0) } else { (45.0, -45.0) };
    PathedObject {
        waypoints: vec![[x0, y], [x1, y]],
        speed_mps: speed,
        length: 4.5,
        width: 1.8,
        height: 1.5,
        reflectivity: 0.5,
        class: ObjectClass::Car,
        start_time_s: start,
    }
}

fn truck(y: f64, start: f64, eastbound: bool, speed: f64) -> PathedObject {
    let (x0, x1) = if eastbound { (-45.0, 45.0) } else { (45.0, -45.0) };
    PathedObject {
        waypoints: vec![[x0, y], [x1, y]],
        speed_mps: speed,
        length: 8.0,
        width: 2.4,
        height: 3.0,
        reflectivity: 0.6,
        class: ObjectClass::Truck,
        start_time_s: start,
    }
}

fn pedestrian(x: f64, start: f64) -> PathedObject {
    PathedObject {
        waypoints: vec![[x, -10.0], [x, 12.0]],
        speed_mps: 1.4,
        length: 0.6,
        width: 0.6,
        height: 1.7,
        reflectivity: 0.35,
        class: ObjectClass::Pedestrian,
        start_time_s: start,
    }
}

/// Named scene presets; azimuth drift defaults to 1.5x the sensor's
/// step in every one of them.
pub fn preset(name: &str) -> Option<SceneConfig> {
    let sensor = desk_sensor();
    let drift = 1.5 * sensor.azimuth_resolution_deg;
    match name {
        "clean-static" => Some(SceneConfig {
            sensor,
            duration_frames: 150,
            surfaces: base_surfaces(),
            objects: Vec::new(),
            snow_rate: 0.0,
            jitter_sd_deg: 0.02,
            drift_amplitude_deg: drift,
            no_return_prob: 0.02,
            screenline: None,
            seed: 42,
        }),
        "snow-low-volume" => Some(SceneConfig {
            sensor,
            duration_frames: 240,
            surfaces: base_surfaces(),
            objects: vec![
                car(3.0, 4.0, true, 9.0),
                car(-3.0, 9.0, false, 8.0),
                car(3.0, 15.0, true, 10.0),
            ],
            snow_rate: 60.0,
            jitter_sd_deg: 0.02,
            drift_amplitude_deg: drift,
            no_return_prob: 0.03,
            screenline: Some([[0.0, -8.0], [0.0, 8.0]]),
            seed: 1207,
        }),
        "urban-peak" => Some(SceneConfig {
            sensor,
            duration_frames: 240,
            surfaces: base_surfaces(),
            objects: vec![
                car(2.5, 0.0, true, 8.0),
                car(2.5, 3.0, true, 8.5),
                car(2.5, 6.5, true, 8.0),
                car(2.5, 10.0, true, 9.0),
                car(2.5, 13.5, true, 8.0),
                car(2.5, 17.0, true, 8.5),
                car(-2.5, 1.5, false, 8.0),
                car(-2.5, 5.0, false, 8.5),
                car(-2.5, 8.5, false, 8.0),
                car(-2.5, 12.0, false, 9.0),
                car(-2.5, 15.5, false, 8.0),
                truck(5.5, 2.0, true, 7.0),
                truck(-5.5, 7.0, false, 7.0),
                pedestrian(16.0, 1.0),
                pedestrian(-14.0, 6.0),
            ],
            snow_rate: 0.0,
            jitter_sd_deg: 0.02,
            drift_amplitude_deg: drift,
            no_return_prob: 0.02,
            screenline: Some([[0.0, -8.0], [0.0, 8.0]]),
            seed: 7,
        }),
        _ => None,
    }
}

pub const PRESET_NAMES: [&str; 3] = ["clean-static", "snow-low-volume", "urban-peak"];
