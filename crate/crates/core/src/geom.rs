//! Sensor-frame geometry: spherical/cartesian conversion and azimuth
//! hashing.
//!
//! Conventions, shared by every module downstream:
//! * azimuth is measured in degrees clockwise from +y, domain `(0, 360]`;
//! * elevation is degrees above the sensor's horizontal plane;
//! * the sensor sits at the origin.

use crate::linalg::Vec3;
use core::fmt;

/// Guard for float quantization: `azimuth / resolution` lands a hair under
/// the exact quotient when both operands carry binary representation error
/// (360/0.2 evaluates below 1800.0), so the floor is taken with this slack.
const QUANT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
#[non_exhaustive]
pub enum GeomError {
    /// Cartesian input indistinguishable from the sensor origin.
    OriginPoint,
    /// Azimuth outside `(0, 360]`.
    AzimuthOutOfRange(f64),
    /// Resolution and bin count that do not tile the circle.
    BadGrid { resolution_deg: f64, bins: u32 },
}

impl fmt::Display for GeomError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeomError::OriginPoint => write!(f, "point coincides with the sensor origin"),
            GeomError::AzimuthOutOfRange(a) => {
                write!(f, "azimuth {a} deg outside (0, 360]")
            }
            GeomError::BadGrid { resolution_deg, bins } => write!(
                f,
                "{bins} bins of {resolution_deg} deg do not cover 360 deg"
            ),
        }
    }
}

impl core::error::Error for GeomError {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spherical {
    pub range_m: f64,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
}

pub fn deg_to_rad(d: f64) -> f64 {
    d * (core::f64::consts::PI / 180.0)
}

pub fn rad_to_deg(r: f64) -> f64 {
    r * (180.0 / core::f64::consts::PI)
}

/// Maps a measured beam to sensor-frame cartesian coordinates.
pub fn spherical_to_cartesian(range_m: f64, elevation_deg: f64, azimuth_deg: f64) -> Vec3 {
    let omega = deg_to_rad(elevation_deg);
    let alpha = deg_to_rad(azimuth_deg);
    let horiz = range_m * libm::cos(omega);
    Vec3::new(
        horiz * libm::sin(alpha),
        horiz * libm::cos(alpha),
        range_m * libm::sin(omega),
    )
}

/// Inverse of [`spherical_to_cartesian`]. Azimuth comes back in `(0, 360]`.
pub fn cartesian_to_spherical(p: Vec3) -> Result<Spherical, GeomError> {
    let r = p.norm();
    if r <= 0.0 || !r.is_finite() {
        return Err(GeomError::OriginPoint);
    }
    let elevation = rad_to_deg(libm::asin((p.z / r).clamp(-1.0, 1.0)));
    let mut azimuth = rad_to_deg(libm::atan2(p.x, p.y));
    if azimuth <= 0.0 {
        azimuth += 360.0;
    }
    Ok(Spherical { range_m: r, elevation_deg: elevation, azimuth_deg: azimuth })
}

/// Hashes an azimuth to its grid column: `(floor(azimuth / resolution) + 1)
/// mod bins`.
///
/// Note the wrap: the last resolution slice before 360 hashes to column 0
/// and azimuth exactly 360 hashes to column 1. Cells are only ever compared
/// to themselves across frames, so the eccentric numbering is harmless as
/// long as it is applied uniformly, and it is.
pub fn azimuth_bin(azimuth_deg: f64, resolution_deg: f64, bins: u32) -> Result<u32, GeomError> {
    if !(azimuth_deg > 0.0 && azimuth_deg <= 360.0) {
        return Err(GeomError::AzimuthOutOfRange(azimuth_deg));
    }
    if bins == 0
        || resolution_deg <= 0.0
        || libm::fabs(bins as f64 * resolution_deg - 360.0) > 1e-6
    {
        return Err(GeomError::BadGrid { resolution_deg, bins });
    }
    let q = libm::floor(azimuth_deg / resolution_deg + QUANT_EPS) as u64;
    Ok(((q + 1) % bins as u64) as u32)
}
