//! Minimal fixed-size linear algebra for 3-D cell statistics.
//!
//! The background models only ever need 3-vectors and symmetric 3x3
//! matrices (scatter matrices, predictive scales), so this module carries
//! exactly that and nothing generic.

use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, rhs: Vec3) -> f64 {
        self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    /// Squared Euclidean distance to `rhs`.
    pub fn dist2(self, rhs: Vec3) -> f64 {
        (self - rhs).dot(self - rhs)
    }

    /// Outer product with itself, always symmetric.
    pub fn outer(self) -> Mat3 {
        Mat3 {
            m: [
                [self.x * self.x, self.x * self.y, self.x * self.z],
                [self.y * self.x, self.y * self.y, self.y * self.z],
                [self.z * self.x, self.z * self.y, self.z * self.z],
            ],
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Planar (x, y) distance, ignoring z.
    pub fn bev_dist(self, rhs: Vec3) -> f64 {
        let dx = self.x - rhs.x;
        let dy = self.y - rhs.y;
        libm::sqrt(dx * dx + dy * dy)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, rhs: Vec3) {
        *self = *self + rhs;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, rhs: Vec3) {
        *self = *self - rhs;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        self * -1.0
    }
}

/// Row-major 3x3 matrix. Users of this module only ever build symmetric
/// ones, but symmetry is not enforced structurally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const ZERO: Mat3 = Mat3 { m: [[0.0; 3]; 3] };

    pub fn identity() -> Self {
        Mat3::scaled_identity(1.0)
    }

    pub fn scaled_identity(s: f64) -> Self {
        let mut m = [[0.0; 3]; 3];
        m[0][0] = s;
        m[1][1] = s;
        m[2][2] = s;
        Mat3 { m }
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2] * v.z,
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2] * v.z,
            self.m[2][0] * v.x + self.m[2][1] * v.y + self.m[2][2] * v.z,
        )
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        let mut out = *self;
        for r in 0..3 {
            for c in 0..3 {
                out.m[r][c] *= s;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    /// Symmetry check up to `tol` on off-diagonal mismatch.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        libm::fabs(self.m[0][1] - self.m[1][0]) <= tol
            && libm::fabs(self.m[0][2] - self.m[2][0]) <= tol
            && libm::fabs(self.m[1][2] - self.m[2][1]) <= tol
    }

    /// Lower-triangular Cholesky factor, or `None` when the matrix is not
    /// (numerically) positive definite.
    pub fn cholesky(&self) -> Option<Chol3> {
        let a = &self.m;
        let mut l = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..=i {
                let mut s = a[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return None;
                    }
                    l[i][j] = libm::sqrt(s);
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        Some(Chol3 { l })
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, rhs: Mat3) -> Mat3 {
        let mut out = Mat3::ZERO;
        for r in 0..3 {
            for c in 0..3 {
                out.m[r][c] = self.m[r][c] + rhs.m[r][c];
            }
        }
        out
    }
}

impl AddAssign for Mat3 {
    fn add_assign(&mut self, rhs: Mat3) {
        *self = *self + rhs;
    }
}

impl Sub for Mat3 {
    type Output = Mat3;
    fn sub(self, rhs: Mat3) -> Mat3 {
        let mut out = Mat3::ZERO;
        for r in 0..3 {
            for c in 0..3 {
                out.m[r][c] = self.m[r][c] - rhs.m[r][c];
            }
        }
        out
    }
}

impl SubAssign for Mat3 {
    fn sub_assign(&mut self, rhs: Mat3) {
        *self = *self - rhs;
    }
}

/// Cached Cholesky factor of a positive-definite 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chol3 {
    l: [[f64; 3]; 3],
}

impl Chol3 {
    /// log|A| of the factored matrix.
    pub fn ln_det(&self) -> f64 {
        2.0 * (libm::log(self.l[0][0]) + libm::log(self.l[1][1]) + libm::log(self.l[2][2]))
    }

    /// Solves A x = b.
    pub fn solve(&self, b: Vec3) -> Vec3 {
        let y = self.forward(b);
        // Back substitution with L^T.
        let l = &self.l;
        let z2 = y.z / l[2][2];
        let z1 = (y.y - l[2][1] * z2) / l[1][1];
        let z0 = (y.x - l[1][0] * z1 - l[2][0] * z2) / l[0][0];
        Vec3::new(z0, z1, z2)
    }

    /// Quadratic form b^T A^{-1} b, via one forward substitution.
    pub fn quad_form(&self, b: Vec3) -> f64 {
        let y = self.forward(b);
        y.dot(y)
    }

    fn forward(&self, b: Vec3) -> Vec3 {
        let l = &self.l;
        let y0 = b.x / l[0][0];
        let y1 = (b.y - l[1][0] * y0) / l[1][1];
        let y2 = (b.z - l[2][0] * y0 - l[2][1] * y1) / l[2][2];
        Vec3::new(y0, y1, y2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn det3(m: &Mat3) -> f64 {
        let a = &m.m;
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    }

    #[test]
    fn cholesky_identity() {
        let c = Mat3::identity().cholesky().unwrap();
        assert_relative_eq!(c.ln_det(), 0.0);
        let x = c.solve(Vec3::new(1.0, 2.0, 3.0));
        assert_relative_eq!(x.x, 1.0);
        assert_relative_eq!(x.y, 2.0);
        assert_relative_eq!(x.z, 3.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut m = Mat3::identity();
        m.m[2][2] = -1.0;
        assert!(m.cholesky().is_none());
    }

    fn spd_matrix() -> impl Strategy<Value = Mat3> {
        // Random A, then A A^T + eps I is SPD.
        proptest::collection::vec(-3.0f64..3.0, 9).prop_map(|v| {
            let a = [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]];
            let mut m = Mat3::ZERO;
            for r in 0..3 {
                for c in 0..3 {
                    let mut s = 0.0;
                    for k in 0..3 {
                        s += a[r][k] * a[c][k];
                    }
                    m.m[r][c] = s;
                }
            }
            m + Mat3::scaled_identity(0.1)
        })
    }

    proptest! {
        #[test]
        fn solve_matches_direct_multiply(m in spd_matrix(), bx in -5.0f64..5.0, by in -5.0f64..5.0, bz in -5.0f64..5.0) {
            let b = Vec3::new(bx, by, bz);
            let c = m.cholesky().unwrap();
            let x = c.solve(b);
            let back = m.mul_vec(x);
            prop_assert!((back - b).norm() < 1e-8 * (1.0 + b.norm()));
        }

        #[test]
        fn ln_det_matches_cofactor_expansion(m in spd_matrix()) {
            let c = m.cholesky().unwrap();
            let d = det3(&m);
            prop_assert!(d > 0.0);
            prop_assert!((c.ln_det() - d.ln()).abs() < 1e-8);
        }

        #[test]
        fn quad_form_matches_solve(m in spd_matrix(), bx in -5.0f64..5.0, by in -5.0f64..5.0, bz in -5.0f64..5.0) {
            let b = Vec3::new(bx, by, bz);
            let c = m.cholesky().unwrap();
            let q = c.quad_form(b);
            let x = c.solve(b);
            prop_assert!((q - b.dot(x)).abs() < 1e-8 * (1.0 + q.abs()));
        }
    }
}
