//! Geometry on the unit 2-sphere: raw 3-vectors, unit directions, angles,
//! and tangent frames.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm drift below this is silently renormalized by [`UnitVector3::new`].
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// A plain 3-vector. Used for raw network outputs, sums of directions and
/// tangent-space gradients.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Vec3::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Component of `self` orthogonal to the unit vector `mu`.
    #[inline]
    pub fn reject(self, mu: UnitVector3) -> Vec3 {
        let m = mu.as_vec();
        self - m * self.dot(m)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
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
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// A direction on the unit 2-sphere.
///
/// Every constructed value has `|‖v‖ − 1| < 1e-9`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct UnitVector3(Vec3);

impl UnitVector3 {
    pub const X: UnitVector3 = UnitVector3(Vec3::new(1.0, 0.0, 0.0));
    pub const Y: UnitVector3 = UnitVector3(Vec3::new(0.0, 1.0, 0.0));
    pub const Z: UnitVector3 = UnitVector3(Vec3::new(0.0, 0.0, 1.0));

    /// Builds a unit vector from components that should already be unit
    /// length. Drift below [`RENORMALIZE_TOLERANCE`] is renormalized away;
    /// anything larger is an error.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Vec3::new(x, y, z);
        let norm = v.norm();
        if !norm.is_finite() {
            return Err(Error::DegenerateVector);
        }
        if (norm - 1.0).abs() >= RENORMALIZE_TOLERANCE {
            return Err(Error::NotUnit { norm });
        }
        Ok(UnitVector3(v * (1.0 / norm)))
    }

    /// Wraps components already known to be unit length (within 1e-12).
    pub(crate) fn from_unit_unchecked(v: Vec3) -> Self {
        debug_assert!((v.norm() - 1.0).abs() < 1e-12);
        UnitVector3(v)
    }

    #[inline]
    pub fn x(self) -> f64 {
        self.0.x
    }

    #[inline]
    pub fn y(self) -> f64 {
        self.0.y
    }

    #[inline]
    pub fn z(self) -> f64 {
        self.0.z
    }

    #[inline]
    pub fn as_vec(self) -> Vec3 {
        self.0
    }

    pub fn to_array(self) -> [f64; 3] {
        self.0.to_array()
    }

    #[inline]
    pub fn dot(self, other: UnitVector3) -> f64 {
        self.0.dot(other.0)
    }

    /// Rotates `self` by `angle` radians about `axis` (Rodrigues' formula).
    pub fn rotate_about(self, axis: UnitVector3, angle: f64) -> UnitVector3 {
        let k = axis.0;
        let v = self.0;
        let (s, c) = angle.sin_cos();
        let r = v * c + k.cross(v) * s + k * (k.dot(v) * (1.0 - c));
        // rotation preserves the norm up to rounding
        UnitVector3(r * (1.0 / r.norm()))
    }

    /// Moves along the great circle leaving `self` in the tangent direction
    /// `v`; `‖v‖` is the arc length. `v` should be orthogonal to `self`.
    pub fn exp_map(self, v: Vec3) -> UnitVector3 {
        let t = v.norm();
        if t == 0.0 {
            return self;
        }
        let r = self.0 * t.cos() + v * (t.sin() / t);
        UnitVector3(r * (1.0 / r.norm()))
    }
}

impl fmt::Display for UnitVector3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0.x, self.0.y, self.0.z)
    }
}

impl TryFrom<[f64; 3]> for UnitVector3 {
    type Error = Error;
    fn try_from(v: [f64; 3]) -> Result<Self> {
        UnitVector3::new(v[0], v[1], v[2])
    }
}

impl From<UnitVector3> for [f64; 3] {
    fn from(u: UnitVector3) -> [f64; 3] {
        u.to_array()
    }
}

impl From<UnitVector3> for Vec3 {
    fn from(u: UnitVector3) -> Vec3 {
        u.0
    }
}

/// Scales a nonzero vector to unit length.
pub fn normalize(v: Vec3) -> Result<UnitVector3> {
    let norm = v.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateVector);
    }
    let u = v * (1.0 / norm);
    // one correction pass for vectors whose norm over/underflowed partially
    let n2 = u.norm();
    Ok(UnitVector3(u * (1.0 / n2)))
}

/// An angle in `[0, π]` radians.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);
    pub const RIGHT: Angle = Angle(PI / 2.0);
    pub const STRAIGHT: Angle = Angle(PI);

    pub fn new(radians: f64) -> Result<Self> {
        if (0.0..=PI).contains(&radians) {
            Ok(Angle(radians))
        } else {
            Err(Error::domain("angle", radians, "[0, π]"))
        }
    }

    pub fn from_degrees(degrees: f64) -> Result<Self> {
        Angle::new(degrees.to_radians())
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }
}

/// Geodesic angle between two directions.
///
/// Evaluated as `atan2(‖a×b‖, a·b)`, which equals `acos(a·b)` with the dot
/// clamped to `[-1, 1]` but keeps full precision near 0 and π.
pub fn angle_between(a: UnitVector3, b: UnitVector3) -> Angle {
    let c = a.0.cross(b.0).norm();
    let d = a.0.dot(b.0);
    Angle(c.atan2(d).clamp(0.0, PI))
}

/// Orthonormal pair spanning the tangent plane at a direction, such that
/// `(e1, e2, mu)` is right-handed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentBasis {
    pub e1: UnitVector3,
    pub e2: UnitVector3,
}

/// Builds the tangent frame by Gram-Schmidt against the coordinate axis least
/// aligned with `mu`.
pub fn tangent_basis(mu: UnitVector3) -> TangentBasis {
    let m = mu.0;
    let (ax, ay, az) = (m.x.abs(), m.y.abs(), m.z.abs());
    let axis = if ax <= ay && ax <= az {
        Vec3::new(1.0, 0.0, 0.0)
    } else if ay <= az {
        Vec3::new(0.0, 1.0, 0.0)
    } else {
        Vec3::new(0.0, 0.0, 1.0)
    };
    // |axis·mu| <= 1/√3, so the rejection has norm >= √(2/3)
    let r = axis.reject(mu);
    let e1 = r * (1.0 / r.norm());
    let e2 = m.cross(e1);
    let e2 = e2 * (1.0 / e2.norm());
    TangentBasis {
        e1: UnitVector3(e1),
        e2: UnitVector3(e2),
    }
}

impl std::ops::Neg for UnitVector3 {
    type Output = UnitVector3;

    fn neg(self) -> UnitVector3 {
        UnitVector3(-self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn normalize_examples() {
        let u = normalize(Vec3::new(2.0, 0.0, 0.0)).unwrap();
        assert_eq!(u.to_array(), [1.0, 0.0, 0.0]);
        let u = normalize(Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(u.to_array(), [0.0, 0.0, 1.0]);
        // 1/√3 to 20 digits: 0.57735026918962576451
        let u = normalize(Vec3::new(1.0, 1.0, 1.0)).unwrap();
        for c in u.to_array() {
            assert_close(c, 0.577_350_269_189_625_8, 1e-15);
        }
    }

    #[test]
    fn normalize_rejects_zero_and_nan() {
        assert!(matches!(
            normalize(Vec3::ZERO),
            Err(Error::DegenerateVector)
        ));
        assert!(normalize(Vec3::new(f64::NAN, 0.0, 1.0)).is_err());
    }

    #[test]
    fn new_renormalizes_small_drift_only() {
        let u = UnitVector3::new(1.0 + 5e-7, 0.0, 0.0).unwrap();
        assert_close(u.as_vec().norm(), 1.0, 1e-15);
        assert!(matches!(
            UnitVector3::new(1.0 + 2e-6, 0.0, 0.0),
            Err(Error::NotUnit { .. })
        ));
        assert!(UnitVector3::new(0.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn angle_between_examples() {
        let a = UnitVector3::X;
        assert_eq!(angle_between(a, a).radians(), 0.0);
        assert_eq!(angle_between(a, -a).radians(), PI);
        assert_close(
            angle_between(UnitVector3::X, UnitVector3::Y).radians(),
            PI / 2.0,
            1e-15,
        );
    }

    #[test]
    fn angle_precise_near_zero() {
        let a = UnitVector3::Z;
        let b = a.rotate_about(UnitVector3::X, 1e-9);
        assert_close(angle_between(a, b).radians(), 1e-9, 1e-20);
    }

    #[test]
    fn angle_type_domain() {
        assert!(Angle::new(-1e-12).is_err());
        assert!(Angle::new(PI + 1e-12).is_err());
        assert!(Angle::new(PI).is_ok());
        assert_close(
            Angle::from_degrees(90.0).unwrap().radians(),
            PI / 2.0,
            1e-15,
        );
    }

    fn check_frame(mu: UnitVector3) {
        let TangentBasis { e1, e2 } = tangent_basis(mu);
        assert_close(e1.as_vec().norm(), 1.0, 1e-12);
        assert_close(e2.as_vec().norm(), 1.0, 1e-12);
        assert_close(e1.dot(e2), 0.0, 1e-9);
        assert_close(e1.dot(mu), 0.0, 1e-9);
        assert_close(e2.dot(mu), 0.0, 1e-9);
        let c = e1.as_vec().cross(e2.as_vec());
        assert_close(c.x, mu.x(), 1e-9);
        assert_close(c.y, mu.y(), 1e-9);
        assert_close(c.z, mu.z(), 1e-9);
    }

    #[test]
    fn tangent_basis_examples() {
        check_frame(UnitVector3::Z);
        check_frame(UnitVector3::X);
        check_frame(UnitVector3::new(0.6, 0.8, 0.0).unwrap());
        check_frame(-UnitVector3::Y);
    }

    #[test]
    fn exp_map_moves_by_arc_length() {
        let mu = UnitVector3::Z;
        let p = mu.exp_map(Vec3::new(0.3, 0.0, 0.0));
        assert_close(angle_between(mu, p).radians(), 0.3, 1e-14);
    }
}
