//! Quaternions in vector-first, scalar-last order `(q1, q2, q3, q4)`, skew
//! operators, axis-angle conversion, SLERP and sphere gridding.

use nalgebra::{Matrix3, Matrix4, Matrix4x3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Vec4 = Vector4<f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuatError {
    #[error("quaternion has zero or non-finite norm")]
    Degenerate,
    #[error("quaternion norm {0} is not 1")]
    NotUnit(f64),
    #[error("axis has zero or non-finite norm")]
    DegenerateAxis,
}

/// Unit quaternion `q = (q_v, q_s)` describing the body frame relative to the inertial frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion {
    q: Vec4,
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = QuatError;

    /// Accepts inputs within 1e-6 of unit norm and renormalizes them.
    fn try_from(a: [f64; 4]) -> Result<Self, QuatError> {
        let v = Vec4::from(a);
        let n = v.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(QuatError::Degenerate);
        }
        if (n - 1.0).abs() > 1e-6 {
            return Err(QuatError::NotUnit(n));
        }
        Ok(Self { q: v / n })
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        [q.q[0], q.q[1], q.q[2], q.q[3]]
    }
}

impl UnitQuaternion {
    pub fn identity() -> Self {
        Self {
            q: Vec4::new(0.0, 0.0, 0.0, 1.0),
        }
    }

    /// Normalizes any nonzero finite 4-vector.
    pub fn from_vec4(v: Vec4) -> Result<Self, QuatError> {
        let n = v.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(QuatError::Degenerate);
        }
        Ok(Self { q: v / n })
    }

    pub fn new(q1: f64, q2: f64, q3: f64, q4: f64) -> Result<Self, QuatError> {
        Self::from_vec4(Vec4::new(q1, q2, q3, q4))
    }

    pub fn as_vec4(&self) -> Vec4 {
        self.q
    }

    pub fn to_array(&self) -> [f64; 4] {
        (*self).into()
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.q[0], self.q[1], self.q[2])
    }

    pub fn scalar(&self) -> f64 {
        self.q[3]
    }

    /// `q⁺ = (−q_v, q_s)`. Exact, no renormalization.
    pub fn conj(&self) -> Self {
        Self {
            q: Vec4::new(-self.q[0], -self.q[1], -self.q[2], self.q[3]),
        }
    }

    pub fn neg(&self) -> Self {
        Self { q: -self.q }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.q.dot(&other.q)
    }

    /// Hamilton product `self ⊗ b`, renormalized.
    pub fn mul(&self, b: &Self) -> Self {
        let p = hamilton(&self.q, &b.q);
        Self { q: p / p.norm() }
    }

    /// Representative with nonnegative scalar part.
    pub fn canonical(&self) -> Self {
        if self.q[3] < 0.0 {
            self.neg()
        } else {
            *self
        }
    }

    /// Rotation matrix taking body-frame components to inertial components;
    /// `R(a ⊗ b) = R(a) R(b)`.
    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let (x, y, z, w) = (self.q[0], self.q[1], self.q[2], self.q[3]);
        Matrix3::new(
            w * w + x * x - y * y - z * z,
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            w * w - x * x + y * y - z * z,
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            w * w - x * x - y * y + z * z,
        )
    }

    /// Inverse of [`to_rotation_matrix`](Self::to_rotation_matrix) by Shepperd's method.
    /// The result has nonnegative scalar part.
    pub fn from_rotation_matrix(m: &Matrix3<f64>) -> Self {
        let tr = m.trace();
        let cands = [m[(0, 0)], m[(1, 1)], m[(2, 2)], tr];
        let mut best = 3;
        for i in 0..3 {
            if cands[i] > cands[best] {
                best = i;
            }
        }
        let q = match best {
            3 => {
                let s = 2.0 * (1.0 + tr).sqrt();
                Vec4::new(
                    (m[(2, 1)] - m[(1, 2)]) / s,
                    (m[(0, 2)] - m[(2, 0)]) / s,
                    (m[(1, 0)] - m[(0, 1)]) / s,
                    s / 4.0,
                )
            }
            0 => {
                let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
                Vec4::new(
                    s / 4.0,
                    (m[(0, 1)] + m[(1, 0)]) / s,
                    (m[(0, 2)] + m[(2, 0)]) / s,
                    (m[(2, 1)] - m[(1, 2)]) / s,
                )
            }
            1 => {
                let s = 2.0 * (1.0 - m[(0, 0)] + m[(1, 1)] - m[(2, 2)]).sqrt();
                Vec4::new(
                    (m[(0, 1)] + m[(1, 0)]) / s,
                    s / 4.0,
                    (m[(1, 2)] + m[(2, 1)]) / s,
                    (m[(0, 2)] - m[(2, 0)]) / s,
                )
            }
            _ => {
                let s = 2.0 * (1.0 - m[(0, 0)] - m[(1, 1)] + m[(2, 2)]).sqrt();
                Vec4::new(
                    (m[(0, 2)] + m[(2, 0)]) / s,
                    (m[(1, 2)] + m[(2, 1)]) / s,
                    s / 4.0,
                    (m[(1, 0)] - m[(0, 1)]) / s,
                )
            }
        };
        Self { q: q / q.norm() }.canonical()
    }

    /// Rotation angle in `[0, π]` between two attitudes.
    pub fn angle_to(&self, other: &Self) -> f64 {
        let d = self.dot(other).abs().min(1.0);
        2.0 * d.acos()
    }
}

/// Raw Hamilton product of 4-vectors (no normalization).
pub fn hamilton(a: &Vec4, b: &Vec4) -> Vec4 {
    let (av, aw) = (Vec3::new(a[0], a[1], a[2]), a[3]);
    let (bv, bw) = (Vec3::new(b[0], b[1], b[2]), b[3]);
    let v = bv * aw + av * bw + av.cross(&bv);
    Vec4::new(v[0], v[1], v[2], aw * bw - av.dot(&bv))
}

/// 4×4 matrix `M(q̄)` with `q̄⁺ ⊗ q = M(q̄) q`.
pub fn error_matrix(qd: &UnitQuaternion) -> Matrix4<f64> {
    let (q1, q2, q3, q4) = (qd.q[0], qd.q[1], qd.q[2], qd.q[3]);
    Matrix4::new(
        q4, q3, -q2, -q1, //
        -q3, q4, q1, -q2, //
        q2, -q1, q4, -q3, //
        q1, q2, q3, q4,
    )
}

/// Error quaternion `q̄⁺ q`.
pub fn error_quaternion(q: &UnitQuaternion, q_desired: &UnitQuaternion) -> UnitQuaternion {
    let e = error_matrix(q_desired) * q.q;
    UnitQuaternion { q: e / e.norm() }
}

/// `Ω(ω)` with `q̇ = ½ Ω(ω) q`.
pub fn omega_matrix(w: &Vec3) -> Matrix4<f64> {
    let (x, y, z) = (w[0], w[1], w[2]);
    Matrix4::new(
        0.0, z, -y, x, //
        -z, 0.0, x, y, //
        y, -x, 0.0, z, //
        -x, -y, -z, 0.0,
    )
}

/// `[ω]×` with `[ω]× v = ω × v`.
pub fn cross_matrix(w: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0)
}

pub fn skew_operators(w: &Vec3) -> (Matrix4<f64>, Matrix3<f64>) {
    (omega_matrix(w), cross_matrix(w))
}

/// `Ξ(q)` with `Ω(ω) q = Ξ(q) ω`.
pub fn xi_matrix(q: &Vec4) -> Matrix4x3<f64> {
    let (q1, q2, q3, q4) = (q[0], q[1], q[2], q[3]);
    Matrix4x3::new(
        q4, -q3, q2, //
        q3, q4, -q1, //
        -q2, q1, q4, //
        -q1, -q2, -q3,
    )
}

/// Euler axis-angle rotation. The angle lies in `(−π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisAngle {
    axis: Vec3,
    angle: f64,
}

impl AxisAngle {
    pub fn new(axis: Vec3, angle: f64) -> Result<Self, QuatError> {
        let n = axis.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(QuatError::DegenerateAxis);
        }
        let mut a = angle.rem_euclid(2.0 * std::f64::consts::PI);
        if a > std::f64::consts::PI {
            a -= 2.0 * std::f64::consts::PI;
        }
        Ok(Self { axis: axis / n, angle: a })
    }

    pub fn axis(&self) -> Vec3 {
        self.axis
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    /// `axis · angle`
    pub fn rotation_vector(&self) -> Vec3 {
        self.axis * self.angle
    }

    pub fn to_quaternion(&self) -> UnitQuaternion {
        let (s, c) = (self.angle / 2.0).sin_cos();
        let v = self.axis * s;
        UnitQuaternion {
            q: Vec4::new(v[0], v[1], v[2], c),
        }
    }

    /// Angle in `[0, π]`; near identity (angle < 1e-12) returns axis `(0, 0, 1)`.
    pub fn from_quaternion(q: &UnitQuaternion) -> Self {
        let q = q.canonical();
        let v = q.vector();
        let s = v.norm();
        let angle = 2.0 * s.atan2(q.scalar());
        if angle < 1e-12 {
            return Self {
                axis: Vec3::z(),
                angle: 0.0,
            };
        }
        Self { axis: v / s, angle }
    }
}

/// Small-angle-safe rotation vector `axis·angle` of a quaternion (shorter rotation).
pub fn rotation_vector(q: &UnitQuaternion) -> Vec3 {
    let q = q.canonical();
    let v = q.vector();
    let s = v.norm();
    if s < 1e-12 {
        return v * 2.0;
    }
    v * (2.0 * s.atan2(q.scalar()) / s)
}

/// Spherical linear interpolation along the shorter arc. When `q1 = −q0` the two
/// represent the same rotation and `q0` is returned for every `t`.
pub fn slerp(q0: &UnitQuaternion, q1: &UnitQuaternion, t: f64) -> UnitQuaternion {
    let mut b = q1.q;
    let mut d = q0.q.dot(&b);
    if d < 0.0 {
        b = -b;
        d = -d;
    }
    if d > 1.0 - 1e-12 {
        let v = q0.q * (1.0 - t) + b * t;
        return UnitQuaternion { q: v / v.norm() };
    }
    let theta = d.min(1.0).acos();
    let st = theta.sin();
    let v = q0.q * (((1.0 - t) * theta).sin() / st) + b * ((t * theta).sin() / st);
    UnitQuaternion { q: v / v.norm() }
}

/// Golden-spiral (Fibonacci) lattice of `n` unit vectors.
pub fn equidistributed_axes(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let rad = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            let v = Vec3::new(rad * phi.cos(), rad * phi.sin(), z);
            v / v.norm()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn about_z(a: f64) -> UnitQuaternion {
        AxisAngle::new(Vec3::z(), a).unwrap().to_quaternion()
    }

    #[test]
    fn identity_is_neutral_and_conjugate_inverts() {
        let b = UnitQuaternion::new(0.1, -0.4, 0.3, 0.8).unwrap();
        let id = UnitQuaternion::identity();
        assert_relative_eq!(id.mul(&b).as_vec4(), b.as_vec4(), epsilon = 1e-15);
        assert_relative_eq!(b.conj().mul(&b).as_vec4(), id.as_vec4(), epsilon = 1e-15);
        assert_eq!(b.conj().conj(), b);
    }

    #[test]
    fn error_quaternion_examples() {
        let q = UnitQuaternion::new(0.2, 0.1, -0.5, 0.7).unwrap();
        assert_relative_eq!(error_quaternion(&q, &q).as_vec4(), Vec4::w(), epsilon = 1e-15);
        assert_relative_eq!(
            error_quaternion(&q, &UnitQuaternion::identity()).as_vec4(),
            q.as_vec4(),
            epsilon = 1e-15
        );
        let e = error_quaternion(&about_z(FRAC_PI_2), &about_z(FRAC_PI_4));
        assert_relative_eq!(e.as_vec4(), about_z(FRAC_PI_4).as_vec4(), epsilon = 1e-15);
    }

    #[test]
    fn error_matrix_is_the_conjugate_product() {
        let qd = UnitQuaternion::new(0.3, -0.2, 0.5, 0.6).unwrap();
        let q = UnitQuaternion::new(-0.1, 0.7, 0.2, 0.4).unwrap();
        let via_product = hamilton(&qd.conj().as_vec4(), &q.as_vec4());
        assert_relative_eq!(error_matrix(&qd) * q.as_vec4(), via_product, epsilon = 1e-15);
    }

    #[test]
    fn skew_operators_basics() {
        let (om, cr) = skew_operators(&Vec3::zeros());
        assert_eq!(om, Matrix4::zeros());
        assert_eq!(cr, Matrix3::zeros());
        let (_, cr) = skew_operators(&Vec3::x());
        assert_eq!(cr * Vec3::y(), Vec3::z());
        let w = Vec3::new(0.3, -1.2, 0.7);
        let (om, cr) = skew_operators(&w);
        assert_eq!(om.transpose(), -om);
        assert_eq!(cr.transpose(), -cr);
    }

    #[test]
    fn omega_matches_right_multiplication_by_rate() {
        let q = UnitQuaternion::new(0.3, -0.2, 0.5, 0.6).unwrap().as_vec4();
        let w = Vec3::new(0.1, -0.7, 0.25);
        let via_product = hamilton(&q, &Vec4::new(w[0], w[1], w[2], 0.0));
        assert_relative_eq!(omega_matrix(&w) * q, via_product, epsilon = 1e-15);
        assert_relative_eq!(xi_matrix(&q) * w, via_product, epsilon = 1e-15);
    }

    #[test]
    fn axis_angle_examples() {
        let q = AxisAngle::new(Vec3::new(0.3, 0.1, 0.2), 0.0).unwrap().to_quaternion();
        assert_eq!(q, UnitQuaternion::identity());
        let q = AxisAngle::new(Vec3::x(), PI).unwrap().to_quaternion();
        assert_relative_eq!(q.as_vec4(), Vec4::x(), epsilon = 1e-15);
        let q = AxisAngle::new(Vec3::new(1.0, 1.0, 1.0), PI / 3.0).unwrap().to_quaternion();
        let s = 0.5 / 3f64.sqrt();
        assert_relative_eq!(q.as_vec4(), Vec4::new(s, s, s, 3f64.sqrt() / 2.0), epsilon = 1e-15);
        let back = AxisAngle::from_quaternion(&UnitQuaternion::identity());
        assert_eq!((back.axis(), back.angle()), (Vec3::z(), 0.0));
    }

    #[test]
    fn slerp_midpoint_and_endpoints() {
        let q0 = UnitQuaternion::identity();
        let q1 = about_z(FRAC_PI_2);
        assert_relative_eq!(slerp(&q0, &q1, 0.0).as_vec4(), q0.as_vec4(), epsilon = 1e-15);
        assert_relative_eq!(slerp(&q0, &q1, 1.0).as_vec4(), q1.as_vec4(), epsilon = 1e-15);
        assert_relative_eq!(slerp(&q0, &q1, 0.5).as_vec4(), about_z(FRAC_PI_4).as_vec4(), epsilon = 1e-15);
        // q and −q are the same rotation
        assert_relative_eq!(slerp(&q1, &q1.neg(), 0.3).as_vec4(), q1.as_vec4(), epsilon = 1e-15);
    }

    #[test]
    fn shepperd_round_trip_in_all_branches() {
        for (axis, ang) in [
            (Vec3::x(), 0.1),
            (Vec3::x(), 3.0),
            (Vec3::y(), 3.0),
            (Vec3::z(), 3.0),
            (Vec3::new(1.0, -2.0, 0.5), 2.0),
        ] {
            let q = AxisAngle::new(axis, ang).unwrap().to_quaternion();
            let back = UnitQuaternion::from_rotation_matrix(&q.to_rotation_matrix());
            assert_relative_eq!(back.as_vec4(), q.canonical().as_vec4(), epsilon = 1e-14);
        }
    }

    #[test]
    fn axes_lattice() {
        assert_eq!(equidistributed_axes(1).len(), 1);
        assert_relative_eq!(equidistributed_axes(1)[0].norm(), 1.0, epsilon = 1e-15);
        let axes = equidistributed_axes(100);
        let mut min_sep = f64::INFINITY;
        for i in 0..axes.len() {
            assert!((axes[i].norm() - 1.0).abs() < 1e-12);
            for j in 0..i {
                min_sep = min_sep.min(axes[i].dot(&axes[j]).clamp(-1.0, 1.0).acos());
            }
        }
        assert!(min_sep.to_degrees() >= 15.0, "{}", min_sep.to_degrees());
        assert_eq!(axes, equidistributed_axes(100));
    }
}
