//! Rotation types with pinned conventions.
//!
//! Quaternions are Hamilton, stored w-first, and canonicalized so that `w >= 0`
//! (with a sign tie-break on the vector part when `w == 0`), which makes `q` and
//! `-q` compare equal as values. Euler triples are *intrinsic*: `Xyz` means
//! `R = Rx(a) · Ry(b) · Rz(c)` with each factor applied in the body frame.

use core::ops::Mul;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::math::{atan2, canonical_angle, cos, hypot, sin, sqrt};

/// Below this angle a rotation is treated as the identity by [`UnitQuaternion::to_axis_angle`].
pub const ZERO_ANGLE: f64 = 1e-12;

/// Euler extraction switches to the singular branch when the middle angle's
/// cosine (`Xyz`) or sine (`Xyx`) drops below this value.
pub const GIMBAL_TOLERANCE: f64 = 1e-10;

/// Tolerance used when validating externally supplied rotation matrices.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl UnitQuaternion {
    pub const IDENTITY: Self = Self {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes and canonicalizes `(w, x, y, z)`.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        if !(w.is_finite() && x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::NonFinite("quaternion"));
        }
        let norm = sqrt(w * w + x * x + y * y + z * z);
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(Self::canonical(w / norm, x / norm, y / norm, z / norm))
    }

    /// Normalizes an already nearly-unit quaternion. Only used on internally
    /// produced values, which are finite and far from zero norm.
    fn renormalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let norm_sq = w * w + x * x + y * y + z * z;
        // Already unit to rounding: leave the bits alone so composing with the
        // identity is exact.
        if (norm_sq - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Self::canonical(w, x, y, z);
        }
        let norm = sqrt(norm_sq);
        Self::canonical(w / norm, x / norm, y / norm, z / norm)
    }

    fn canonical(w: f64, x: f64, y: f64, z: f64) -> Self {
        let flip = if w != 0.0 {
            w < 0.0
        } else if x != 0.0 {
            x < 0.0
        } else if y != 0.0 {
            y < 0.0
        } else {
            z < 0.0
        };
        let s = if flip { -1.0 } else { 1.0 };
        // `+ 0.0` folds negative zeros.
        Self {
            w: s * w + 0.0,
            x: s * x + 0.0,
            y: s * y + 0.0,
            z: s * z + 0.0,
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Components in `[w, x, y, z]` order, the order used on the wire and in files.
    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_array(wxyz: [f64; 4]) -> Result<Self> {
        Self::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3])
    }

    pub fn vector_part(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn inverse(&self) -> Self {
        Self::canonical(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self ⊗ rhs`, renormalized.
    pub fn compose(&self, rhs: &Self) -> Self {
        let (w1, x1, y1, z1) = (self.w, self.x, self.y, self.z);
        let (w2, x2, y2, z2) = (rhs.w, rhs.x, rhs.y, rhs.z);
        Self::renormalized(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )
    }

    pub fn from_axis_angle(aa: &AxisAngle) -> Self {
        let half = 0.5 * aa.angle;
        let s = sin(half);
        Self::renormalized(cos(half), aa.axis.x * s, aa.axis.y * s, aa.axis.z * s)
    }

    /// Axis-angle form with angle in `[0, π]`. Rotations smaller than
    /// [`ZERO_ANGLE`] return axis `(1, 0, 0)` and angle `0`.
    pub fn to_axis_angle(&self) -> AxisAngle {
        let v = self.vector_part();
        let s = v.norm();
        // w >= 0 by construction, so the angle lands in [0, π].
        let angle = 2.0 * atan2(s, self.w);
        if angle < ZERO_ANGLE || s == 0.0 {
            return AxisAngle::ZERO;
        }
        AxisAngle {
            axis: v / s,
            angle,
        }
    }

    /// Rotation vector `axis · angle`.
    pub fn log(&self) -> Vector3<f64> {
        let aa = self.to_axis_angle();
        aa.axis * aa.angle
    }

    pub fn from_rotation_vector(v: &Vector3<f64>) -> Self {
        let angle = v.norm();
        if angle == 0.0 {
            return Self::IDENTITY;
        }
        Self::from_axis_angle(&AxisAngle {
            axis: v / angle,
            angle,
        })
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let u = self.vector_part();
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(&t)
    }

    pub fn to_rotation_matrix(&self) -> RotationMatrix {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        RotationMatrix(Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ))
    }

    /// Distance that ignores the double cover: `min(|q − p|, |q + p|)`.
    pub fn distance(&self, other: &Self) -> f64 {
        let a = self.to_array();
        let b = other.to_array();
        let mut minus = 0.0;
        let mut plus = 0.0;
        for i in 0..4 {
            minus += (a[i] - b[i]) * (a[i] - b[i]);
            plus += (a[i] + b[i]) * (a[i] + b[i]);
        }
        sqrt(minus.min(plus))
    }

    /// Geodesic angle between two orientations, in `[0, π]`.
    pub fn angle_to(&self, other: &Self) -> f64 {
        self.inverse().compose(other).to_axis_angle().angle
    }

    pub fn from_euler(e: &EulerTriple) -> Self {
        compose_euler(e).to_quaternion()
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    fn mul(self, rhs: Self) -> Self::Output {
        self.compose(&rhs)
    }
}

/// Hamilton product `q1 ⊗ q2`.
pub fn compose(q1: &UnitQuaternion, q2: &UnitQuaternion) -> UnitQuaternion {
    q1.compose(q2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle {
    pub axis: Vector3<f64>,
    pub angle: f64,
}

impl AxisAngle {
    pub const ZERO: Self = Self {
        axis: Vector3::new(1.0, 0.0, 0.0),
        angle: 0.0,
    };

    /// Normalizes the axis and folds the angle into `[0, π]`, flipping the
    /// axis when the wrapped angle is negative.
    pub fn new(axis: Vector3<f64>, angle: f64) -> Result<Self> {
        if !(axis.iter().all(|v| v.is_finite()) && angle.is_finite()) {
            return Err(Error::NonFinite("axis-angle"));
        }
        let n = axis.norm();
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let mut axis = axis / n;
        let mut angle = crate::math::wrap_angle(angle);
        if angle < 0.0 {
            axis = -axis;
            angle = -angle;
        }
        if angle == 0.0 {
            return Ok(Self::ZERO);
        }
        Ok(Self { axis, angle })
    }

    pub fn about_x(angle: f64) -> Self {
        Self::new(Vector3::x(), angle).unwrap_or(Self::ZERO)
    }
    pub fn about_y(angle: f64) -> Self {
        Self::new(Vector3::y(), angle).unwrap_or(Self::ZERO)
    }
    pub fn about_z(angle: f64) -> Self {
        Self::new(Vector3::z(), angle).unwrap_or(Self::ZERO)
    }
}

/// Rotational displacement from `q0` to `q`, with its angle scaled by `alpha_r`.
///
/// Returns `(v, alpha_r · θ)` where `(v, θ)` is the axis-angle form of
/// `q0⁻¹ ⊗ q`. The axis is passed through untouched.
pub fn scaled_displacement(
    q0: &UnitQuaternion,
    q: &UnitQuaternion,
    alpha_r: f64,
) -> Result<AxisAngle> {
    if !(alpha_r > 0.0 && alpha_r <= 1.0) {
        return Err(Error::ScalingOutOfRange {
            name: "alpha_r",
            value: alpha_r,
        });
    }
    let displacement = q0.inverse().compose(q).to_axis_angle();
    Ok(AxisAngle {
        axis: displacement.axis,
        angle: alpha_r * displacement.angle,
    })
}

/// Row-major 3×3 proper rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl Default for RotationMatrix {
    fn default() -> Self {
        Self::identity()
    }
}

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates orthonormality and a positive determinant.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("rotation matrix"));
        }
        let gram = m.transpose() * m - Matrix3::identity();
        if gram.norm() > ORTHONORMAL_TOLERANCE
            || (m.determinant() - 1.0).abs() > ORTHONORMAL_TOLERANCE
        {
            return Err(Error::InvalidRotation);
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::from_matrix(Matrix3::new(
            rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0],
            rows[2][1], rows[2][2],
        ))
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn rx(angle: f64) -> Self {
        let (s, c) = (sin(angle), cos(angle));
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn ry(angle: f64) -> Self {
        let (s, c) = (sin(angle), cos(angle));
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn rz(angle: f64) -> Self {
        let (s, c) = (sin(angle), cos(angle));
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Inverse, i.e. the transpose.
    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn from_quaternion(q: &UnitQuaternion) -> Self {
        q.to_rotation_matrix()
    }

    /// Shepperd's method: pick the largest of the four squared components as pivot.
    pub fn to_quaternion(&self) -> UnitQuaternion {
        let m = &self.0;
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let (w, x, y, z);
        if trace >= m[(0, 0)] && trace >= m[(1, 1)] && trace >= m[(2, 2)] {
            let s = 2.0 * sqrt(1.0 + trace);
            w = 0.25 * s;
            x = (m[(2, 1)] - m[(1, 2)]) / s;
            y = (m[(0, 2)] - m[(2, 0)]) / s;
            z = (m[(1, 0)] - m[(0, 1)]) / s;
        } else if m[(0, 0)] >= m[(1, 1)] && m[(0, 0)] >= m[(2, 2)] {
            let s = 2.0 * sqrt(1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]);
            w = (m[(2, 1)] - m[(1, 2)]) / s;
            x = 0.25 * s;
            y = (m[(0, 1)] + m[(1, 0)]) / s;
            z = (m[(0, 2)] + m[(2, 0)]) / s;
        } else if m[(1, 1)] >= m[(2, 2)] {
            let s = 2.0 * sqrt(1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]);
            w = (m[(0, 2)] - m[(2, 0)]) / s;
            x = (m[(0, 1)] + m[(1, 0)]) / s;
            y = 0.25 * s;
            z = (m[(1, 2)] + m[(2, 1)]) / s;
        } else {
            let s = 2.0 * sqrt(1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]);
            w = (m[(1, 0)] - m[(0, 1)]) / s;
            x = (m[(0, 2)] + m[(2, 0)]) / s;
            y = (m[(1, 2)] + m[(2, 1)]) / s;
            z = 0.25 * s;
        }
        UnitQuaternion::renormalized(w, x, y, z)
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        (self.0 - other.0).norm()
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: Self) -> Self::Output {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<&RotationMatrix> for &RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: &RotationMatrix) -> Self::Output {
        RotationMatrix(self.0 * rhs.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EulerConvention {
    /// Intrinsic X, then Y, then Z.
    #[default]
    Xyz,
    /// Intrinsic X, then Y, then X.
    Xyx,
}

impl EulerConvention {
    pub fn name(&self) -> &'static str {
        match self {
            EulerConvention::Xyz => "XYZ",
            EulerConvention::Xyx => "XYX",
        }
    }
}

impl core::str::FromStr for EulerConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "XYZ" | "xyz" => Ok(Self::Xyz),
            "XYX" | "xyx" => Ok(Self::Xyx),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown euler convention {other:?}"
            ))),
        }
    }
}

/// Intrinsic Euler angles. `a` and `c` lie in (−π, π]; `b` lies in
/// [−π/2, π/2] for `Xyz` and [0, π] for `Xyx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerTriple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub convention: EulerConvention,
}

impl EulerTriple {
    pub fn new(a: f64, b: f64, c: f64, convention: EulerConvention) -> Result<Self> {
        use core::f64::consts::{FRAC_PI_2, PI};
        for (name, v) in [("a", a), ("c", c)] {
            if !(v > -PI && v <= PI) {
                return Err(Error::EulerOutOfRange { name, value: v });
            }
        }
        let b_ok = match convention {
            EulerConvention::Xyz => (-FRAC_PI_2..=FRAC_PI_2).contains(&b),
            EulerConvention::Xyx => (0.0..=PI).contains(&b),
        };
        if !b_ok {
            return Err(Error::EulerOutOfRange { name: "b", value: b });
        }
        Ok(Self {
            a,
            b,
            c,
            convention,
        })
    }

    pub fn angles(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }
}

/// Product of the intrinsic elementary rotations in convention order.
pub fn compose_euler(e: &EulerTriple) -> RotationMatrix {
    let last = match e.convention {
        EulerConvention::Xyz => RotationMatrix::rz(e.c),
        EulerConvention::Xyx => RotationMatrix::rx(e.c),
    };
    RotationMatrix::rx(e.a) * RotationMatrix::ry(e.b) * last
}

/// Intrinsic Euler angles reproducing `r`.
///
/// The first two angles are read from the matrix; the third is recovered from
/// the residual `Ry(b)ᵀ · Rx(a)ᵀ · R`, which keeps the recomposition accurate
/// arbitrarily close to the singularity. At the singularity itself
/// ([`GIMBAL_TOLERANCE`]) the third angle is fixed to `0` and the whole
/// remaining rotation about the degenerate axis is carried by `a`.
pub fn extract_euler(r: &RotationMatrix, convention: EulerConvention) -> EulerTriple {
    let m = r.matrix();
    let (a, b, c) = match convention {
        EulerConvention::Xyz => {
            // R = Rx(a) Ry(b) Rz(c); row 0 = [cb cc, −cb sc, sb].
            let cb = hypot(m[(0, 0)], m[(0, 1)]);
            let b = atan2(m[(0, 2)], cb);
            if cb < GIMBAL_TOLERANCE {
                (atan2(m[(2, 1)], m[(1, 1)]), b, 0.0)
            } else {
                let a = atan2(-m[(1, 2)], m[(2, 2)]);
                let (sa, ca) = (sin(a), cos(a));
                // Row 1 of Rx(a)ᵀ R equals [sc, cc, 0].
                let c = atan2(
                    ca * m[(1, 0)] + sa * m[(2, 0)],
                    ca * m[(1, 1)] + sa * m[(2, 1)],
                );
                (a, b, c)
            }
        }
        EulerConvention::Xyx => {
            // R = Rx(a) Ry(b) Rx(c); row 0 = [cb, sb sc, sb cc], column 0 = [cb, sa sb, −ca sb].
            let sb = hypot(m[(0, 1)], m[(0, 2)]);
            let b = atan2(sb, m[(0, 0)]);
            if sb < GIMBAL_TOLERANCE {
                (atan2(m[(2, 1)], m[(1, 1)]), b, 0.0)
            } else {
                let a = atan2(m[(1, 0)], -m[(2, 0)]);
                let (sa, ca) = (sin(a), cos(a));
                // Row 1 of Rx(a)ᵀ R equals [0, cc, −sc].
                let c = atan2(
                    -(ca * m[(1, 2)] + sa * m[(2, 2)]),
                    ca * m[(1, 1)] + sa * m[(2, 1)],
                );
                (a, b, c)
            }
        }
    };
    EulerTriple {
        a: canonical_angle(a),
        b: b + 0.0,
        c: canonical_angle(c),
        convention,
    }
}
