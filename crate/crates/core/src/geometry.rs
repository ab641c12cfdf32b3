//! Rigid transforms, 3D residuals between matched points and their
//! quantization onto the motion-pattern table.
//!
//! Camera coordinates follow the usual pinhole convention: `x` lateral,
//! `y` vertical (image down), `z` depth along the optical axis.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Rigid body transform `p -> rotation * p + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SE3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for SE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl SE3 {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(Matrix3::identity(), translation)
    }

    /// Rotation given as an axis-angle vector (radians).
    pub fn from_rotvec(rotvec: Vec3, translation: Vec3) -> Self {
        let rotation = Rotation3::new(rotvec).into_inner();
        Self::new(rotation, translation)
    }

    pub fn from_quaternion(q: [f64; 4], translation: Vec3) -> Self {
        let [qx, qy, qz, qw] = q;
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(qw, qx, qy, qz));
        Self::new(q.to_rotation_matrix().into_inner(), translation)
    }

    /// Rotation as `[qx, qy, qz, qw]` with `qw >= 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let q = if q.w < 0.0 { -q.into_inner() } else { q.into_inner() };
        [q.i, q.j, q.k, q.w]
    }

    /// Axis-angle vector of the rotation (radians).
    pub fn rotvec(&self) -> Vec3 {
        Rotation3::from_matrix_unchecked(self.rotation).scaled_axis()
    }

    #[inline]
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &SE3) -> SE3 {
        SE3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> SE3 {
        let rt = self.rotation.transpose();
        SE3 { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        let r = &self.rotation;
        let sin2 = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
        sin2.atan2(r.trace() - 1.0)
    }

    /// Orthonormal with determinant +1 and finite translation, within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let should_be_identity = self.rotation.transpose() * self.rotation;
        (should_be_identity - Matrix3::identity()).abs().max() <= tol
            && (self.rotation.determinant() - 1.0).abs() <= tol
            && self.translation.iter().all(|v| v.is_finite())
    }
}

/// Pixel position `(u, v)`; `u` grows to the right and `v` downwards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// One matched feature between the reference frame and the matched frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Correspondence {
    pub id: u64,
    pub px_re: Pixel,
    pub px_ma: Pixel,
    /// 3D point in reference-camera coordinates.
    pub x_re: Vec3,
    /// 3D point in matched-camera coordinates.
    pub x_ma: Vec3,
}

impl Correspondence {
    pub fn has_positive_depth(&self) -> bool {
        self.x_re.z > 0.0 && self.x_ma.z > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    /// Meters.
    pub raw: Vec3,
    /// Depth-normalized, dimensionless.
    pub normalized: Vec3,
}

/// Residual between the reference point and the matched point carried into
/// the reference frame by `pose`. The normalized form divides by the range
/// of the matched point so that far, noisier points are damped.
pub fn residual(c: &Correspondence, pose: &SE3, alpha: f64) -> Result<Residual> {
    let range = c.x_ma.norm();
    if range == 0.0 {
        return Err(Error::DegeneratePoint(c.id));
    }
    let raw = c.x_re - pose.transform_point(&c.x_ma);
    Ok(Residual { raw, normalized: raw * (alpha / range) })
}

/// Cell of the `bins_per_axis × bins_per_axis` motion-pattern table over the
/// depth (`iz`) and lateral (`ix`) residual components. `(0, 0)` is static.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MotionBin {
    pub iz: i32,
    pub ix: i32,
}

impl MotionBin {
    pub const STATIC: MotionBin = MotionBin { iz: 0, ix: 0 };

    pub fn new(iz: i32, ix: i32) -> Self {
        Self { iz, ix }
    }

    #[inline]
    pub fn is_static(self) -> bool {
        self == Self::STATIC
    }

    /// Row-major index into a flattened table.
    #[inline]
    pub fn index(self, bins_per_axis: usize) -> usize {
        let half = (bins_per_axis / 2) as i32;
        ((self.iz + half) as usize) * bins_per_axis + (self.ix + half) as usize
    }

    #[inline]
    pub fn from_index(index: usize, bins_per_axis: usize) -> Self {
        let half = (bins_per_axis / 2) as i32;
        Self { iz: (index / bins_per_axis) as i32 - half, ix: (index % bins_per_axis) as i32 - half }
    }
}

impl std::ops::Neg for MotionBin {
    type Output = MotionBin;

    fn neg(self) -> MotionBin {
        MotionBin::new(-self.iz, -self.ix)
    }
}

impl std::fmt::Display for MotionBin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.iz, self.ix)
    }
}

/// Map a residual onto the pattern table. The vertical component is not
/// binned. Rounding is half away from zero, then clamped to the outer ring.
pub fn quantize(r: &Residual, e_int_z: f64, e_int_x: f64, bins_per_axis: usize) -> MotionBin {
    debug_assert!(bins_per_axis % 2 == 1 && bins_per_axis >= 3);
    let half = (bins_per_axis / 2) as f64;
    let step = |value: f64, interval: f64| (value / interval).round().clamp(-half, half) as i32;
    MotionBin { iz: step(r.normalized.z, e_int_z), ix: step(r.normalized.x, e_int_x) }
}
