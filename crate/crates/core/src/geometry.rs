//! Rigid transforms stored as position + canonical unit quaternion.

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// A rigid pose. The quaternion is kept canonical (`w >= 0`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let q = UnitQuaternion::new_normalize(*q.quaternion());
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vec3, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: canonical(orientation),
        }
    }

    pub fn from_translation(position: Vec3) -> Self {
        Self::new(position, UnitQuaternion::identity())
    }

    /// Builds a pose from a `(w, x, y, z)` quaternion, rejecting anything not
    /// unit-norm within `tol`.
    pub fn from_wxyz(position: [f64; 3], q: [f64; 4], tol: f64) -> Option<Self> {
        if position.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return None;
        }
        let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
        if (raw.norm() - 1.0).abs() > tol {
            return None;
        }
        Some(Self::new(
            Vec3::from(position),
            UnitQuaternion::new_normalize(raw),
        ))
    }

    /// `self * other`: express `other` (given in self's frame) in self's parent frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.position + self.orientation * other.position,
            self.orientation * other.orientation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose::new(-(inv * self.position), inv)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.position + self.orientation * p
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.orientation * v
    }

    /// Quaternion as `[w, x, y, z]`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// Position followed by `[w, x, y, z]`.
    pub fn to_array(&self) -> [f64; 7] {
        let q = self.wxyz();
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q[0],
            q[1],
            q[2],
            q[3],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Axis-angle vector of `q` (axis scaled by angle, angle in `[0, pi]`).
pub fn rotation_vector(q: &UnitQuaternion<f64>) -> Vec3 {
    q.scaled_axis()
}

/// Rotation from an axis-angle vector.
pub fn from_rotation_vector(v: &Vec3) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*v)
}

/// World-frame orientation error taking `current` to `target`, as an axis-angle vector
/// of `target * current^-1`.
pub fn orientation_error(current: &UnitQuaternion<f64>, target: &UnitQuaternion<f64>) -> Vec3 {
    rotation_vector(&(target * current.inverse()))
}

/// Angle between two directions in radians.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    // atan2 keeps precision near 0 and pi
    a.cross(b).norm().atan2(a.dot(b))
}

pub fn unit(v: Vec3) -> Option<Unit<Vec3>> {
    Unit::try_new(v, 1e-12)
}

/// Serialized form of a pose: position and `[w, x, y, z]` quaternion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub position: [f64; 3],
    pub orientation: [f64; 4],
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        Self {
            position: p.position.into(),
            orientation: p.wxyz(),
        }
    }
}

impl PoseRecord {
    pub fn to_pose(&self, tol: f64) -> Option<Pose> {
        Pose::from_wxyz(self.position, self.orientation, tol)
    }
}
