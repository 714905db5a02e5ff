//! Signed distances between capsules and the convex primitives of the scene.

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: Vec3,
    pub b: Vec3,
}

impl Segment {
    pub fn new(a: Vec3, b: Vec3) -> Self {
        Self { a, b }
    }

    pub fn point(&self, t: f64) -> Vec3 {
        self.a + (self.b - self.a) * t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule {
    pub segment: Segment,
    pub radius: f64,
}

/// Oriented box given by its center pose and half extents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox {
    pub pose: Pose,
    pub half_extents: Vec3,
}

/// Capped cylinder along the local z axis, centered at `pose`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cylinder {
    pub pose: Pose,
    pub radius: f64,
    pub half_height: f64,
}

/// The solid region `z <= height`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfSpace {
    pub height: f64,
}

pub trait SignedDistance {
    /// Negative inside.
    fn point_distance(&self, p: &Vec3) -> f64;
}

impl SignedDistance for OrientedBox {
    fn point_distance(&self, p: &Vec3) -> f64 {
        let local = self.pose.inverse().transform_point(p);
        let q = local.abs() - self.half_extents;
        let outside = q.map(|v| v.max(0.0)).norm();
        let inside = q.x.max(q.y).max(q.z).min(0.0);
        outside + inside
    }
}

impl SignedDistance for Cylinder {
    fn point_distance(&self, p: &Vec3) -> f64 {
        let local = self.pose.inverse().transform_point(p);
        let radial = (local.x * local.x + local.y * local.y).sqrt() - self.radius;
        let axial = local.z.abs() - self.half_height;
        let outside = (radial.max(0.0).powi(2) + axial.max(0.0).powi(2)).sqrt();
        outside + radial.max(axial).min(0.0)
    }
}

impl SignedDistance for HalfSpace {
    fn point_distance(&self, p: &Vec3) -> f64 {
        p.z - self.height
    }
}

/// Minimum of the signed distance over the segment. Signed distance to a convex
/// set is convex along a line, so golden-section search finds the global minimum.
pub fn segment_distance<S: SignedDistance>(shape: &S, seg: &Segment) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let f = |t: f64| shape.point_distance(&seg.point(t));
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    f(0.0).min(f(1.0)).min(f1).min(f2)
}

/// Closest distance between two segments.
pub fn segment_segment_distance(s1: &Segment, s2: &Segment) -> f64 {
    let d1 = s1.b - s1.a;
    let d2 = s2.b - s2.a;
    let r = s1.a - s2.a;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let eps = 1e-15;
    let (s, t);
    if a <= eps && e <= eps {
        return r.norm();
    }
    if a <= eps {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= eps {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > eps {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    (s1.point(s) - s2.point(t)).norm()
}

pub fn capsule_capsule(c1: &Capsule, c2: &Capsule) -> f64 {
    segment_segment_distance(&c1.segment, &c2.segment) - c1.radius - c2.radius
}

pub fn capsule_shape<S: SignedDistance>(c: &Capsule, shape: &S) -> f64 {
    segment_distance(shape, &c.segment) - c.radius
}

pub fn capsule_halfspace(c: &Capsule, h: &HalfSpace) -> f64 {
    c.segment.a.z.min(c.segment.b.z) - h.height - c.radius
}

/// A collision participant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Body {
    /// Arm link `i`, from joint frame `i` to joint frame `i + 1`.
    Link(u8),
    Gripper,
    Object,
    Handle,
    Table,
    Floor,
}
