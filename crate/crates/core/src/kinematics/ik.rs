use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use super::{fk_unchecked, jacobian_unchecked, JointState, KinematicChain, ARM_JOINTS, EE_INDEX};
use crate::error::{Error, Result};
use crate::geometry::{orientation_error, Pose, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkConfig {
    /// Damping of the least-squares pseudoinverse.
    pub damping: f64,
    /// Per-iteration cap on the position part of the pose error, meters.
    pub max_linear: f64,
    /// Per-iteration cap on the orientation part, radians.
    pub max_angular: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            damping: 0.01,
            max_linear: 0.02,
            max_angular: 0.05,
        }
    }
}

/// A small end-effector displacement: translation plus axis-angle rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwistDelta {
    pub dp: Vec3,
    pub dphi: Vec3,
}

impl TwistDelta {
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.dp.x, self.dp.y, self.dp.z, self.dphi.x, self.dphi.y, self.dphi.z,
        )
    }
}

fn clamp_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    // the rescaled norm can land a few ulps above `max`; leave it there so clamping is idempotent
    if n > max * (1.0 + 8.0 * f64::EPSILON) {
        v * (max / n)
    } else {
        v
    }
}

/// Scales each part of the twist down to its configured cap, keeping its direction.
pub fn clamp_delta_q(raw: &TwistDelta, config: &IkConfig) -> TwistDelta {
    TwistDelta {
        dp: clamp_norm(raw.dp, config.max_linear),
        dphi: clamp_norm(raw.dphi, config.max_angular),
    }
}

/// Unclamped error taking `current` to `target`.
pub fn pose_error(current: &Pose, target: &Pose) -> TwistDelta {
    TwistDelta {
        dp: target.position - current.position,
        dphi: orientation_error(&current.orientation, &target.orientation),
    }
}

fn dls_solve(j: &Matrix6<f64>, dq: &Vector6<f64>, damping: f64) -> Vector6<f64> {
    let a = j * j.transpose() + Matrix6::identity() * (damping * damping);
    // JJ^T + l^2 I is symmetric positive definite for l > 0
    match a.cholesky() {
        Some(ch) => j.transpose() * ch.solve(dq),
        None => Vector6::zeros(),
    }
}

/// One damped least-squares step toward `target`. Returns the arm joint increment,
/// already reduced so that `angles + delta` respects the joint limits.
pub fn ik_step(
    chain: &KinematicChain,
    state: &JointState,
    target: &Pose,
    config: &IkConfig,
) -> Result<[f64; ARM_JOINTS]> {
    if !target.is_finite() {
        return Err(Error::InvalidInput("non-finite IK target".into()));
    }
    let q = target.orientation.quaternion();
    if (q.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("IK target orientation is not unit".into()));
    }
    state.validate(chain)?;
    let poses = fk_unchecked(chain, &state.angles);
    let err = clamp_delta_q(&pose_error(&poses[EE_INDEX], target), config);
    let j = jacobian_unchecked(chain, &poses);
    let dtheta = dls_solve(&j, &err.to_vector(), config.damping);
    let mut out = [0.0; ARM_JOINTS];
    for (i, d) in out.iter_mut().enumerate() {
        let next = chain.clamp_angle(i, state.angles[i] + dtheta[i]);
        *d = next - state.angles[i];
    }
    Ok(out)
}
