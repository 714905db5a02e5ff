//! Forward kinematics, geometric Jacobian and damped least-squares IK for a
//! 6R arm with a one-parameter gripper.

mod chain;
mod ik;

pub use chain::{
    Gripper, Joint, KinematicChain, ARM_JOINTS, CHAIN_FORMAT_VERSION, JOINT_COUNT,
};
pub use ik::{clamp_delta_q, ik_step, pose_error, IkConfig, TwistDelta};

use nalgebra::Matrix6;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use chain::joint_rotation;

/// Number of poses produced by [`forward_kinematics`]: six arm joints, the gripper
/// joint and the end-effector.
pub const FK_POSES: usize = JOINT_COUNT + 1;
pub const EE_INDEX: usize = JOINT_COUNT;
pub const GRIPPER_INDEX: usize = ARM_JOINTS;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub angles: [f64; JOINT_COUNT],
    pub velocities: [f64; JOINT_COUNT],
}

impl JointState {
    pub fn at(angles: [f64; JOINT_COUNT]) -> Self {
        Self {
            angles,
            velocities: [0.0; JOINT_COUNT],
        }
    }

    pub fn home(chain: &KinematicChain) -> Self {
        Self::at(chain.home)
    }

    pub fn arm(&self) -> [f64; ARM_JOINTS] {
        let mut a = [0.0; ARM_JOINTS];
        a.copy_from_slice(&self.angles[..ARM_JOINTS]);
        a
    }

    pub fn validate(&self, chain: &KinematicChain) -> Result<()> {
        for (i, &a) in self.angles.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::NonFinite(format!("joint {i} angle")));
            }
            let (lo, hi) = (chain.lower(i), chain.upper(i));
            if a < lo || a > hi {
                return Err(Error::JointLimit {
                    joint: i,
                    angle: a,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(())
    }
}

/// World-frame poses without limit validation. Callers that accept external
/// input go through [`forward_kinematics`].
pub(crate) fn fk_unchecked(chain: &KinematicChain, angles: &[f64; JOINT_COUNT]) -> [Pose; FK_POSES] {
    let mut out = [Pose::identity(); FK_POSES];
    let mut frame = Pose::identity();
    for (i, joint) in chain.joints.iter().enumerate() {
        frame = frame.compose(&joint.origin);
        frame = frame.compose(&Pose::new(
            Default::default(),
            joint_rotation(&joint.axis, angles[i]),
        ));
        out[i] = frame;
    }
    let g = frame.compose(&chain.gripper.origin);
    out[GRIPPER_INDEX] = g.compose(&Pose::new(
        Default::default(),
        joint_rotation(&chain.gripper.axis, angles[GRIPPER_INDEX]),
    ));
    // the end-effector does not move with the fingers
    out[EE_INDEX] = g.compose(&chain.tool);
    out
}

/// Poses of the six arm joints, the gripper joint and the end-effector, in that order.
pub fn forward_kinematics(chain: &KinematicChain, state: &JointState) -> Result<[Pose; FK_POSES]> {
    state.validate(chain)?;
    Ok(fk_unchecked(chain, &state.angles))
}

pub(crate) fn jacobian_unchecked(chain: &KinematicChain, poses: &[Pose; FK_POSES]) -> Matrix6<f64> {
    let ee = poses[EE_INDEX].position;
    let mut j = Matrix6::zeros();
    for (i, joint) in chain.joints.iter().enumerate() {
        let axis = poses[i].orientation * joint.axis.into_inner();
        let lin = axis.cross(&(ee - poses[i].position));
        for r in 0..3 {
            j[(r, i)] = lin[r];
            j[(r + 3, i)] = axis[r];
        }
    }
    j
}

/// Geometric Jacobian mapping arm joint velocities to the end-effector twist
/// `[v; omega]` in the world frame. The gripper column is excluded.
pub fn jacobian(chain: &KinematicChain, state: &JointState) -> Result<Matrix6<f64>> {
    let poses = forward_kinematics(chain, state)?;
    Ok(jacobian_unchecked(chain, &poses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{orientation_error, Vec3};
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_state(chain: &KinematicChain, rng: &mut impl Rng) -> JointState {
        let mut a = [0.0; JOINT_COUNT];
        for (i, v) in a.iter_mut().enumerate() {
            *v = rng.gen_range(chain.lower(i)..chain.upper(i));
        }
        JointState::at(a)
    }

    #[test]
    fn zero_angles_compose_fixed_transforms() {
        let chain = KinematicChain::generic_6r();
        let poses = forward_kinematics(&chain, &JointState::at([0.0; 7])).unwrap();
        let mut expected = Pose::identity();
        for j in &chain.joints {
            expected = expected.compose(&j.origin);
        }
        expected = expected.compose(&chain.gripper.origin).compose(&chain.tool);
        assert!((poses[EE_INDEX].position - expected.position).norm() < 1e-15);
        assert!((poses[EE_INDEX].position - Vec3::new(0.0, 0.0, 1.07)).norm() < 1e-12);
    }

    #[test]
    fn base_yaw_rotates_end_effector() {
        let chain = KinematicChain::generic_6r();
        let mut angles = chain.home;
        let home = forward_kinematics(&chain, &JointState::at(angles)).unwrap()[EE_INDEX];
        angles[0] = FRAC_PI_2;
        let turned = forward_kinematics(&chain, &JointState::at(angles)).unwrap()[EE_INDEX];
        let rz = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2);
        assert!((turned.position - rz * home.position).norm() < 1e-12);
        assert!(turned.orientation.angle_to(&(rz * home.orientation)) < 1e-12);
    }

    /// A chain whose joints 2 and 3 form a planar 2-link arm in the x-z plane.
    fn planar_chain(l1: f64, l2: f64) -> KinematicChain {
        let mut c = KinematicChain::generic_6r();
        let offsets = [0.0, 0.0, l1, l2, 0.0, 0.0];
        for (j, o) in c.joints.iter_mut().zip(offsets) {
            j.origin = Pose::from_translation(Vec3::new(0.0, 0.0, o));
        }
        c.gripper.origin = Pose::identity();
        c.tool = Pose::identity();
        c.home = [0.0; 7];
        c
    }

    #[test]
    fn planar_two_link_matches_analytic() {
        let (l1, l2) = (0.37, 0.21);
        let chain = planar_chain(l1, l2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let t1 = rng.gen_range(-1.8..1.8);
            let t2 = rng.gen_range(-2.5..2.5);
            let poses = forward_kinematics(&chain, &JointState::at([0.0, t1, t2, 0.0, 0.0, 0.0, 0.0]))
                .unwrap();
            // rotation about +y tips +z toward +x
            let x = l1 * t1.sin() + l2 * (t1 + t2).sin();
            let z = l1 * t1.cos() + l2 * (t1 + t2).cos();
            let p = poses[EE_INDEX].position;
            assert!((p.x - x).abs() < 1e-10 && (p.z - z).abs() < 1e-10 && p.y.abs() < 1e-12);
        }
    }

    #[test]
    fn fk_rejects_limit_violation() {
        let chain = KinematicChain::generic_6r();
        let mut a = chain.home;
        a[1] = 5.0;
        assert!(matches!(
            forward_kinematics(&chain, &JointState::at(a)),
            Err(Error::JointLimit { joint: 1, .. })
        ));
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let chain = KinematicChain::generic_6r();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-7;
        for _ in 0..100 {
            let s = random_state(&chain, &mut rng);
            let j = jacobian(&chain, &s).unwrap();
            for c in 0..ARM_JOINTS {
                let mut plus = s.angles;
                let mut minus = s.angles;
                plus[c] += h;
                minus[c] -= h;
                let pp = fk_unchecked(&chain, &plus)[EE_INDEX];
                let pm = fk_unchecked(&chain, &minus)[EE_INDEX];
                let dp = (pp.position - pm.position) / (2.0 * h);
                let dphi = orientation_error(&pm.orientation, &pp.orientation) / (2.0 * h);
                for r in 0..3 {
                    assert!((j[(r, c)] - dp[r]).abs() < 1e-6);
                    assert!((j[(r + 3, c)] - dphi[r]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn distal_column_perpendicular_when_extended() {
        let chain = planar_chain(0.3, 0.3);
        // stretched out along +x
        let s = JointState::at([0.0, FRAC_PI_2, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let j = jacobian(&chain, &s).unwrap();
        let poses = forward_kinematics(&chain, &s).unwrap();
        let link = poses[EE_INDEX].position - poses[2].position;
        let col = Vec3::new(j[(0, 2)], j[(1, 2)], j[(2, 2)]);
        assert!(col.norm() > 0.1);
        assert!(col.dot(&link).abs() < 1e-12);
    }

    #[test]
    fn stretched_configuration_is_singular() {
        let chain = KinematicChain::generic_6r();
        let j = jacobian(&chain, &JointState::at([0.0; 7])).unwrap();
        let sv = j.svd(false, false).singular_values;
        let rank = sv.iter().filter(|&&s| s > 1e-9 * sv.max()).count();
        assert!(rank < 6, "singular values {sv:?}");
    }
}
