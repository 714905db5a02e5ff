//! IK-driven scripted controllers that complete each task by construction.
//! They generate synthetic demonstrations and serve as reset priors.

use nalgebra::UnitQuaternion;

use crate::environment::{Action, Controller, Environment, Observation, TaskId, WorldState};
use crate::geometry::{Pose, Vec3};
use crate::kinematics::{ik_step, IkConfig, ARM_JOINTS, EE_INDEX, GRIPPER_INDEX};

#[derive(Clone, Debug)]
pub struct ScriptedSolver {
    pub ik: IkConfig,
    /// Distance behind the grasp point targeted during Task 1, meters.
    pub standoff: f64,
    /// Height added to the Task 1 target while the hand is still turned away
    /// (scaled by misalignment / 90 degrees), so the hand comes in from above.
    pub lift: f64,
    /// Gripper closing speed as a fraction of its limit.
    pub close_speed: f64,
}

impl Default for ScriptedSolver {
    fn default() -> Self {
        Self {
            ik: IkConfig::default(),
            standoff: 0.12,
            lift: 0.15,
            close_speed: 1.0,
        }
    }
}

impl ScriptedSolver {
    /// A slower operator: smaller per-tick motion, like a person dragging a target.
    pub fn teleoperator() -> Self {
        Self {
            ik: IkConfig {
                max_linear: 0.006,
                max_angular: 0.02,
                ..IkConfig::default()
            },
            standoff: 0.12,
            lift: 0.15,
            close_speed: 0.25,
        }
    }

    /// Pose the hand is steered toward for the state's active task.
    pub fn target_pose(&self, env: &Environment, state: &WorldState) -> Pose {
        let ee = env.poses(state)[EE_INDEX];
        let dir = state.grasp_direction.into_inner();
        let position = match state.active_task {
            TaskId::Task1 => {
                let misalignment = crate::geometry::angle_between(&ee.transform_vector(&Vec3::z()), &dir);
                let raise = self.lift * (misalignment / std::f64::consts::FRAC_PI_2).min(1.0);
                state.grasp_point - dir * self.standoff + Vec3::z() * raise
            }
            TaskId::Task2 | TaskId::Task3 => state.grasp_point,
        };
        Pose::new(position, aligned_orientation(&ee, &dir))
    }
}

/// The orientation closest to `ee` whose approach (local z) axis points along `dir`.
pub fn aligned_orientation(ee: &Pose, dir: &Vec3) -> UnitQuaternion<f64> {
    let axis = ee.transform_vector(&Vec3::z());
    let turn = UnitQuaternion::rotation_between(&axis, dir).unwrap_or_else(|| {
        let perp = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        UnitQuaternion::from_axis_angle(
            &nalgebra::Unit::new_normalize(axis.cross(&perp)),
            std::f64::consts::PI,
        )
    });
    turn * ee.orientation
}

impl Controller for ScriptedSolver {
    fn act(&mut self, env: &Environment, state: &WorldState, _obs: &Observation) -> Action {
        let target = self.target_pose(env, state);
        let dt = env.thresholds().dt;
        let delta = ik_step(&env.chain, &state.joint_state, &target, &self.ik)
            .unwrap_or([0.0; ARM_JOINTS]);
        let mut a = [0.0; 7];
        for (v, d) in a.iter_mut().zip(delta) {
            *v = d / dt;
        }
        // scale the arm part as a whole so the hand keeps its direction of travel
        let over = (0..ARM_JOINTS)
            .map(|i| a[i].abs() / env.chain.max_speed(i))
            .fold(1.0, f64::max);
        for v in a.iter_mut().take(ARM_JOINTS) {
            *v /= over;
        }
        let gmax = env.chain.gripper.max_speed;
        a[GRIPPER_INDEX] = match state.active_task {
            TaskId::Task3 => gmax * self.close_speed,
            _ => -gmax,
        };
        env.clip_action(&Action(a))
    }
}
