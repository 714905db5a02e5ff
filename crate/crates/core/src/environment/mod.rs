//! The kinematic grasping world: reset/step/observe, task predicates and
//! geometric collision checks.

mod scene;

pub use scene::{CollisionSpec, ObjectSpec, SamplingRegion, Scene, Thresholds, SCENE_FORMAT_VERSION};

use std::collections::BTreeSet;

use nalgebra::{Unit, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collision::{
    capsule_capsule, capsule_halfspace, capsule_shape, Body, Capsule, Cylinder, HalfSpace,
    OrientedBox, Segment,
};
use crate::error::{Error, Result};
use crate::geometry::{angle_between, Pose, Vec3};
use crate::kinematics::{
    fk_unchecked, JointState, KinematicChain, EE_INDEX, FK_POSES, GRIPPER_INDEX, JOINT_COUNT,
};
use crate::rewards::{EventTag, RewardEvent};

pub const OBS_ENTITIES: usize = FK_POSES + 1;
pub const OBS_DIM: usize = 7 * OBS_ENTITIES;
pub const ACTION_DIM: usize = JOINT_COUNT;
/// The link from the last arm joint to the gripper joint.
const HAND_LINK: u8 = (FK_POSES - 3) as u8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskId {
    Task1,
    Task2,
    Task3,
}

impl TaskId {
    pub const ALL: [TaskId; 3] = [TaskId::Task1, TaskId::Task2, TaskId::Task3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn next(self) -> Option<Self> {
        Self::from_index(self.index() + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalCause {
    Success,
    Collision,
    Timeout,
    DriftAway,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskStatus {
    Success,
    InProgress,
    Violated,
}

/// Flattened 63-dim observation: for each of the six arm joints, the gripper joint,
/// the end-effector and the target object, position then `(w, x, y, z)` quaternion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn entity(&self, i: usize) -> &[f64] {
        &self.0[7 * i..7 * i + 7]
    }
}

/// Joint angular velocities, rad/s (six arm joints then the gripper).
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Action(pub [f64; ACTION_DIM]);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub joint_state: JointState,
    pub object_pose: Pose,
    pub grasp_point: Vec3,
    pub grasp_direction: Unit<Vec3>,
    pub step_count: u32,
    pub active_task: TaskId,
    /// The episode succeeds when this task completes.
    pub final_task: TaskId,
    pub terminal: Option<TerminalCause>,
    /// Set the first time the hand comes into alignment; the alignment bonus pays once.
    #[serde(default)]
    pub direction_reached: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    /// The action as applied, after speed clipping.
    pub applied: Action,
    pub events: Vec<RewardEvent>,
    pub task_transition: Option<TaskId>,
    pub terminal: Option<TerminalCause>,
}

/// A policy that can drive the arm, used to build initial states for later tasks.
pub trait Controller {
    fn begin_episode(&mut self) {}
    fn act(&mut self, env: &Environment, state: &WorldState, obs: &Observation) -> Action;
}

/// Geometric measures the predicates and shaping events are built from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskGeometry {
    /// Angle between the hand approach axis and the grasp direction, radians.
    pub alignment: f64,
    /// Distance from the hand to the grasp ray (the half-line behind the grasp point).
    pub ray_distance: f64,
    /// Distance from the hand to the grasp point.
    pub point_distance: f64,
    pub closed_fraction: f64,
    /// Distance from the hand to the object origin.
    pub object_distance: f64,
}

#[derive(Clone, Debug)]
pub struct Environment {
    pub chain: KinematicChain,
    pub scene: Scene,
}

impl Environment {
    pub fn new(chain: KinematicChain, scene: Scene) -> Result<Self> {
        chain.validate()?;
        scene.validate()?;
        Ok(Self { chain, scene })
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.scene.thresholds
    }

    /// A state with the arm at home and the object at `object_pose`.
    pub fn state_with_object(&self, object_pose: Pose, task: TaskId, final_task: TaskId) -> WorldState {
        let o = &self.scene.object;
        let dir = object_pose.transform_vector(&Vec3::from(o.grasp_direction));
        WorldState {
            joint_state: JointState::home(&self.chain),
            object_pose,
            grasp_point: object_pose.transform_point(&Vec3::from(o.grasp_point)),
            grasp_direction: Unit::new_normalize(dir),
            step_count: 0,
            active_task: task,
            final_task,
            terminal: None,
            direction_reached: false,
        }
    }

    pub fn sample_object_pose(&self, rng: &mut impl Rng) -> Pose {
        let s = &self.scene.sampling;
        let draw = |rng: &mut dyn rand::RngCore, r: [f64; 2]| {
            if r[0] == r[1] {
                r[0]
            } else {
                rng.gen_range(r[0]..r[1])
            }
        };
        let x = draw(rng, s.x);
        let y = draw(rng, s.y);
        let yaw = draw(rng, s.yaw_deg).to_radians();
        Pose::new(
            Vec3::new(x, y, self.scene.collision.table_height),
            UnitQuaternion::from_axis_angle(&Vec3::z_axis(), yaw),
        )
    }

    /// Samples a scene and, when `start_task` is past Task 1, rolls the earlier-task
    /// controllers out to produce the initial state. `priors[i]` drives task `i`.
    pub fn reset(
        &self,
        seed: u64,
        start_task: TaskId,
        final_task: TaskId,
        priors: &mut [&mut dyn Controller],
    ) -> Result<WorldState> {
        if final_task < start_task {
            return Err(Error::InvalidInput("final task precedes start task".into()));
        }
        if priors.len() < start_task.index() {
            return Err(Error::InvalidInput(format!(
                "{start_task:?} needs {} prior controllers, got {}",
                start_task.index(),
                priors.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let attempts = self.thresholds().reset_retries.max(1);
        for _ in 0..attempts {
            let pose = self.sample_object_pose(&mut rng);
            let mut state = self.state_with_object(pose, TaskId::Task1, start_task);
            if start_task == TaskId::Task1 {
                state.final_task = final_task;
                return Ok(state);
            }
            if self.roll_out_priors(&mut state, start_task, priors)? {
                state.step_count = 0;
                state.active_task = start_task;
                state.final_task = final_task;
                state.terminal = None;
                return Ok(state);
            }
        }
        Err(Error::Setup {
            task: TaskId::from_index(start_task.index() - 1).unwrap_or(TaskId::Task1),
            attempts,
        })
    }

    fn roll_out_priors(
        &self,
        state: &mut WorldState,
        start_task: TaskId,
        priors: &mut [&mut dyn Controller],
    ) -> Result<bool> {
        for t in 0..start_task.index() {
            let task = TaskId::from_index(t).expect("index below start task");
            state.active_task = task;
            state.final_task = task;
            state.step_count = 0;
            state.terminal = None;
            let ctrl = &mut priors[t];
            ctrl.begin_episode();
            loop {
                let obs = self.observe(state);
                let action = ctrl.act(self, state, &obs);
                let out = self.step(state, &action)?;
                match out.terminal {
                    Some(TerminalCause::Success) => break,
                    Some(_) => return Ok(false),
                    None => {}
                }
            }
        }
        Ok(true)
    }

    pub fn poses(&self, state: &WorldState) -> [Pose; FK_POSES] {
        fk_unchecked(&self.chain, &state.joint_state.angles)
    }

    pub fn observe(&self, state: &WorldState) -> Observation {
        let poses = self.poses(state);
        let mut out = [0.0; OBS_DIM];
        for (i, p) in poses.iter().chain(std::iter::once(&state.object_pose)).enumerate() {
            out[7 * i..7 * i + 7].copy_from_slice(&p.to_array());
        }
        Observation(out)
    }

    pub fn geometry(&self, state: &WorldState) -> TaskGeometry {
        let ee = self.poses(state)[EE_INDEX];
        self.geometry_from(state, &ee)
    }

    fn geometry_from(&self, state: &WorldState, ee: &Pose) -> TaskGeometry {
        let hand_axis = ee.transform_vector(&Vec3::z());
        let dir = state.grasp_direction.into_inner();
        let to_point = state.grasp_point - ee.position;
        let along = to_point.dot(&dir);
        let ray_distance = if along >= 0.0 {
            (to_point - dir * along).norm()
        } else {
            to_point.norm()
        };
        TaskGeometry {
            alignment: angle_between(&hand_axis, &dir),
            ray_distance,
            point_distance: to_point.norm(),
            closed_fraction: self
                .chain
                .gripper
                .closed_fraction(state.joint_state.angles[GRIPPER_INDEX]),
            object_distance: (ee.position - state.object_pose.position).norm(),
        }
    }

    fn status_from(&self, g: &TaskGeometry, task: TaskId) -> TaskStatus {
        let t = self.thresholds();
        let align = t.align_deg.to_radians();
        let aligned = g.alignment < align && g.ray_distance < t.corridor_radius;
        let held = g.alignment < align + t.hysteresis_deg.to_radians()
            && g.ray_distance < t.corridor_radius + t.corridor_hysteresis;
        match task {
            TaskId::Task1 => {
                if aligned {
                    TaskStatus::Success
                } else {
                    TaskStatus::InProgress
                }
            }
            TaskId::Task2 => {
                if !held {
                    TaskStatus::Violated
                } else if aligned && g.point_distance < t.near_distance {
                    TaskStatus::Success
                } else {
                    TaskStatus::InProgress
                }
            }
            TaskId::Task3 => {
                let at_point = g.point_distance < t.near_distance;
                if at_point && g.closed_fraction >= t.closure_fraction {
                    TaskStatus::Success
                } else if !held || g.point_distance >= t.near_distance + t.corridor_hysteresis {
                    TaskStatus::Violated
                } else {
                    TaskStatus::InProgress
                }
            }
        }
    }

    pub fn task_predicate(&self, state: &WorldState, task: TaskId) -> TaskStatus {
        self.status_from(&self.geometry(state), task)
    }

    fn link_capsules(&self, poses: &[Pose; FK_POSES]) -> Vec<(Body, Capsule)> {
        let c = &self.scene.collision;
        let mut out = Vec::with_capacity(FK_POSES - 1);
        for i in 0..FK_POSES - 2 {
            out.push((
                Body::Link(i as u8),
                Capsule {
                    segment: Segment::new(poses[i].position, poses[i + 1].position),
                    radius: c.link_radius,
                },
            ));
        }
        out.push((
            Body::Gripper,
            Capsule {
                segment: Segment::new(poses[GRIPPER_INDEX].position, poses[EE_INDEX].position),
                radius: c.gripper_radius,
            },
        ));
        out
    }

    /// Cup body and handle in the world frame.
    pub fn object_shapes(&self, object_pose: &Pose) -> (Cylinder, OrientedBox) {
        let o = &self.scene.object;
        let body = Cylinder {
            pose: object_pose.compose(&Pose::from_translation(Vec3::new(0.0, 0.0, o.body_height / 2.0))),
            radius: o.body_radius,
            half_height: o.body_height / 2.0,
        };
        let handle = OrientedBox {
            pose: object_pose.compose(&Pose::from_translation(Vec3::from(o.handle_center))),
            half_extents: Vec3::from(o.handle_half_extents),
        };
        (body, handle)
    }

    /// Signed distances for every checked pair. The hand (gripper and the wrist link
    /// carrying it) may touch the handle, and the base link is mounted on the table.
    pub fn pair_distances(&self, state: &WorldState) -> Vec<((Body, Body), f64)> {
        let poses = self.poses(state);
        let caps = self.link_capsules(&poses);
        let (body, handle) = self.object_shapes(&state.object_pose);
        let c = &self.scene.collision;
        let table = HalfSpace { height: c.table_height };
        let floor = HalfSpace { height: c.floor_height };
        let mut out = Vec::new();
        for (b, cap) in &caps {
            out.push(((*b, Body::Object), capsule_shape(cap, &body)));
            if *b != Body::Gripper && *b != Body::Link(HAND_LINK) {
                out.push(((*b, Body::Handle), capsule_shape(cap, &handle)));
            }
            if *b != Body::Link(0) {
                out.push(((*b, Body::Table), capsule_halfspace(cap, &table)));
            }
            out.push(((*b, Body::Floor), capsule_halfspace(cap, &floor)));
        }
        out
    }

    pub fn check_collision(&self, state: &WorldState) -> BTreeSet<(Body, Body)> {
        self.pair_distances(state)
            .into_iter()
            .filter(|(_, d)| *d < 0.0)
            .map(|(p, _)| p)
            .collect()
    }

    /// Capsule-vs-capsule distance between two arm links (not used for termination).
    pub fn link_link_distance(&self, state: &WorldState, a: usize, b: usize) -> f64 {
        let caps = self.link_capsules(&self.poses(state));
        capsule_capsule(&caps[a].1, &caps[b].1)
    }

    pub fn clip_action(&self, action: &Action) -> Action {
        let mut out = *action;
        for (i, v) in out.0.iter_mut().enumerate() {
            let m = self.chain.max_speed(i);
            *v = v.clamp(-m, m);
        }
        out
    }

    pub fn step(&self, state: &mut WorldState, action: &Action) -> Result<StepOutcome> {
        self.step_dt(state, action, self.thresholds().dt)
    }

    /// Integrates one step. All validation happens before `state` is touched.
    pub fn step_dt(&self, state: &mut WorldState, action: &Action, dt: f64) -> Result<StepOutcome> {
        if state.terminal.is_some() {
            return Err(Error::Terminated);
        }
        if action.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("action".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput("dt must be positive".into()));
        }
        let t = self.thresholds().clone();
        let before = self.geometry(state);
        let applied = self.clip_action(action);
        for i in 0..JOINT_COUNT {
            let a = state.joint_state.angles[i] + applied.0[i] * dt;
            state.joint_state.angles[i] = self.chain.clamp_angle(i, a);
        }
        state.joint_state.velocities = applied.0;
        state.step_count += 1;

        let after = self.geometry(state);
        let task = state.active_task;
        let mut events = Vec::new();
        match task {
            TaskId::Task1 => {
                events.push(RewardEvent::new(
                    EventTag::DirectionApproach,
                    (before.alignment - after.alignment).to_degrees(),
                ));
                events.push(RewardEvent::new(
                    EventTag::PositionApproach,
                    (before.ray_distance - after.ray_distance) * 100.0,
                ));
                let align = t.align_deg.to_radians();
                if !state.direction_reached && before.alignment >= align && after.alignment < align {
                    state.direction_reached = true;
                    events.push(RewardEvent::flag(EventTag::ReachedDirection));
                }
            }
            TaskId::Task2 => {
                events.push(RewardEvent::new(
                    EventTag::GraspPointApproach,
                    (before.point_distance - after.point_distance) * 100.0,
                ));
                let violated = |g| self.status_from(g, TaskId::Task2) == TaskStatus::Violated;
                if violated(&after) && !violated(&before) {
                    events.push(RewardEvent::flag(EventTag::MisalignedDuringTask2));
                }
            }
            TaskId::Task3 => {
                if after.point_distance < t.near_distance {
                    let gained = after.closed_fraction - before.closed_fraction;
                    events.push(RewardEvent::new(EventTag::HandClosedAtGraspPoint, gained));
                }
            }
        }

        let mut terminal = None;
        let mut transition = None;
        if !self.check_collision(state).is_empty() {
            events.push(RewardEvent::flag(EventTag::Collision));
            terminal = Some(TerminalCause::Collision);
        } else if self.status_from(&after, task) == TaskStatus::Success {
            events.push(RewardEvent::flag(EventTag::TaskSuccess(task)));
            transition = Some(task);
            match task.next() {
                Some(next) if task < state.final_task => state.active_task = next,
                _ => terminal = Some(TerminalCause::Success),
            }
        } else if after.object_distance > t.drift_distance {
            events.push(RewardEvent::flag(EventTag::DriftAway));
            terminal = Some(TerminalCause::DriftAway);
        }
        if terminal.is_none() && state.step_count >= t.episode_cap {
            events.push(RewardEvent::flag(EventTag::StepLimit));
            terminal = Some(TerminalCause::Timeout);
        }
        state.terminal = terminal;
        Ok(StepOutcome {
            observation: self.observe(state),
            applied,
            events,
            task_transition: transition,
            terminal,
        })
    }
}

#[cfg(test)]
mod tests;
