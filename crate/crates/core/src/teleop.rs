//! Teleoperation sessions and their wire protocol. Transport-free: a server
//! feeds decoded envelopes into [`Session::handle_message`] and calls
//! [`Session::tick`] at the session rate.

use serde::{Deserialize, Serialize};

use crate::demonstrations::{Episode, Recorder};
use crate::environment::{Action, Environment, TaskId, TaskStatus, TerminalCause, WorldState};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::kinematics::{ik_step, IkConfig, ARM_JOINTS, EE_INDEX, GRIPPER_INDEX};

pub const PROTOCOL_VERSION: u32 = 1;

/// Accepted deviation of a commanded quaternion from unit norm.
const QUAT_TOL: f64 = 1e-3;

/// One message on the socket. `seq` strictly increases per direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    pub seq: u64,
    #[serde(flatten)]
    pub msg: WireMessage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body")]
pub enum WireMessage {
    Hello(Hello),
    StateUpdate(Box<StateUpdate>),
    /// Pose target for the hand; orientation is `(w, x, y, z)`.
    SetTarget { position: [f64; 3], orientation: [f64; 4] },
    /// Open fraction, 1 fully open. Clamped to `[0, 1]`.
    SetGripper { open: f64 },
    RecordStart,
    RecordStop,
    /// Re-samples the scene; without a seed the session's next seed is used.
    Reset { seed: Option<u64> },
    Error { reason: String, in_reply_to: Option<u64> },
    Ack { in_reply_to: u64, note: Option<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub protocol: u32,
    pub session_id: u64,
    pub tick_hz: f64,
    pub scene_hash: String,
    pub chain_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub step: u32,
    pub joint_angles: Vec<f64>,
    /// Forward-kinematics poses (joints, gripper joint, end-effector) as position + wxyz.
    pub poses: Vec<[f64; 7]>,
    pub object_pose: [f64; 7],
    pub grasp_point: [f64; 3],
    pub grasp_direction: [f64; 3],
    pub target: [f64; 7],
    pub gripper_open: f64,
    pub active_task: TaskId,
    pub task_status: [TaskStatus; 3],
    /// Color of the hand-direction line.
    pub indication: Indication,
    pub terminal: Option<TerminalCause>,
    pub recording: bool,
    pub recorded_steps: usize,
    /// True until the first command arrives; the arm does not move meanwhile.
    pub frozen: bool,
    pub world: WorldState,
}

/// Hand-line color: gray until aligned, then red (aligned), yellow (at the grasp
/// point), green (grasped).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Indication {
    Gray,
    Red,
    Yellow,
    Green,
}

impl Indication {
    pub fn from_status(status: &[TaskStatus; 3]) -> Self {
        match status {
            [_, _, TaskStatus::Success] => Indication::Green,
            [_, TaskStatus::Success, _] => Indication::Yellow,
            [TaskStatus::Success, _, _] => Indication::Red,
            _ => Indication::Gray,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub tick_hz: f64,
    pub ik: IkConfig,
    /// Seed of the first scene; each reset without an explicit seed takes the next.
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            tick_hz: 30.0,
            ik: IkConfig {
                max_linear: 0.01,
                max_angular: 0.03,
                ..IkConfig::default()
            },
            seed: 0,
        }
    }
}

pub struct Session {
    pub id: u64,
    pub env: Environment,
    pub config: SessionConfig,
    pub state: WorldState,
    pub target: Pose,
    pub gripper_open: f64,
    pub recorder: Recorder,
    commanded: bool,
    next_seed: u64,
    last_seq_in: Option<u64>,
    seq_out: u64,
}

impl Session {
    pub fn new(id: u64, env: Environment, config: SessionConfig) -> Result<Self> {
        if !(config.tick_hz > 0.0 && config.tick_hz.is_finite()) {
            return Err(Error::Config("tick rate must be positive".into()));
        }
        let state = env.reset(config.seed, TaskId::Task1, TaskId::Task3, &mut [])?;
        let target = env.poses(&state)[EE_INDEX];
        Ok(Self {
            id,
            next_seed: config.seed.wrapping_add(1),
            env,
            config,
            state,
            target,
            gripper_open: 1.0,
            recorder: Recorder::new(format!("teleop-{id}")),
            commanded: false,
            last_seq_in: None,
            seq_out: 0,
        })
    }

    fn wrap(&mut self, msg: WireMessage) -> Envelope {
        self.seq_out += 1;
        Envelope {
            v: PROTOCOL_VERSION,
            seq: self.seq_out,
            msg,
        }
    }

    pub fn hello(&mut self) -> Envelope {
        let hello = Hello {
            protocol: PROTOCOL_VERSION,
            session_id: self.id,
            tick_hz: self.config.tick_hz,
            scene_hash: self.env.scene.content_hash(),
            chain_hash: self.env.chain.content_hash(),
        };
        self.wrap(WireMessage::Hello(hello))
    }

    pub fn error(&mut self, reason: impl Into<String>, in_reply_to: Option<u64>) -> Envelope {
        self.wrap(WireMessage::Error {
            reason: reason.into(),
            in_reply_to,
        })
    }

    /// Decodes one text frame and handles it. Undecodable frames get an Error reply.
    pub fn handle_text(&mut self, text: &str) -> Option<Envelope> {
        match serde_json::from_str::<Envelope>(text) {
            Ok(env) => self.handle_message(env),
            Err(e) => Some(self.error(format!("malformed message: {e}"), None)),
        }
    }

    pub fn handle_message(&mut self, envelope: Envelope) -> Option<Envelope> {
        let seq = envelope.seq;
        if envelope.v != PROTOCOL_VERSION {
            return Some(self.error(format!("unsupported protocol version {}", envelope.v), Some(seq)));
        }
        if self.last_seq_in.is_some_and(|last| seq <= last) {
            return Some(self.error("out-of-order sequence number", Some(seq)));
        }
        self.last_seq_in = Some(seq);
        match self.apply(envelope.msg) {
            Ok(note) => Some(self.wrap(WireMessage::Ack { in_reply_to: seq, note })),
            Err(reason) => Some(self.error(reason, Some(seq))),
        }
    }

    fn apply(&mut self, msg: WireMessage) -> std::result::Result<Option<String>, String> {
        let terminated = self.state.terminal.is_some();
        match msg {
            WireMessage::Hello(_) => Ok(None),
            WireMessage::SetTarget { position, orientation } => {
                let pose = Pose::from_wxyz(position, orientation, QUAT_TOL).ok_or_else(|| {
                    if position.iter().any(|v| !v.is_finite()) {
                        "invalid position".to_string()
                    } else {
                        "invalid orientation".to_string()
                    }
                })?;
                if terminated {
                    return Err("episode terminated; reset required".into());
                }
                self.target = pose;
                self.commanded = true;
                Ok(None)
            }
            WireMessage::SetGripper { open } => {
                if !open.is_finite() {
                    return Err("invalid gripper command".into());
                }
                if terminated {
                    return Err("episode terminated; reset required".into());
                }
                let clamped = open.clamp(0.0, 1.0);
                self.gripper_open = clamped;
                self.commanded = true;
                Ok((clamped != open).then(|| format!("clamped to {clamped}")))
            }
            WireMessage::RecordStart => {
                self.recorder.open(&self.state).map_err(|e| e.to_string())?;
                Ok(None)
            }
            WireMessage::RecordStop => {
                let ep = self.recorder.close().map_err(|e| e.to_string())?;
                Ok(Some(format!("recorded {} steps", ep.len())))
            }
            WireMessage::Reset { seed } => {
                let seed = seed.unwrap_or_else(|| {
                    let s = self.next_seed;
                    self.next_seed = s.wrapping_add(1);
                    s
                });
                let state = self
                    .env
                    .reset(seed, TaskId::Task1, TaskId::Task3, &mut [])
                    .map_err(|e| e.to_string())?;
                self.recorder.discard();
                self.target = self.env.poses(&state)[EE_INDEX];
                self.state = state;
                self.gripper_open = 1.0;
                self.commanded = false;
                Ok(Some(format!("scene seed {seed}")))
            }
            WireMessage::StateUpdate(_) | WireMessage::Error { .. } | WireMessage::Ack { .. } => {
                Err("message type not accepted from clients".into())
            }
        }
    }

    /// The action one tick applies: an IK step toward the target and a gripper move
    /// toward the commanded opening.
    pub fn command_action(&self) -> Result<Action> {
        let dt = self.env.thresholds().dt;
        let delta = ik_step(&self.env.chain, &self.state.joint_state, &self.target, &self.config.ik)?;
        let mut a = [0.0; 7];
        for i in 0..ARM_JOINTS {
            a[i] = delta[i] / dt;
        }
        let goal = self.env.chain.gripper.angle_for_open_fraction(self.gripper_open);
        a[GRIPPER_INDEX] = (goal - self.state.joint_state.angles[GRIPPER_INDEX]) / dt;
        Ok(Action(a))
    }

    /// Advances the session by one simulator step unless it is frozen or terminated.
    pub fn tick(&mut self) -> Result<Envelope> {
        if self.commanded && self.state.terminal.is_none() {
            let action = self.command_action()?;
            let obs = self.env.observe(&self.state);
            let task = self.state.active_task;
            let out = self.env.step(&mut self.state, &action)?;
            if self.recorder.is_open() {
                self.recorder.record_step(&obs, task, &out)?;
            }
        }
        let update = self.state_update();
        Ok(self.wrap(WireMessage::StateUpdate(Box::new(update))))
    }

    pub fn state_update(&self) -> StateUpdate {
        let poses = self.env.poses(&self.state);
        let task_status = TaskId::ALL.map(|t| self.env.task_predicate(&self.state, t));
        let dir = self.state.grasp_direction.into_inner();
        StateUpdate {
            step: self.state.step_count,
            joint_angles: self.state.joint_state.angles.to_vec(),
            poses: poses.iter().map(Pose::to_array).collect(),
            object_pose: self.state.object_pose.to_array(),
            grasp_point: self.state.grasp_point.into(),
            grasp_direction: dir.into(),
            target: self.target.to_array(),
            gripper_open: self.gripper_open,
            active_task: self.state.active_task,
            task_status,
            indication: Indication::from_status(&task_status),
            terminal: self.state.terminal,
            recording: self.recorder.is_open(),
            recorded_steps: self.recorder.open_len(),
            frozen: !self.commanded,
            world: self.state.clone(),
        }
    }

    /// Episodes closed since the last call, by RecordStop or by a terminal step.
    pub fn take_episodes(&mut self) -> Vec<Episode> {
        self.recorder.take_finished()
    }
}

/// Client-side operator that steers the target along the grasp ray with the
/// scripted solver's targets, then closes the gripper at the grasp point.
#[derive(Clone, Debug)]
pub struct ScriptedOperator {
    pub solver: crate::solver::ScriptedSolver,
}

impl Default for ScriptedOperator {
    fn default() -> Self {
        Self {
            solver: crate::solver::ScriptedSolver::teleoperator(),
        }
    }
}

impl ScriptedOperator {
    pub fn commands(&self, env: &Environment, update: &StateUpdate) -> Vec<WireMessage> {
        if update.terminal.is_some() {
            return vec![];
        }
        let target = self.solver.target_pose(env, &update.world);
        let mut out = vec![WireMessage::SetTarget {
            position: target.position.into(),
            orientation: target.wxyz(),
        }];
        if update.active_task == TaskId::Task3 {
            out.push(WireMessage::SetGripper { open: 0.0 });
        }
        out
    }
}
