//! Browser demo. `Playground` and `explore_gae` are plain Rust so native tests
//! cover them; the wasm exports in `bindings` only move JSON across the boundary.

use grasp_cascade::environment::{Environment, Scene};
use grasp_cascade::kinematics::KinematicChain;
use grasp_cascade::learning::gae::gae;
use grasp_cascade::teleop::{Envelope, ScriptedOperator, Session, SessionConfig, StateUpdate, WireMessage, PROTOCOL_VERSION};
use serde::Serialize;

#[cfg(target_arch = "wasm32")]
mod bindings;

/// An in-page teleoperation session on the toy scene, driven through the same
/// messages a websocket client would send.
pub struct Playground {
    session: Session,
    operator: ScriptedOperator,
    seq: u64,
}

impl Playground {
    pub fn new(seed: u64) -> Result<Self, String> {
        let env = Environment::new(KinematicChain::generic_6r(), Scene::toy()).map_err(|e| e.to_string())?;
        let config = SessionConfig { seed, ..SessionConfig::default() };
        let session = Session::new(0, env, config).map_err(|e| e.to_string())?;
        Ok(Self { session, operator: ScriptedOperator::default(), seq: 0 })
    }

    fn send(&mut self, msg: WireMessage) -> Result<(), String> {
        self.seq += 1;
        let reply = self.session.handle_message(Envelope { v: PROTOCOL_VERSION, seq: self.seq, msg });
        match reply.map(|e| e.msg) {
            Some(WireMessage::Error { reason, .. }) => Err(reason),
            _ => Ok(()),
        }
    }

    /// Moves the IK target to `position`, keeping its orientation.
    pub fn drag(&mut self, position: [f64; 3]) -> Result<(), String> {
        let orientation = self.session.target.wxyz();
        self.send(WireMessage::SetTarget { position, orientation })
    }

    pub fn set_target(&mut self, position: [f64; 3], orientation: [f64; 4]) -> Result<(), String> {
        self.send(WireMessage::SetTarget { position, orientation })
    }

    pub fn set_gripper(&mut self, open: f64) -> Result<(), String> {
        self.send(WireMessage::SetGripper { open })
    }

    pub fn reset(&mut self, seed: Option<u64>) -> Result<(), String> {
        self.send(WireMessage::Reset { seed })
    }

    /// Lets the scripted operator issue this tick's commands.
    pub fn autopilot(&mut self) -> Result<(), String> {
        let update = self.session.state_update();
        for m in self.operator.commands(&self.session.env, &update) {
            self.send(m)?;
        }
        Ok(())
    }

    /// Runs `ticks` simulator steps and returns the resulting state.
    pub fn advance(&mut self, ticks: u32) -> Result<StateUpdate, String> {
        for _ in 0..ticks {
            self.session.tick().map_err(|e| e.to_string())?;
        }
        Ok(self.session.state_update())
    }

    pub fn state(&self) -> StateUpdate {
        self.session.state_update()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaeTable {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// One-step TD errors, for comparison with the smoothed advantages.
    pub deltas: Vec<f64>,
}

/// GAE over one or more episodes; `dones` must close the last one.
pub fn explore_gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<GaeTable, String> {
    let adv = gae(rewards, values, dones, gamma, lambda).map_err(|e| e.to_string())?;
    let deltas = (0..rewards.len())
        .map(|t| {
            let next = if dones[t] { 0.0 } else { values[t + 1] };
            rewards[t] + gamma * next - values[t]
        })
        .collect();
    Ok(GaeTable { advantages: adv.advantages, returns: adv.returns, deltas })
}
