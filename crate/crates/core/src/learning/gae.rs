use serde::{Deserialize, Serialize};

use crate::environment::TaskId;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    /// Last step of an episode (or of a network's segment of one).
    pub done: bool,
    pub task: TaskId,
}

/// Consecutive transitions; an episode ends at every `done` step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBatch {
    pub steps: Vec<Transition>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Advantages {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Generalized advantage estimates and value targets from raw slices. The value
/// after a `done` step is taken as 0.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<Advantages> {
    if rewards.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if values.len() != rewards.len() || dones.len() != rewards.len() {
        return Err(Error::InvalidInput("reward, value and done lengths differ".into()));
    }
    if !(gamma > 0.0 && gamma <= 1.0) || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!("gamma {gamma} / lambda {lambda} out of range")));
    }
    if !dones[dones.len() - 1] {
        return Err(Error::InvalidInput("batch must end at an episode boundary".into()));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = 0.0;
    for t in (0..n).rev() {
        if dones[t] {
            next_adv = 0.0;
            next_value = 0.0;
        }
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok(Advantages { advantages: adv, returns })
}

pub fn compute_gae(batch: &TrajectoryBatch, gamma: f64, lambda: f64) -> Result<Advantages> {
    let r: Vec<f64> = batch.steps.iter().map(|s| s.reward).collect();
    let v: Vec<f64> = batch.steps.iter().map(|s| s.value).collect();
    let d: Vec<bool> = batch.steps.iter().map(|s| s.done).collect();
    gae(&r, &v, &d, gamma, lambda)
}
