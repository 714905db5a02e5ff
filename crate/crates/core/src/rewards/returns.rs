use serde::{Deserialize, Serialize};

use crate::environment::TaskId;

/// Reward collected per task segment of an episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskReturn {
    pub sums: [f64; 3],
    pub completed: [bool; 3],
}

impl TaskReturn {
    pub fn add(&mut self, task: TaskId, reward: f64) {
        self.sums[task.index()] += reward;
    }

    pub fn complete(&mut self, task: TaskId) {
        self.completed[task.index()] = true;
    }

    pub fn get(&self, task: TaskId) -> f64 {
        self.sums[task.index()]
    }

    /// Copies in the segments `episode` completed, keeping older values for the rest.
    pub fn update_from(&mut self, episode: &TaskReturn) {
        for t in TaskId::ALL {
            if episode.completed[t.index()] {
                self.sums[t.index()] = episode.sums[t.index()];
                self.completed[t.index()] = true;
            }
        }
    }
}

/// Reward paid when `completed` finishes: the successor task's return, or 0 after
/// the last task.
pub fn next_task_reward(completed: TaskId, returns: &TaskReturn) -> f64 {
    match completed.next() {
        Some(next) if returns.completed[next.index()] => returns.get(next),
        _ => 0.0,
    }
}

/// `sum_t gamma^t r_t`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}
