use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REWARD_FORMAT_VERSION: u32 = 1;

/// Event weights. Shaping weights multiply the per-step improvement (degrees or
/// centimeters); the others are paid once per occurrence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    pub direction_approach: f64,
    pub position_approach: f64,
    pub reached_direction: f64,
    pub grasp_point_approach: f64,
    pub misaligned_during_task2: f64,
    pub hand_closed_at_grasp_point: f64,
    pub step_limit: f64,
    pub collision: f64,
    /// Task 2 collision reward once the relaxation step count has passed.
    pub collision_task2_relaxed: f64,
    /// Task 2 collision reward after the first Task 2 success.
    pub collision_task2_after_success: f64,
    pub drift_away: f64,
    pub task1_success: f64,
    pub task2_success: f64,
    pub task3_success: f64,
    /// Per-step reward while optimizing a single task.
    pub step: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            direction_approach: 0.1,
            position_approach: 0.1,
            reached_direction: 10.0,
            grasp_point_approach: 0.1,
            misaligned_during_task2: -1.0,
            hand_closed_at_grasp_point: 1.0,
            step_limit: -10.0,
            collision: -20.0,
            collision_task2_relaxed: -5.0,
            collision_task2_after_success: -20.0,
            drift_away: -10.0,
            task1_success: 20.0,
            task2_success: 20.0,
            task3_success: 100.0,
            step: -0.05,
        }
    }
}

impl Weights {
    /// Toy-profile weights: a stronger pull toward the grasp point and a milder
    /// misalignment penalty, so Task 2 learns inside the 300k-step budget.
    pub fn toy() -> Self {
        Self {
            grasp_point_approach: 3.0,
            misaligned_during_task2: -0.2,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    /// Episodes in the success-rate window.
    pub window: usize,
    /// Success rate that moves a task from imitation to imitation + RL.
    pub p_il: f64,
    /// Success rate that enables the step reward.
    pub p_opt: f64,
    /// Task 2 environment steps after which collisions are punished less.
    pub collision_relax_steps: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            window: 50,
            p_il: 0.3,
            p_opt: 0.8,
            collision_relax_steps: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub format_version: u32,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default)]
    pub schedule: ScheduleConfig,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            format_version: REWARD_FORMAT_VERSION,
            weights: Weights::default(),
            schedule: ScheduleConfig::default(),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != REWARD_FORMAT_VERSION {
            return Err(Error::Version {
                found: self.format_version,
                expected: REWARD_FORMAT_VERSION,
            });
        }
        let s = &self.schedule;
        if s.window == 0 {
            return Err(Error::Config("schedule.window must be positive".into()));
        }
        if !(0.0..=1.0).contains(&s.p_il) || !(0.0..=1.0).contains(&s.p_opt) || s.p_il > s.p_opt {
            return Err(Error::Config("need 0 <= p_il <= p_opt <= 1".into()));
        }
        if !(self.weights.step <= 0.0) {
            return Err(Error::Config("step reward must be non-positive".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: RewardConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("reward config serializes")
    }
}
