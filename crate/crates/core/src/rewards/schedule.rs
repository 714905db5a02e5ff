use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::config::RewardConfig;
use super::events::{EventTag, RewardEvent};
use crate::environment::TaskId;
use crate::error::{Error, Result};

/// Training phase of one task, in the order they are entered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Imitation,
    ImitationPlusRL,
    RLOptimize,
    WholeMotion,
}

impl Phase {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Where the Task 2 collision reward stands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CollisionStage {
    Initial,
    Relaxed,
    AfterSuccess,
}

/// How one training episode of the training task ended.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub task: TaskId,
    pub success: bool,
    pub steps: u32,
}

/// Something [`RewardSchedule::advance_schedule`] changed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScheduleChange {
    Phase { task: TaskId, from: Phase, to: Phase },
    Collision { from: CollisionStage, to: CollisionStage },
}

/// Per-task phases plus the bookkeeping that moves them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSchedule {
    pub config: RewardConfig,
    pub training_task: TaskId,
    phases: [Phase; 3],
    windows: [VecDeque<bool>; 3],
    task2_steps: u64,
    collision_stage: CollisionStage,
}

impl RewardSchedule {
    pub fn new(config: RewardConfig) -> Self {
        Self {
            config,
            training_task: TaskId::Task1,
            phases: [Phase::Imitation; 3],
            windows: Default::default(),
            task2_steps: 0,
            collision_stage: CollisionStage::Initial,
        }
    }

    pub fn phase(&self, task: TaskId) -> Phase {
        self.phases[task.index()]
    }

    pub fn collision_stage(&self) -> CollisionStage {
        self.collision_stage
    }

    /// Success rate over the window; slots not yet filled count as failures.
    pub fn success_rate(&self, task: TaskId) -> f64 {
        let w = &self.windows[task.index()];
        w.iter().filter(|s| **s).count() as f64 / self.config.schedule.window as f64
    }

    /// Moves `task` forward to `phase`. Requests to go backwards are ignored.
    pub fn promote(&mut self, task: TaskId, phase: Phase) -> Option<ScheduleChange> {
        let cur = self.phases[task.index()];
        if phase > cur {
            self.phases[task.index()] = phase;
            Some(ScheduleChange::Phase { task, from: cur, to: phase })
        } else {
            None
        }
    }

    pub fn set_training_task(&mut self, task: TaskId) {
        self.training_task = task;
    }

    pub fn enter_whole_motion(&mut self) {
        for t in TaskId::ALL {
            self.promote(t, Phase::WholeMotion);
        }
    }

    /// Records one episode of the training task and fires any transition whose
    /// condition now holds for the first time.
    pub fn advance_schedule(&mut self, outcome: &EpisodeOutcome) -> Result<Vec<ScheduleChange>> {
        if outcome.task != self.training_task {
            return Err(Error::WrongTask {
                training: self.training_task,
                got: outcome.task,
            });
        }
        let cfg = self.config.schedule.clone();
        let i = outcome.task.index();
        let w = &mut self.windows[i];
        w.push_back(outcome.success);
        while w.len() > cfg.window {
            w.pop_front();
        }
        let mut changes = Vec::new();

        if outcome.task == TaskId::Task2 {
            self.task2_steps += u64::from(outcome.steps);
            let from = self.collision_stage;
            if outcome.success && from != CollisionStage::AfterSuccess {
                self.collision_stage = CollisionStage::AfterSuccess;
            } else if from == CollisionStage::Initial && self.task2_steps >= cfg.collision_relax_steps {
                self.collision_stage = CollisionStage::Relaxed;
            }
            if self.collision_stage != from {
                changes.push(ScheduleChange::Collision {
                    from,
                    to: self.collision_stage,
                });
            }
        }

        if self.phases[i] == Phase::ImitationPlusRL && self.success_rate(outcome.task) >= cfg.p_opt {
            changes.extend(self.promote(outcome.task, Phase::RLOptimize));
        }
        Ok(changes)
    }

    pub fn weight(&self, task: TaskId, tag: EventTag) -> f64 {
        let w = &self.config.weights;
        match tag {
            EventTag::DirectionApproach => w.direction_approach,
            EventTag::PositionApproach => w.position_approach,
            EventTag::ReachedDirection => w.reached_direction,
            EventTag::GraspPointApproach => w.grasp_point_approach,
            EventTag::MisalignedDuringTask2 => w.misaligned_during_task2,
            EventTag::HandClosedAtGraspPoint => w.hand_closed_at_grasp_point,
            EventTag::StepLimit => w.step_limit,
            EventTag::Collision => match (task, self.collision_stage) {
                (TaskId::Task2, CollisionStage::Relaxed) => w.collision_task2_relaxed,
                (TaskId::Task2, CollisionStage::AfterSuccess) => w.collision_task2_after_success,
                _ => w.collision,
            },
            EventTag::DriftAway => w.drift_away,
            EventTag::TaskSuccess(TaskId::Task1) => w.task1_success,
            EventTag::TaskSuccess(TaskId::Task2) => w.task2_success,
            EventTag::TaskSuccess(TaskId::Task3) => w.task3_success,
        }
    }

    /// Step reward active for `task` in its current phase.
    pub fn step_reward(&self, task: TaskId) -> f64 {
        if self.phase(task) == Phase::RLOptimize {
            self.config.weights.step
        } else {
            0.0
        }
    }

    /// Environment reward for one step of `task`.
    pub fn score_events(&self, events: &[RewardEvent], task: TaskId) -> f64 {
        events
            .iter()
            .map(|e| self.weight(task, e.tag) * e.magnitude)
            .sum::<f64>()
            + self.step_reward(task)
    }
}
