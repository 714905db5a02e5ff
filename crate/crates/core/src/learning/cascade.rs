use serde::{Deserialize, Serialize};

use crate::environment::TaskId;
use crate::error::{Error, Result};
use crate::rewards::{Phase, ScheduleConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    pub gail_mix_initial: f64,
    /// Per-iteration factor on the GAIL blend weight and discriminator step size.
    pub gail_decay: f64,
    /// Mean episode length change below which an iteration counts as flat.
    pub plateau_eps: f64,
    /// Consecutive flat iterations that end a phase.
    pub plateau_patience: usize,
    /// Step caps per phase; reaching one forces the transition the success rate
    /// would otherwise trigger. 0 disables the cap.
    pub imitation_max_steps: u64,
    pub imitation_rl_max_steps: u64,
    pub optimize_max_steps: u64,
    pub whole_motion_max_steps: u64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            gail_mix_initial: 1.0,
            gail_decay: 0.95,
            plateau_eps: 2.0,
            plateau_patience: 50,
            imitation_max_steps: 0,
            imitation_rl_max_steps: 0,
            optimize_max_steps: 0,
            whole_motion_max_steps: 0,
        }
    }
}

/// Counts consecutive iterations whose mean episode length moved less than `eps`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlateauDetector {
    pub last: Option<f64>,
    pub flat: usize,
}

impl PlateauDetector {
    /// Feeds one value; true once `patience` consecutive changes were below `eps`.
    pub fn push(&mut self, value: f64, eps: f64, patience: usize) -> bool {
        if let Some(prev) = self.last {
            if (value - prev).abs() < eps {
                self.flat += 1;
            } else {
                self.flat = 0;
            }
        }
        self.last = Some(value);
        self.flat >= patience
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeState {
    pub training_task: TaskId,
    pub phases: [Phase; 3],
    pub frozen: [bool; 3],
    pub gail_mix: f64,
    /// Multiplier on the discriminator learning rate.
    pub disc_lr_scale: f64,
    pub iteration: u64,
    pub env_steps: u64,
    pub phase_steps: u64,
    pub plateau: PlateauDetector,
    pub done: bool,
}

impl CascadeState {
    pub fn new(cfg: &CascadeConfig) -> Self {
        Self {
            training_task: TaskId::Task1,
            phases: [Phase::Imitation; 3],
            frozen: [false; 3],
            gail_mix: cfg.gail_mix_initial,
            disc_lr_scale: 1.0,
            iteration: 0,
            env_steps: 0,
            phase_steps: 0,
            plateau: PlateauDetector::default(),
            done: false,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phases[self.training_task.index()]
    }

    pub fn next_task_reward_enabled(&self) -> bool {
        self.phase() == Phase::WholeMotion
    }

    /// Whether `task`'s network receives updates this iteration.
    pub fn trains(&self, task: TaskId) -> bool {
        !self.done
            && !self.frozen[task.index()]
            && (self.phase() == Phase::WholeMotion || task == self.training_task)
    }
}

/// Results of one training iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeMetrics {
    pub success_rate: [f64; 3],
    pub mean_episode_length: f64,
    pub env_steps: u64,
    /// The reward schedule's phase for the training task.
    pub schedule_phase: Phase,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CascadeEvent {
    Phase { task: TaskId, from: Phase, to: Phase },
    Advance { from: TaskId, to: TaskId },
    WholeMotion,
    Done,
}

/// Applies one iteration's metrics. At most one phase change per call.
pub fn cascade_step(
    state: &CascadeState,
    metrics: &CascadeMetrics,
    cfg: &CascadeConfig,
    thresholds: &ScheduleConfig,
) -> Result<(CascadeState, Vec<CascadeEvent>)> {
    if metrics.success_rate.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::InvalidInput(format!("success rates {:?}", metrics.success_rate)));
    }
    if !(metrics.mean_episode_length >= 0.0 && metrics.mean_episode_length.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "mean episode length {}",
            metrics.mean_episode_length
        )));
    }
    let mut s = state.clone();
    let mut events = Vec::new();
    if s.done {
        return Ok((s, events));
    }
    s.iteration += 1;
    s.env_steps += metrics.env_steps;
    s.phase_steps += metrics.env_steps;
    let task = s.training_task;
    let rate = metrics.success_rate[task.index()];
    let capped = |cap: u64, steps: u64| cap > 0 && steps >= cap;

    let set_phase = |s: &mut CascadeState, to: Phase, events: &mut Vec<CascadeEvent>| {
        let from = s.phases[task.index()];
        s.phases[task.index()] = to;
        s.phase_steps = 0;
        s.plateau.reset();
        events.push(CascadeEvent::Phase { task, from, to });
    };

    match s.phase() {
        Phase::Imitation => {
            if rate >= thresholds.p_il || capped(cfg.imitation_max_steps, s.phase_steps) {
                set_phase(&mut s, Phase::ImitationPlusRL, &mut events);
            }
        }
        Phase::ImitationPlusRL => {
            s.gail_mix *= cfg.gail_decay;
            s.disc_lr_scale *= cfg.gail_decay;
            if rate >= thresholds.p_opt
                || metrics.schedule_phase >= Phase::RLOptimize
                || capped(cfg.imitation_rl_max_steps, s.phase_steps)
            {
                set_phase(&mut s, Phase::RLOptimize, &mut events);
            }
        }
        Phase::RLOptimize => {
            // a task pushed here by a step cap must still reach p_opt before its plateau counts
            let flat = s
                .plateau
                .push(metrics.mean_episode_length, cfg.plateau_eps, cfg.plateau_patience)
                && rate >= thresholds.p_opt;
            if flat || capped(cfg.optimize_max_steps, s.phase_steps) {
                s.frozen[task.index()] = true;
                match task.next() {
                    Some(next) => {
                        s.training_task = next;
                        s.phase_steps = 0;
                        s.plateau.reset();
                        s.gail_mix = cfg.gail_mix_initial;
                        s.disc_lr_scale = 1.0;
                        events.push(CascadeEvent::Advance { from: task, to: next });
                    }
                    None => {
                        for t in TaskId::ALL {
                            let from = s.phases[t.index()];
                            s.phases[t.index()] = Phase::WholeMotion;
                            events.push(CascadeEvent::Phase { task: t, from, to: Phase::WholeMotion });
                        }
                        s.frozen = [false; 3];
                        s.phase_steps = 0;
                        s.plateau.reset();
                        events.push(CascadeEvent::WholeMotion);
                    }
                }
            }
        }
        Phase::WholeMotion => {
            let flat = s
                .plateau
                .push(metrics.mean_episode_length, cfg.plateau_eps, cfg.plateau_patience);
            if flat || capped(cfg.whole_motion_max_steps, s.phase_steps) {
                s.done = true;
                s.frozen = [true; 3];
                events.push(CascadeEvent::Done);
            }
        }
    }
    Ok((s, events))
}

/// Reward the training network sees for one step.
pub fn blended_reward(env_reward: f64, gail_r: f64, phase: Phase, gail_mix: f64) -> f64 {
    match phase {
        Phase::Imitation => gail_r,
        Phase::ImitationPlusRL => gail_mix * gail_r + env_reward,
        Phase::RLOptimize | Phase::WholeMotion => env_reward,
    }
}
