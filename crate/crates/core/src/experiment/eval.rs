use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::environment::{Action, Controller, Environment, Observation, TaskId, TerminalCause, WorldState};
use crate::error::Result;
use crate::learning::{derive_seed, Agent, NetController};
use crate::rewards::RewardSchedule;

/// Seed stream reserved for evaluation episodes.
const EVAL_STREAM: u64 = u64::MAX;

/// Whole-motion controller that hands each task to its network's mean action.
pub struct AgentController<'a> {
    nets: Vec<NetController<'a>>,
    agent: &'a Agent,
}

impl<'a> AgentController<'a> {
    pub fn new(agent: &'a Agent) -> Self {
        Self {
            nets: (0..agent.nets.len()).map(|i| NetController::new(agent, i)).collect(),
            agent,
        }
    }
}

impl Controller for AgentController<'_> {
    fn begin_episode(&mut self) {
        self.nets.iter_mut().for_each(|n| n.begin_episode());
    }

    fn act(&mut self, env: &Environment, state: &WorldState, obs: &Observation) -> Action {
        let i = self.agent.net_index(state.active_task);
        self.nets[i].act(env, state, obs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub seed: u64,
    /// Fraction of episodes that completed each task.
    pub success_rate: [f64; 3],
    pub mean_length: f64,
    /// Mean length of the episodes that completed Task 3.
    pub mean_success_length: Option<f64>,
    pub mean_return: f64,
    pub terminals: BTreeMap<String, usize>,
}

/// Runs `n` whole-motion episodes with held-out seeds. Returns are scored with
/// `schedule` as given.
pub fn evaluate_controller(
    env: &Environment,
    ctrl: &mut dyn Controller,
    n: usize,
    seed: u64,
    schedule: &RewardSchedule,
) -> Result<EvalReport> {
    let mut done = [0usize; 3];
    let mut total_len = 0u64;
    let mut success_len = 0u64;
    let mut ret = 0.0;
    let mut terminals = BTreeMap::new();
    for k in 0..n as u64 {
        let mut state = env.reset(derive_seed(seed, EVAL_STREAM, k), TaskId::Task1, TaskId::Task3, &mut [])?;
        ctrl.begin_episode();
        let cause = loop {
            let obs = env.observe(&state);
            let task = state.active_task;
            let a = ctrl.act(env, &state, &obs);
            let out = env.step(&mut state, &a)?;
            ret += schedule.score_events(&out.events, task);
            if let Some(t) = out.task_transition {
                done[t.index()] += 1;
            }
            if let Some(c) = out.terminal {
                break c;
            }
        };
        total_len += u64::from(state.step_count);
        if cause == TerminalCause::Success {
            success_len += u64::from(state.step_count);
        }
        *terminals.entry(format!("{cause:?}")).or_insert(0) += 1;
    }
    let denom = n.max(1) as f64;
    Ok(EvalReport {
        episodes: n,
        seed,
        success_rate: done.map(|d| d as f64 / denom),
        mean_length: total_len as f64 / denom,
        mean_success_length: (done[2] > 0).then(|| success_len as f64 / done[2] as f64),
        mean_return: ret / denom,
        terminals,
    })
}

pub fn evaluate(env: &Environment, agent: &Agent, n: usize, seed: u64, schedule: &RewardSchedule) -> Result<EvalReport> {
    evaluate_controller(env, &mut AgentController::new(agent), n, seed, schedule)
}
