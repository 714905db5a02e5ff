use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::{log_prob, Hidden, PolicyNetwork};
use crate::environment::{
    Action, Controller, Environment, Observation, TaskId, TerminalCause, WorldState, ACTION_DIM,
};
use crate::error::Result;
use crate::rewards::RewardEvent;
use crate::solver::ScriptedSolver;

/// Derives an independent seed from a base seed and two counters.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(base);
    r.set_stream(a);
    r.set_word_pos(u128::from(b) * 2);
    r.next_u64()
}

/// The trained networks: one per task, or one shared by all tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub nets: Vec<PolicyNetwork>,
    /// Joint speed limits; network outputs are in units of these.
    pub action_scale: Vec<f64>,
}

impl Agent {
    pub fn net_index(&self, task: TaskId) -> usize {
        if self.nets.len() == 1 {
            0
        } else {
            task.index()
        }
    }

    pub fn per_task(&self) -> bool {
        self.nets.len() > 1
    }

    pub fn to_env_action(&self, u: &[f64]) -> Action {
        let mut a = [0.0; ACTION_DIM];
        for i in 0..ACTION_DIM {
            a[i] = u[i] * self.action_scale[i];
        }
        Action(a)
    }

    pub fn to_policy_action(&self, a: &[f64]) -> Vec<f64> {
        a.iter().zip(&self.action_scale).map(|(v, s)| v / s).collect()
    }
}

/// Drives the arm with one network's mean action.
pub struct NetController<'a> {
    pub agent: &'a Agent,
    pub net: usize,
    hidden: Option<Hidden>,
}

impl<'a> NetController<'a> {
    pub fn new(agent: &'a Agent, net: usize) -> Self {
        Self { agent, net, hidden: None }
    }
}

impl Controller for NetController<'_> {
    fn begin_episode(&mut self) {
        self.hidden = None;
    }

    fn act(&mut self, _env: &Environment, _state: &WorldState, obs: &Observation) -> Action {
        let net = &self.agent.nets[self.net];
        let h = self.hidden.get_or_insert_with(|| net.initial_hidden());
        let out = net.step(obs.as_slice(), h);
        self.agent.to_env_action(&out.mean)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub task: TaskId,
    pub net: usize,
    pub observation: Vec<f64>,
    /// Sampled action in network units.
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    pub events: Vec<RewardEvent>,
    /// Recurrent state before this step.
    pub hidden: Hidden,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub start_task: TaskId,
    pub steps: Vec<StepRecord>,
    pub terminal: TerminalCause,
    /// `(task, number of steps taken when it completed)`.
    pub completions: Vec<(TaskId, usize)>,
    /// Steps spent by prior controllers to reach the start task.
    pub prior_steps: u64,
    /// The network priors failed and the scripted solver set the episode up.
    pub scripted_prior: bool,
}

impl EpisodeRecord {
    pub fn completed(&self, task: TaskId) -> bool {
        self.completions.iter().any(|(t, _)| *t == task)
    }

    pub fn env_steps(&self) -> u64 {
        self.prior_steps + self.steps.len() as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutSpec {
    pub start_task: TaskId,
    pub final_task: TaskId,
    /// Keep starting episodes until this many steps are collected.
    pub min_steps: u64,
    /// Hard limit on environment steps, priors included.
    pub budget: u64,
    pub deterministic: bool,
    pub seed: u64,
    pub iteration: u64,
}

enum Run {
    Finished(EpisodeRecord),
    OutOfBudget(u64),
}

/// Runs `ctrl` on `state` until its task completes. Returns whether it did and the
/// steps used, stopping early at `budget`.
fn run_prior(
    env: &Environment,
    state: &mut WorldState,
    ctrl: &mut dyn Controller,
    budget: u64,
) -> Result<(bool, u64, bool)> {
    ctrl.begin_episode();
    let mut used = 0;
    loop {
        if used >= budget {
            return Ok((false, used, true));
        }
        let obs = env.observe(state);
        let a = ctrl.act(env, state, &obs);
        let out = env.step(state, &a)?;
        used += 1;
        match out.terminal {
            Some(TerminalCause::Success) => return Ok((true, used, false)),
            Some(_) => return Ok((false, used, false)),
            None => {}
        }
    }
}

/// Brings a fresh scene up to `start` with the agent's frozen networks, falling
/// back to the scripted solver when they fail every attempt.
fn prepare(
    env: &Environment,
    agent: &Agent,
    spec: &RolloutSpec,
    seed: u64,
    budget: u64,
) -> Result<Option<(WorldState, u64, bool)>> {
    let mut used = 0;
    let attempts = env.thresholds().reset_retries.max(1) as u64;
    for scripted in [false, true] {
        for k in 0..attempts {
            let s = derive_seed(seed, u64::from(scripted), k);
            let mut state = env.reset(s, TaskId::Task1, spec.final_task, &mut [])?;
            let mut ok = true;
            for t in 0..spec.start_task.index() {
                let task = TaskId::from_index(t).expect("below start task");
                state.active_task = task;
                state.final_task = task;
                state.step_count = 0;
                state.terminal = None;
                let (done, n, out_of_budget) = if scripted {
                    run_prior(env, &mut state, &mut ScriptedSolver::default(), budget - used)?
                } else {
                    let mut c = NetController::new(agent, agent.net_index(task));
                    run_prior(env, &mut state, &mut c, budget - used)?
                };
                used += n;
                if out_of_budget {
                    return Ok(None);
                }
                if !done {
                    ok = false;
                    break;
                }
            }
            if ok {
                state.active_task = spec.start_task;
                state.final_task = spec.final_task;
                state.step_count = 0;
                state.terminal = None;
                return Ok(Some((state, used, scripted)));
            }
        }
    }
    Err(crate::error::Error::Setup {
        task: spec.start_task,
        attempts: 2 * attempts as usize,
    })
}

/// Initial states for `start_task`, built once by the frozen earlier networks and
/// reused while they stay frozen.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StartPool {
    pub task: Option<TaskId>,
    pub states: Vec<WorldState>,
    /// Environment steps spent building the pool.
    pub env_steps: u64,
    /// States the scripted solver had to set up.
    pub scripted: usize,
}

/// Builds up to `n` start states for `start_task`. Stops early when `budget` runs out.
pub fn build_start_pool(
    env: &Environment,
    agent: &Agent,
    start_task: TaskId,
    n: usize,
    seed: u64,
    budget: u64,
) -> Result<StartPool> {
    let spec = RolloutSpec {
        start_task,
        final_task: start_task,
        min_steps: 0,
        budget,
        deterministic: true,
        seed,
        iteration: 0,
    };
    let mut pool = StartPool {
        task: Some(start_task),
        ..StartPool::default()
    };
    for k in 0..n as u64 {
        match prepare(env, agent, &spec, derive_seed(seed, 0, k), budget - pool.env_steps)? {
            Some((state, used, scripted)) => {
                pool.env_steps += used;
                pool.scripted += usize::from(scripted);
                pool.states.push(state);
            }
            None => {
                pool.env_steps = budget;
                break;
            }
        }
    }
    Ok(pool)
}

fn run_episode(
    env: &Environment,
    agent: &Agent,
    spec: &RolloutSpec,
    starts: &[WorldState],
    k: u64,
    budget: u64,
) -> Result<Run> {
    let seed = derive_seed(spec.seed, spec.iteration, k);
    let (mut state, prior_steps, scripted_prior) = if !starts.is_empty() {
        let mut s = starts[(seed % starts.len() as u64) as usize].clone();
        s.final_task = spec.final_task;
        (s, 0, false)
    } else if spec.start_task == TaskId::Task1 {
        (env.reset(seed, TaskId::Task1, spec.final_task, &mut [])?, 0, false)
    } else {
        match prepare(env, agent, spec, seed, budget)? {
            Some(p) => p,
            None => return Ok(Run::OutOfBudget(budget)),
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 7, 0));
    let mut hidden: Vec<Option<Hidden>> = vec![None; agent.nets.len()];
    let mut steps = Vec::new();
    let mut completions = Vec::new();
    loop {
        if prior_steps + steps.len() as u64 >= budget {
            return Ok(Run::OutOfBudget(prior_steps + steps.len() as u64));
        }
        let task = state.active_task;
        let n = agent.net_index(task);
        let net = &agent.nets[n];
        let h = hidden[n].get_or_insert_with(|| net.initial_hidden());
        let before = h.clone();
        let obs = env.observe(&state);
        let out = net.step(obs.as_slice(), h);
        let u = if spec.deterministic {
            out.mean.clone()
        } else {
            net.sample(&out, &mut rng)
        };
        let lp = log_prob(&out.mean, &out.log_std, &u);
        let res = env.step(&mut state, &agent.to_env_action(&u))?;
        steps.push(StepRecord {
            task,
            net: n,
            observation: obs.as_slice().to_vec(),
            action: u,
            log_prob: lp,
            value: out.value,
            events: res.events,
            hidden: before,
        });
        if let Some(t) = res.task_transition {
            completions.push((t, steps.len()));
            // a network's state does not carry over into another task's segment
            if agent.per_task() {
                hidden[n] = None;
            }
        }
        if let Some(terminal) = res.terminal {
            return Ok(Run::Finished(EpisodeRecord {
                seed,
                start_task: spec.start_task,
                steps,
                terminal,
                completions,
                prior_steps,
                scripted_prior,
            }));
        }
    }
}

/// Result of one collection round.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rollout {
    pub episodes: Vec<EpisodeRecord>,
    /// All environment steps taken, including priors and cut-off episodes.
    pub env_steps: u64,
}

#[allow(clippy::too_many_arguments)]
fn collect_worker(
    env: &Environment,
    agent: &Agent,
    spec: &RolloutSpec,
    starts: &[WorldState],
    first: u64,
    stride: u64,
    min_steps: u64,
    budget: u64,
) -> Result<(Vec<(u64, EpisodeRecord)>, u64)> {
    let mut out = Vec::new();
    let mut used = 0;
    let mut collected = 0;
    let mut k = first;
    while collected < min_steps && used < budget {
        match run_episode(env, agent, spec, starts, k, budget - used)? {
            Run::Finished(ep) => {
                used += ep.env_steps();
                collected += ep.env_steps();
                out.push((k, ep));
            }
            Run::OutOfBudget(n) => {
                used += n;
                break;
            }
        }
        k += stride;
    }
    Ok((out, used))
}

/// Collects episodes with `workers` threads. Each worker owns a share of the step
/// target and budget and a disjoint set of episode seeds.
pub fn collect(env: &Environment, agent: &Agent, spec: &RolloutSpec, workers: usize) -> Result<Rollout> {
    collect_from(env, agent, spec, &[], workers)
}

/// Like [`collect`], but episodes start from states drawn from `starts` when it is
/// non-empty instead of running the earlier tasks' networks.
pub fn collect_from(
    env: &Environment,
    agent: &Agent,
    spec: &RolloutSpec,
    starts: &[WorldState],
    workers: usize,
) -> Result<Rollout> {
    let workers = workers.max(1) as u64;
    if workers == 1 {
        let (eps, used) = collect_worker(env, agent, spec, starts, 0, 1, spec.min_steps, spec.budget)?;
        return Ok(Rollout {
            episodes: eps.into_iter().map(|(_, e)| e).collect(),
            env_steps: used,
        });
    }
    let share = |total: u64, w: u64| total / workers + u64::from(w < total % workers);
    let results: Vec<Result<(Vec<(u64, EpisodeRecord)>, u64)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (min, budget) = (share(spec.min_steps, w), share(spec.budget, w));
                s.spawn(move || collect_worker(env, agent, spec, starts, w, workers, min, budget))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("rollout worker panicked")).collect()
    });
    let mut all = Vec::new();
    let mut used = 0;
    for r in results {
        let (eps, n) = r?;
        all.extend(eps);
        used += n;
    }
    all.sort_by_key(|(k, _)| *k);
    Ok(Rollout {
        episodes: all.into_iter().map(|(_, e)| e).collect(),
        env_steps: used,
    })
}
