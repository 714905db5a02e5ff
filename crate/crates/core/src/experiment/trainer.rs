use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Mode};
use super::eval::{evaluate, EvalReport};
use super::metrics::MetricsRecord;
use crate::demonstrations::DemonstrationSet;
use crate::environment::{Environment, TaskId, TerminalCause, ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::learning::gail::concat;
use crate::learning::{
    blended_reward, build_start_pool, cascade_step, collect_from, derive_seed, discriminator_update, gae, gail_reward, policy_update, Adam,
    Agent, CascadeEvent, CascadeMetrics, CascadeState, Discriminator, EpisodeRecord, Normalizer, PolicyNetwork,
    PpoDiagnostics, RolloutSpec, Sequence, StartPool,
};
use crate::rewards::{next_task_reward, EpisodeOutcome, Phase, RewardConfig, RewardSchedule, ScheduleChange, TaskReturn};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Smallest feature scale used when fitting input normalizers.
const MIN_FEATURE_STD: f64 = 0.01;

/// All mutable training state. Random streams derive from `(seed, iteration)`, so
/// this is enough to resume a run exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub scene_hash: String,
    pub chain_hash: String,
    pub iteration: u64,
    pub env_steps: u64,
    pub cascade: CascadeState,
    pub schedule: RewardSchedule,
    pub agent: Agent,
    pub policy_opts: Vec<Adam>,
    pub discs: Vec<Discriminator>,
    pub disc_opts: Vec<Adam>,
    /// Last known per-task reward sums, for the next-task reward.
    pub returns: TaskReturn,
    pub normalizer_fitted: bool,
    pub start_pool: StartPool,
    pub finished: bool,
}

impl Checkpoint {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if c.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Version {
                found: c.format_version,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        Ok(c)
    }

    pub fn check_env(&self, env: &Environment) -> Result<()> {
        for (what, found, expected) in [
            ("scene", &self.scene_hash, env.scene.content_hash()),
            ("chain", &self.chain_hash, env.chain.content_hash()),
        ] {
            if *found != expected {
                return Err(Error::HashMismatch {
                    what,
                    found: found.clone(),
                    expected,
                });
            }
        }
        Ok(())
    }
}

pub struct Trainer {
    pub config: ExperimentConfig,
    pub env: Environment,
    pub state: Checkpoint,
    /// Concatenated `(observation, action)` demonstration inputs per discriminator.
    demo_inputs: Vec<Vec<Vec<f64>>>,
}

struct Scored {
    rewards: Vec<f64>,
    env_return: f64,
    train_return: f64,
    sums: TaskReturn,
}

fn clamp_unit(u: &[f64]) -> Vec<f64> {
    u.iter().map(|v| v.clamp(-1.0, 1.0)).collect()
}

impl Trainer {
    pub fn new(
        config: ExperimentConfig,
        env: Environment,
        rewards: RewardConfig,
        demos: Option<&DemonstrationSet>,
    ) -> Result<Self> {
        config.validate()?;
        rewards.validate()?;
        if config.mode != Mode::RlOnly && demos.map_or(true, |d| d.episodes.is_empty()) {
            return Err(Error::Config(format!("{:?} mode needs demonstrations", config.mode)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0, 0));
        let scale: Vec<f64> = (0..ACTION_DIM).map(|i| env.chain.max_speed(i)).collect();
        let n_nets = if config.mode == Mode::Cascade { 3 } else { 1 };
        let mut nets: Vec<PolicyNetwork> = (0..n_nets)
            .map(|_| PolicyNetwork::new(OBS_DIM, ACTION_DIM, config.policy.clone(), &mut rng))
            .collect();
        let mut normalizer_fitted = false;
        if let Some(d) = demos {
            let n = Normalizer::fit(OBS_DIM, d.pairs_for(None).map(|(o, _)| o), MIN_FEATURE_STD);
            nets.iter_mut().for_each(|net| net.normalizer = n.clone());
            normalizer_fitted = true;
        }
        let agent = Agent { nets, action_scale: scale };
        let disc_tasks: Vec<Option<TaskId>> = match config.mode {
            Mode::Cascade => TaskId::ALL.iter().map(|t| Some(*t)).collect(),
            Mode::GailOnly => vec![None],
            Mode::RlOnly => vec![],
        };
        let mut demo_inputs = Vec::new();
        let mut discs = Vec::new();
        for task in disc_tasks {
            let d = demos.expect("checked above");
            let inputs: Vec<Vec<f64>> = d
                .pairs_for(task)
                .map(|(o, a)| concat(o, &clamp_unit(&agent.to_policy_action(a))))
                .collect();
            let mut disc = Discriminator::new(OBS_DIM, ACTION_DIM, config.discriminator.hidden, &mut rng);
            disc.normalizer = Normalizer::fit(OBS_DIM + ACTION_DIM, inputs.iter().map(|v| v.as_slice()), MIN_FEATURE_STD);
            discs.push(disc);
            demo_inputs.push(inputs);
        }
        let state = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            mode: config.mode,
            seed: config.seed,
            scene_hash: env.scene.content_hash(),
            chain_hash: env.chain.content_hash(),
            iteration: 0,
            env_steps: 0,
            cascade: CascadeState::new(&config.cascade),
            schedule: RewardSchedule::new(rewards),
            policy_opts: agent
                .nets
                .iter()
                .map(|n| Adam::new(n.params.len(), config.ppo.learning_rate))
                .collect(),
            disc_opts: discs
                .iter()
                .map(|d| Adam::new(d.params.len(), config.discriminator.learning_rate))
                .collect(),
            discs,
            agent,
            returns: TaskReturn::default(),
            normalizer_fitted,
            start_pool: StartPool::default(),
            finished: false,
        };
        Ok(Self {
            config,
            env,
            state,
            demo_inputs,
        })
    }

    /// Continues from a checkpoint taken with the same configuration and demonstrations.
    pub fn resume(
        config: ExperimentConfig,
        env: Environment,
        demos: Option<&DemonstrationSet>,
        checkpoint: Checkpoint,
    ) -> Result<Self> {
        checkpoint.check_env(&env)?;
        if checkpoint.mode != config.mode || checkpoint.seed != config.seed {
            return Err(Error::Config("checkpoint was written by a different mode or seed".into()));
        }
        let mut t = Self::new(config, env, checkpoint.schedule.config.clone(), demos)?;
        t.state = checkpoint;
        Ok(t)
    }

    pub fn finished(&self) -> bool {
        self.state.finished
    }

    fn uses_gail(&self, phase: Phase) -> bool {
        match self.config.mode {
            Mode::Cascade => matches!(phase, Phase::Imitation | Phase::ImitationPlusRL),
            Mode::GailOnly => true,
            Mode::RlOnly => false,
        }
    }

    fn disc_index(&self, task: TaskId) -> usize {
        if self.state.discs.len() == 1 {
            0
        } else {
            task.index()
        }
    }

    fn score(&self, ep: &EpisodeRecord) -> Scored {
        let s = &self.state;
        let whole = s.cascade.phase() == Phase::WholeMotion;
        let mut out = Scored {
            rewards: Vec::with_capacity(ep.steps.len()),
            env_return: 0.0,
            train_return: 0.0,
            sums: TaskReturn::default(),
        };
        for (t, step) in ep.steps.iter().enumerate() {
            let env_r = s.schedule.score_events(&step.events, step.task);
            out.sums.add(step.task, env_r);
            out.env_return += env_r;
            let phase = s.cascade.phases[step.task.index()];
            let gail_r = if self.uses_gail(phase) {
                let d = &s.discs[self.disc_index(step.task)];
                gail_reward(d, &step.observation, &clamp_unit(&step.action), self.config.discriminator.reward_ceiling)
            } else {
                0.0
            };
            let r = match self.config.mode {
                Mode::Cascade => {
                    let completed_here = ep.completions.iter().any(|&(task, n)| task == step.task && n == t + 1);
                    let r_next = if whole && completed_here {
                        next_task_reward(step.task, &s.returns)
                    } else {
                        0.0
                    };
                    blended_reward(env_r + r_next, gail_r, phase, s.cascade.gail_mix)
                }
                Mode::GailOnly => gail_r,
                Mode::RlOnly => env_r,
            };
            out.train_return += r;
            out.rewards.push(r);
        }
        for (task, _) in &ep.completions {
            out.sums.complete(*task);
        }
        out
    }

    fn trains(&self, net: usize) -> bool {
        match self.config.mode {
            Mode::Cascade => self.state.cascade.trains(TaskId::from_index(net).expect("three networks")),
            _ => true,
        }
    }

    /// Cuts each network's stretch of every episode into training sequences.
    fn sequences(&self, episodes: &[EpisodeRecord], scored: &[Scored]) -> Result<Vec<Vec<Sequence>>> {
        let cfg = &self.config.ppo;
        // The imitation reward is positive, so finishing the task or running out of
        // time would look like a loss while it is in use; those ends are treated as
        // cut-offs then. Collisions and drift stay terminal.
        let bootstrap = self.uses_gail(self.state.cascade.phase());
        let mut out: Vec<Vec<Sequence>> = vec![Vec::new(); self.state.agent.nets.len()];
        for (ep, sc) in episodes.iter().zip(scored) {
            let mut start = 0;
            while start < ep.steps.len() {
                let net = ep.steps[start].net;
                let mut end = start + 1;
                while end < ep.steps.len() && ep.steps[end].net == net {
                    end += 1;
                }
                if self.trains(net) {
                    let steps = &ep.steps[start..end];
                    let values: Vec<f64> = steps.iter().map(|s| s.value).collect();
                    let mut dones = vec![false; steps.len()];
                    dones[steps.len() - 1] = true;
                    let mut rewards = sc.rewards[start..end].to_vec();
                    let cut_off = end < ep.steps.len()
                        || matches!(ep.terminal, TerminalCause::Success | TerminalCause::Timeout);
                    if bootstrap && cut_off {
                        *rewards.last_mut().expect("non-empty run") += cfg.gamma * values[values.len() - 1];
                    }
                    let adv = gae(&rewards, &values, &dones, cfg.gamma, cfg.lambda)?;
                    for c in (0..steps.len()).step_by(cfg.seq_len) {
                        let e = (c + cfg.seq_len).min(steps.len());
                        out[net].push(Sequence {
                            observations: steps[c..e].iter().map(|s| s.observation.clone()).collect(),
                            actions: steps[c..e].iter().map(|s| s.action.clone()).collect(),
                            old_log_probs: steps[c..e].iter().map(|s| s.log_prob).collect(),
                            advantages: adv.advantages[c..e].to_vec(),
                            returns: adv.returns[c..e].to_vec(),
                            h0: steps[c].hidden.clone(),
                        });
                    }
                }
                start = end;
            }
        }
        Ok(out)
    }

    /// Fits the policy input normalizer from a first batch and recomputes that
    /// batch's log-probabilities and values under it.
    fn fit_normalizer(&mut self, episodes: &mut [EpisodeRecord]) {
        let n = Normalizer::fit(
            OBS_DIM,
            episodes.iter().flat_map(|e| e.steps.iter().map(|s| s.observation.as_slice())),
            MIN_FEATURE_STD,
        );
        for net in &mut self.state.agent.nets {
            net.normalizer = n.clone();
        }
        for ep in episodes.iter_mut() {
            let mut start = 0;
            while start < ep.steps.len() {
                let net_i = ep.steps[start].net;
                let mut end = start + 1;
                while end < ep.steps.len() && ep.steps[end].net == net_i {
                    end += 1;
                }
                let net = &self.state.agent.nets[net_i];
                let obs: Vec<Vec<f64>> = ep.steps[start..end].iter().map(|s| s.observation.clone()).collect();
                let mut h = net.initial_hidden();
                for (k, s) in ep.steps[start..end].iter_mut().enumerate() {
                    s.hidden = h.clone();
                    let out = net.step(&obs[k], &mut h);
                    s.log_prob = crate::learning::policy::log_prob(&out.mean, &out.log_std, &s.action);
                    s.value = out.value;
                }
                start = end;
            }
        }
        self.state.normalizer_fitted = true;
    }

    /// Runs one iteration. Returns `None` once the run has finished.
    pub fn iterate(&mut self) -> Result<Option<MetricsRecord>> {
        if self.state.finished {
            return Ok(None);
        }
        let remaining = self.config.max_steps.saturating_sub(self.state.env_steps);
        if remaining == 0 {
            self.state.finished = true;
            return Ok(None);
        }
        let it = self.state.iteration;
        let seed = self.config.seed;
        let phase = self.state.cascade.phase();
        let task = self.state.cascade.training_task;
        let (start_task, final_task) = if self.config.mode == Mode::Cascade && phase != Phase::WholeMotion {
            (task, task)
        } else {
            (TaskId::Task1, TaskId::Task3)
        };
        let spec = RolloutSpec {
            start_task,
            final_task,
            min_steps: self.config.batch_steps.min(remaining),
            budget: remaining,
            deterministic: false,
            seed,
            iteration: it,
        };
        let mut pool_events = Vec::new();
        let use_pool = self.config.start_pool > 0 && start_task != TaskId::Task1;
        if use_pool && self.state.start_pool.task != Some(start_task) {
            let pool = build_start_pool(
                &self.env,
                &self.state.agent,
                start_task,
                self.config.start_pool,
                derive_seed(seed, it, 3000),
                remaining,
            )?;
            self.state.env_steps += pool.env_steps;
            pool_events.push(format!(
                "start pool for {start_task:?}: {} states, {} steps, {} scripted",
                pool.states.len(),
                pool.env_steps,
                pool.scripted
            ));
            self.state.start_pool = pool;
        }
        let remaining = self.config.max_steps.saturating_sub(self.state.env_steps);
        if remaining == 0 || (use_pool && self.state.start_pool.states.is_empty()) {
            self.state.finished = true;
            return Ok(None);
        }
        let spec = RolloutSpec {
            min_steps: spec.min_steps.min(remaining),
            budget: remaining,
            ..spec
        };
        let starts: &[crate::environment::WorldState] = if use_pool { &self.state.start_pool.states } else { &[] };
        let rollout = collect_from(&self.env, &self.state.agent, &spec, starts, self.config.workers)?;
        self.state.env_steps += rollout.env_steps;
        let mut episodes = rollout.episodes;
        if episodes.is_empty() {
            self.state.finished = true;
            return Ok(None);
        }
        if !self.state.normalizer_fitted {
            self.fit_normalizer(&mut episodes);
        }

        let scored: Vec<Scored> = episodes.iter().map(|e| self.score(e)).collect();
        for sc in &scored {
            self.state.returns.update_from(&sc.sums);
        }

        let mut diag = PpoDiagnostics::default();
        let seqs = self.sequences(&episodes, &scored)?;
        for (i, s) in seqs.into_iter().enumerate() {
            if s.is_empty() {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, it, 1000 + i as u64));
            let net = &mut self.state.agent.nets[i];
            diag = policy_update(net, &mut self.state.policy_opts[i], s, &self.config.ppo, &mut rng)?;
        }

        let mut record = MetricsRecord {
            iteration: it,
            gail_mix: self.state.cascade.gail_mix,
            events: pool_events,
            ..Default::default()
        };
        let train_task = (self.config.mode == Mode::Cascade && phase != Phase::WholeMotion).then_some(task);
        if self.uses_gail(phase) {
            let d = train_task.map_or(0, |t| self.disc_index(t));
            let policy_inputs: Vec<Vec<f64>> = episodes
                .iter()
                .flat_map(|e| e.steps.iter())
                .filter(|s| train_task.map_or(true, |t| s.task == t))
                .map(|s| concat(&s.observation, &clamp_unit(&s.action)))
                .collect();
            if !policy_inputs.is_empty() {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, it, 2000));
                let opt = &mut self.state.disc_opts[d];
                opt.lr = self.config.discriminator.learning_rate
                    * if self.config.mode == Mode::Cascade { self.state.cascade.disc_lr_scale } else { 1.0 };
                let dd = discriminator_update(
                    &mut self.state.discs[d],
                    opt,
                    &self.demo_inputs[d],
                    &policy_inputs,
                    &self.config.discriminator,
                    &mut rng,
                )?;
                record.disc_loss = Some(dd.loss_after);
                record.disc_accuracy = Some(dd.accuracy);
            }
        }

        // episode statistics for the task being trained (or the whole motion)
        let n = episodes.len() as f64;
        let seg_len = |e: &EpisodeRecord| match train_task {
            Some(t) => e.steps.iter().filter(|s| s.task == t).count(),
            None => e.steps.len(),
        };
        let goal = train_task.unwrap_or(TaskId::Task3);
        let successes = episodes.iter().filter(|e| e.completed(goal)).count();
        record.env_steps = self.state.env_steps;
        record.task = train_task;
        record.phase = (self.config.mode == Mode::Cascade).then_some(phase);
        record.episodes = episodes.len();
        record.mean_return = scored.iter().map(|s| s.train_return).sum::<f64>() / n;
        record.mean_env_return = scored.iter().map(|s| s.env_return).sum::<f64>() / n;
        record.mean_episode_length = episodes.iter().map(|e| seg_len(e) as f64).sum::<f64>() / n;
        record.success_rate = successes as f64 / n;
        for s in episodes.iter().flat_map(|e| e.steps.iter()) {
            for ev in &s.events {
                *record.event_means.entry(format!("{:?}", ev.tag)).or_insert(0.0) += ev.magnitude / n;
            }
        }
        record.scripted_priors = episodes.iter().filter(|e| e.scripted_prior).count();
        record.policy_loss = diag.loss.policy;
        record.value_loss = diag.loss.value;
        record.entropy = diag.loss.entropy;
        record.approx_kl = diag.loss.approx_kl;
        record.clip_fraction = diag.loss.clip_fraction;

        if let Some(t) = train_task {
            for e in &episodes {
                let outcome = EpisodeOutcome {
                    task: t,
                    success: e.completed(t),
                    steps: seg_len(e) as u32,
                };
                for ch in self.state.schedule.advance_schedule(&outcome)? {
                    record.events.push(match ch {
                        ScheduleChange::Phase { task, from, to } => format!("schedule {task:?} {from:?} -> {to:?}"),
                        ScheduleChange::Collision { from, to } => format!("collision reward {from:?} -> {to:?}"),
                    });
                }
            }
            record.window_success_rate = self.state.schedule.success_rate(t);
        } else {
            record.window_success_rate = record.success_rate;
        }

        if self.config.mode == Mode::Cascade {
            let mut rates = [0.0; 3];
            for t in TaskId::ALL {
                rates[t.index()] = match train_task {
                    Some(tt) if tt == t => self.state.schedule.success_rate(t),
                    _ => episodes.iter().filter(|e| e.completed(t)).count() as f64 / n,
                };
            }
            let metrics = CascadeMetrics {
                success_rate: rates,
                mean_episode_length: record.mean_episode_length,
                env_steps: rollout.env_steps,
                schedule_phase: self.state.schedule.phase(task),
            };
            let (next, events) = cascade_step(
                &self.state.cascade,
                &metrics,
                &self.config.cascade,
                &self.state.schedule.config.schedule,
            )?;
            self.state.cascade = next;
            for ev in events {
                match ev {
                    CascadeEvent::Phase { task, to, .. } if to != Phase::WholeMotion => {
                        self.state.schedule.promote(task, to);
                    }
                    CascadeEvent::Advance { to, .. } => self.state.schedule.set_training_task(to),
                    CascadeEvent::WholeMotion => self.state.schedule.enter_whole_motion(),
                    CascadeEvent::Done => self.state.finished = true,
                    _ => {}
                }
                record.events.push(format!("{ev:?}"));
            }
        }

        self.state.iteration += 1;
        let every = self.config.eval_every;
        if every > 0 && self.state.iteration % every == 0 {
            let r = self.evaluate(self.config.eval_episodes)?;
            record.eval_success = Some(r.success_rate);
            record.eval_length = Some(r.mean_length);
        }
        if self.state.env_steps >= self.config.max_steps {
            self.state.finished = true;
        }
        Ok(Some(record))
    }

    /// Deterministic whole-motion evaluation of the current networks.
    pub fn evaluate(&self, episodes: usize) -> Result<EvalReport> {
        let mut sched = RewardSchedule::new(self.state.schedule.config.clone());
        sched.enter_whole_motion();
        evaluate(&self.env, &self.state.agent, episodes, self.config.seed, &sched)
    }
}
