//! Teleoperation episodes: recording, the line-delimited file format, replay
//! validation and per-task segmentation.

mod file;

pub use file::{load, read, save, DemoWriter, DEMO_FORMAT_VERSION};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::environment::{Controller, Environment, Observation, StepOutcome, TaskId, TerminalCause, WorldState};
use crate::error::{Error, Result};
use crate::rewards::{RewardEvent, RewardSchedule};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoMetadata {
    pub format_version: u32,
    pub recorder: String,
    pub scene_hash: String,
    pub chain_hash: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl DemoMetadata {
    pub fn for_env(env: &Environment, recorder: impl Into<String>, timestamp: u64) -> Self {
        Self {
            format_version: DEMO_FORMAT_VERSION,
            recorder: recorder.into(),
            scene_hash: env.scene.content_hash(),
            chain_hash: env.chain.content_hash(),
            timestamp,
        }
    }

    pub fn check_hashes(&self, env: &Environment) -> Result<()> {
        let scene = env.scene.content_hash();
        if self.scene_hash != scene {
            return Err(Error::HashMismatch {
                what: "scene",
                found: self.scene_hash.clone(),
                expected: scene,
            });
        }
        let chain = env.chain.content_hash();
        if self.chain_hash != chain {
            return Err(Error::HashMismatch {
                what: "chain",
                found: self.chain_hash.clone(),
                expected: chain,
            });
        }
        Ok(())
    }
}

/// How a recorded episode ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpisodeEnd {
    Terminal(TerminalCause),
    /// Recording was stopped by the operator before the simulator terminated.
    Stopped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoStep {
    pub task: TaskId,
    /// Observation before the action.
    pub observation: Vec<f64>,
    /// Joint velocities as applied, after speed clipping.
    pub action: Vec<f64>,
    /// Re-derived by replay; not stored in files.
    #[serde(skip)]
    pub events: Vec<RewardEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub initial_state: WorldState,
    pub steps: Vec<DemoStep>,
    pub end: EpisodeEnd,
    pub final_observation: Vec<f64>,
    /// Completion step (1-based count of steps taken) of each finished task.
    #[serde(skip)]
    pub completions: Vec<(TaskId, usize)>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemonstrationSet {
    pub metadata: DemoMetadata,
    pub episodes: Vec<Episode>,
}

impl DemonstrationSet {
    pub fn total_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }

    pub fn mean_length(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.total_steps() as f64 / self.episodes.len() as f64
    }

    /// `(observation, action)` pairs recorded while `task` was active.
    pub fn pairs_for(&self, task: Option<TaskId>) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.episodes
            .iter()
            .flat_map(|e| e.steps.iter())
            .filter(move |s| task.map_or(true, |t| s.task == t))
            .map(|s| (s.observation.as_slice(), s.action.as_slice()))
    }
}

/// Collects steps into episodes as a session runs.
#[derive(Debug, Default)]
pub struct Recorder {
    pub recorder_id: String,
    current: Option<Episode>,
    finished: Vec<Episode>,
}

impl Recorder {
    pub fn new(recorder_id: impl Into<String>) -> Self {
        Self {
            recorder_id: recorder_id.into(),
            ..Default::default()
        }
    }

    pub fn is_open(&self) -> bool {
        self.current.is_some()
    }

    /// Steps recorded so far in the open episode.
    pub fn open_len(&self) -> usize {
        self.current.as_ref().map_or(0, Episode::len)
    }

    pub fn open(&mut self, initial_state: &WorldState) -> Result<()> {
        if self.current.is_some() {
            return Err(Error::Recorder("episode already open".into()));
        }
        if initial_state.terminal.is_some() {
            return Err(Error::Recorder("cannot record from a terminated state".into()));
        }
        self.current = Some(Episode {
            initial_state: initial_state.clone(),
            steps: Vec::new(),
            end: EpisodeEnd::Stopped,
            final_observation: Vec::new(),
            completions: Vec::new(),
        });
        Ok(())
    }

    /// Appends one step. `observation` and `task` describe the state before the
    /// step; the stored action is `outcome.applied`. A terminal outcome closes the
    /// episode and returns it.
    pub fn record_step(
        &mut self,
        observation: &Observation,
        task: TaskId,
        outcome: &StepOutcome,
    ) -> Result<Option<Episode>> {
        let ep = self
            .current
            .as_mut()
            .ok_or_else(|| Error::Recorder("no open episode".into()))?;
        ep.steps.push(DemoStep {
            task,
            observation: observation.as_slice().to_vec(),
            action: outcome.applied.0.to_vec(),
            events: outcome.events.clone(),
        });
        if let Some(t) = outcome.task_transition {
            ep.completions.push((t, ep.steps.len()));
        }
        ep.final_observation = outcome.observation.as_slice().to_vec();
        match outcome.terminal {
            Some(cause) => {
                ep.end = EpisodeEnd::Terminal(cause);
                let done = self.current.take().expect("checked above");
                self.finished.push(done.clone());
                Ok(Some(done))
            }
            None => Ok(None),
        }
    }

    /// Closes the open episode as stopped by the operator.
    pub fn close(&mut self) -> Result<Episode> {
        let ep = self
            .current
            .take()
            .ok_or_else(|| Error::Recorder("no open episode".into()))?;
        if ep.steps.is_empty() {
            return Err(Error::Recorder("episode has no steps".into()));
        }
        self.finished.push(ep.clone());
        Ok(ep)
    }

    /// Drops the open episode without keeping it.
    pub fn discard(&mut self) {
        self.current = None;
    }

    pub fn take_finished(&mut self) -> Vec<Episode> {
        std::mem::take(&mut self.finished)
    }
}

fn corrupt(episode: usize, reason: impl Into<String>) -> Error {
    Error::CorruptEpisode {
        episode,
        reason: reason.into(),
    }
}

/// Structural checks that need no simulator: dimensions, step count, task order.
pub fn check_structure(index: usize, ep: &Episode) -> Result<()> {
    use crate::environment::{ACTION_DIM, OBS_DIM};
    if ep.steps.is_empty() {
        return Err(corrupt(index, "no steps"));
    }
    for (t, s) in ep.steps.iter().enumerate() {
        for (what, found, expected) in [
            ("observation", s.observation.len(), OBS_DIM),
            ("action", s.action.len(), ACTION_DIM),
        ] {
            if found != expected {
                return Err(Error::Dimension {
                    episode: index,
                    step: t,
                    what,
                    found,
                    expected,
                });
            }
        }
        if s.observation.iter().chain(&s.action).any(|v| !v.is_finite()) {
            return Err(corrupt(index, format!("non-finite value at step {t}")));
        }
    }
    if ep.final_observation.len() != OBS_DIM {
        return Err(Error::Dimension {
            episode: index,
            step: ep.steps.len(),
            what: "final observation",
            found: ep.final_observation.len(),
            expected: OBS_DIM,
        });
    }
    if ep.steps.windows(2).any(|w| w[1].task < w[0].task) {
        return Err(corrupt(index, "task ids decrease"));
    }
    Ok(())
}

/// Replays the recorded actions from the initial state, requiring every
/// observation to match bitwise, and fills in events and task completions.
pub fn replay(env: &Environment, index: usize, ep: &mut Episode) -> Result<()> {
    check_structure(index, ep)?;
    let mut state = ep.initial_state.clone();
    if state.terminal.is_some() {
        return Err(corrupt(index, "initial state is terminal"));
    }
    state.joint_state.validate(&env.chain).map_err(|e| corrupt(index, e.to_string()))?;
    ep.completions.clear();
    let n = ep.steps.len();
    let mut last = None;
    for t in 0..n {
        let obs = env.observe(&state);
        let step = &mut ep.steps[t];
        if obs.as_slice() != step.observation.as_slice() {
            return Err(corrupt(index, format!("observation differs from replay at step {t}")));
        }
        if step.task != state.active_task {
            return Err(corrupt(index, format!("task {:?} recorded at step {t}, replay is in {:?}", step.task, state.active_task)));
        }
        let mut a = [0.0; crate::environment::ACTION_DIM];
        a.copy_from_slice(&step.action);
        let out = env
            .step(&mut state, &crate::environment::Action(a))
            .map_err(|e| corrupt(index, format!("step {t}: {e}")))?;
        if out.applied.0 != a {
            return Err(corrupt(index, format!("action at step {t} exceeds the speed limits")));
        }
        step.events = out.events.clone();
        if let Some(task) = out.task_transition {
            ep.completions.push((task, t + 1));
        }
        if out.terminal.is_some() && t + 1 < n {
            return Err(corrupt(index, format!("simulator terminated at step {t} before the recording ended")));
        }
        last = Some(out);
    }
    let out = last.expect("at least one step");
    if out.observation.as_slice() != ep.final_observation.as_slice() {
        return Err(corrupt(index, "final observation differs from replay"));
    }
    let expected = match out.terminal {
        Some(c) => EpisodeEnd::Terminal(c),
        None => EpisodeEnd::Stopped,
    };
    if expected != ep.end {
        return Err(corrupt(index, format!("recorded end {:?}, replay gives {expected:?}", ep.end)));
    }
    Ok(())
}

/// Validates a whole set against an environment: hashes, then every episode.
pub fn validate(env: &Environment, set: &mut DemonstrationSet) -> Result<()> {
    if set.metadata.format_version != DEMO_FORMAT_VERSION {
        return Err(Error::Version {
            found: set.metadata.format_version,
            expected: DEMO_FORMAT_VERSION,
        });
    }
    set.metadata.check_hashes(env)?;
    for (i, ep) in set.episodes.iter_mut().enumerate() {
        replay(env, i, ep)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSegment {
    pub task: TaskId,
    pub range: Range<usize>,
    /// Sum of the segment's step rewards under the given schedule.
    pub reward_sum: f64,
}

/// Splits an episode into contiguous per-task ranges and scores each.
pub fn segment_by_task(index: usize, ep: &Episode, schedule: &RewardSchedule) -> Result<Vec<TaskSegment>> {
    let mut out: Vec<TaskSegment> = Vec::new();
    for (t, s) in ep.steps.iter().enumerate() {
        let r = schedule.score_events(&s.events, s.task);
        match out.last_mut() {
            Some(seg) if seg.task == s.task => {
                seg.range.end = t + 1;
                seg.reward_sum += r;
            }
            Some(seg) if seg.task > s.task => {
                return Err(corrupt(index, format!("task id decreases at step {t}")));
            }
            _ => out.push(TaskSegment {
                task: s.task,
                range: t..t + 1,
                reward_sum: r,
            }),
        }
    }
    Ok(out)
}

/// Records `count` whole-motion episodes driven by `controller`, one per seed
/// `seed, seed + 1, ...`, keeping only successful ones. Gives up after
/// `4 * count` attempts.
pub fn record_scripted(
    env: &Environment,
    controller: &mut dyn Controller,
    count: usize,
    seed: u64,
    metadata: DemoMetadata,
) -> Result<DemonstrationSet> {
    let mut rec = Recorder::new(metadata.recorder.clone());
    let mut episodes = Vec::new();
    let mut k = 0;
    while episodes.len() < count {
        if k >= 4 * count.max(1) as u64 {
            return Err(Error::Recorder(format!(
                "only {} of {count} scripted episodes succeeded",
                episodes.len()
            )));
        }
        let mut state = env.reset(seed.wrapping_add(k), TaskId::Task1, TaskId::Task3, &mut [])?;
        k += 1;
        controller.begin_episode();
        rec.open(&state)?;
        loop {
            let obs = env.observe(&state);
            let task = state.active_task;
            let action = controller.act(env, &state, &obs);
            let out = env.step(&mut state, &action)?;
            if let Some(ep) = rec.record_step(&obs, task, &out)? {
                if ep.end == EpisodeEnd::Terminal(TerminalCause::Success) {
                    episodes.push(ep);
                }
                break;
            }
        }
        rec.take_finished();
    }
    Ok(DemonstrationSet { metadata, episodes })
}
