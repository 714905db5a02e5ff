use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environment::{Environment, Scene};
use crate::kinematics::KinematicChain;
use crate::error::{Error, Result};
use crate::learning::{CascadeConfig, DiscriminatorConfig, PolicyConfig, PpoConfig};
use crate::rewards::{RewardConfig, Weights};

pub const EXPERIMENT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Per-task networks through imitation, blended and optimization phases, then whole motion.
    Cascade,
    /// One network trained on the discriminator reward alone.
    GailOnly,
    /// One network trained on the combined task rewards alone.
    RlOnly,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cascade" => Ok(Mode::Cascade),
            "gail_only" | "gail-only" => Ok(Mode::GailOnly),
            "rl_only" | "rl-only" => Ok(Mode::RlOnly),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Everything a training run depends on. Paths are relative to the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub mode: Mode,
    pub seed: u64,
    /// Environment-step budget, prior-policy steps included.
    pub max_steps: u64,
    pub workers: usize,
    /// Steps collected per training iteration.
    pub batch_steps: u64,
    /// Evaluate every this many iterations (0 = only at the end).
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub checkpoint_every: u64,
    /// Start states for later tasks built once per task by the frozen earlier
    /// networks and reused; 0 reruns the earlier networks for every episode.
    pub start_pool: usize,
    /// Scene file; the built-in toy scene when absent.
    pub scene: Option<PathBuf>,
    /// Chain file; the built-in generic 6R arm when absent.
    pub chain: Option<PathBuf>,
    /// Reward config file; defaults when absent.
    pub rewards: Option<PathBuf>,
    /// Replaces the weights of the reward config when set.
    pub reward_weights: Option<Weights>,
    pub demos: Option<PathBuf>,
    pub policy: PolicyConfig,
    pub ppo: PpoConfig,
    pub discriminator: DiscriminatorConfig,
    pub cascade: CascadeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format_version: EXPERIMENT_FORMAT_VERSION,
            mode: Mode::Cascade,
            seed: 0,
            max_steps: 4_600_000,
            workers: 1,
            batch_steps: 4096,
            eval_every: 0,
            eval_episodes: 100,
            checkpoint_every: 25,
            start_pool: 0,
            scene: None,
            chain: None,
            rewards: None,
            reward_weights: None,
            demos: None,
            policy: PolicyConfig::default(),
            ppo: PpoConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            cascade: CascadeConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale preset: 1x64 recurrent core, 300k-step budget, short plateau window.
    pub fn toy() -> Self {
        Self {
            max_steps: 300_000,
            batch_steps: 2048,
            start_pool: 64,
            reward_weights: Some(Weights::toy()),
            policy: PolicyConfig { init_log_std: -1.6, ..PolicyConfig::toy() },
            ppo: PpoConfig { epochs: 10, minibatch: 64, entropy_coef: 0.001, ..PpoConfig::default() },
            discriminator: DiscriminatorConfig { updates: 5, ..DiscriminatorConfig::default() },
            cascade: CascadeConfig {
                plateau_patience: 5,
                imitation_max_steps: 2_000,
                imitation_rl_max_steps: 2_000,
                optimize_max_steps: 100_000,
                whole_motion_max_steps: 100_000,
                ..CascadeConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != EXPERIMENT_FORMAT_VERSION {
            return Err(Error::Version {
                found: self.format_version,
                expected: EXPERIMENT_FORMAT_VERSION,
            });
        }
        if self.batch_steps == 0 {
            return Err(Error::Config("batch_steps must be positive".into()));
        }
        if self.policy.hidden == 0 || self.policy.layers == 0 {
            return Err(Error::Config("policy needs at least one layer of one unit".into()));
        }
        let p = &self.ppo;
        if !(p.gamma > 0.0 && p.gamma <= 1.0) || !(0.0..=1.0).contains(&p.lambda) {
            return Err(Error::Config("gamma must be in (0, 1], lambda in [0, 1]".into()));
        }
        if p.epochs == 0 || p.minibatch == 0 || p.seq_len == 0 || !(p.learning_rate > 0.0) {
            return Err(Error::Config("ppo epochs, minibatch, seq_len and learning_rate must be positive".into()));
        }
        if !(self.cascade.gail_decay > 0.0 && self.cascade.gail_decay <= 1.0) {
            return Err(Error::Config("gail_decay must be in (0, 1]".into()));
        }
        if self.mode != Mode::RlOnly && self.demos.is_none() {
            return Err(Error::Config(format!("{:?} mode needs demonstrations", self.mode)));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and makes its paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut c.scene, &mut c.chain, &mut c.rewards, &mut c.demos].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("experiment config serializes")
    }

    pub fn load_scene(&self) -> Result<Scene> {
        match &self.scene {
            Some(p) => Scene::load(p),
            None => Ok(Scene::toy()),
        }
    }

    pub fn load_chain(&self) -> Result<KinematicChain> {
        match &self.chain {
            Some(p) => KinematicChain::load(p),
            None => Ok(KinematicChain::generic_6r()),
        }
    }

    pub fn load_rewards(&self) -> Result<RewardConfig> {
        let mut config = match &self.rewards {
            Some(p) => RewardConfig::load(p)?,
            None => RewardConfig::default(),
        };
        if let Some(w) = &self.reward_weights {
            config.weights = w.clone();
            config.validate()?;
        }
        Ok(config)
    }

    pub fn load_env(&self) -> Result<Environment> {
        Environment::new(self.load_chain()?, self.load_scene()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_toy_file_is_the_preset() {
        let text = include_str!("../../../../configs/toy.toml");
        assert_eq!(ExperimentConfig::from_toml_str(text).unwrap(), ExperimentConfig::toy());
    }

    #[test]
    fn inline_weights_replace_file_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rewards.toml");
        let mut file = RewardConfig::default();
        file.weights.collision = -7.0;
        std::fs::write(&path, file.to_toml_string()).unwrap();
        let mut c = ExperimentConfig { rewards: Some(path), ..ExperimentConfig::default() };
        assert_eq!(c.load_rewards().unwrap().weights.collision, -7.0);
        c.reward_weights = Some(Weights::toy());
        let r = c.load_rewards().unwrap();
        assert_eq!(r.weights, Weights::toy());
        assert_eq!(r.schedule, file.schedule);
        c.reward_weights = Some(Weights { step: 1.0, ..Weights::toy() });
        assert!(c.load_rewards().is_err());
    }

    #[test]
    fn partial_file_fills_in_full_size_defaults() {
        let c = ExperimentConfig::from_toml_str("format_version = 1\nmax_steps = 10\n").unwrap();
        assert_eq!(c.max_steps, 10);
        assert_eq!(c.policy, PolicyConfig::default());
        assert!(c.reward_weights.is_none());
    }
}
