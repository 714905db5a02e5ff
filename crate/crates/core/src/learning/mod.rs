//! Recurrent actor-critic networks, GAE, PPO, the GAIL discriminator and the
//! task cascade that sequences them.

pub mod cascade;
pub mod gae;
pub mod gail;
pub mod nn;
pub mod policy;
pub mod ppo;
pub mod rollout;

pub use cascade::{
    blended_reward, cascade_step, CascadeConfig, CascadeEvent, CascadeMetrics, CascadeState, PlateauDetector,
};
pub use gae::{compute_gae, gae, Advantages, TrajectoryBatch, Transition};
pub use gail::{
    bce_loss, discriminator_update, gail_reward, gail_reward_from_logit, Discriminator, DiscriminatorConfig,
    DiscriminatorDiagnostics,
};
pub use nn::Adam;
pub use policy::{Hidden, Normalizer, PolicyConfig, PolicyNetwork, PolicyOutput};
pub use ppo::{policy_update, ppo_loss, LossParts, PpoConfig, PpoDiagnostics, Sequence};
pub use rollout::{
    build_start_pool, collect, collect_from, derive_seed, Agent, StartPool, EpisodeRecord, NetController, Rollout, RolloutSpec, StepRecord,
};
