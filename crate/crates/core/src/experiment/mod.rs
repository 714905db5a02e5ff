//! Experiment configuration, the training loop for each mode, evaluation,
//! checkpoints and the metrics log.

mod config;
mod eval;
mod metrics;
mod run;
mod trainer;

pub use config::{ExperimentConfig, Mode, EXPERIMENT_FORMAT_VERSION};
pub use eval::{evaluate, evaluate_controller, AgentController, EvalReport};
pub use metrics::{bin_metrics, parse_metrics, Bin, MetricsRecord};
pub use run::{cmd_eval, cmd_train, RunReport};
pub use trainer::{Checkpoint, Trainer, CHECKPOINT_FORMAT_VERSION};
