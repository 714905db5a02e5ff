//! Event weights, the adaptive phase schedule, and task-segment returns.

mod config;
mod events;
mod returns;
mod schedule;
mod trace;

pub use config::{RewardConfig, ScheduleConfig, Weights, REWARD_FORMAT_VERSION};
pub use events::{EventTag, RewardEvent};
pub use returns::{discounted_return, next_task_reward, TaskReturn};
pub use schedule::{CollisionStage, EpisodeOutcome, Phase, RewardSchedule, ScheduleChange};
pub use trace::{TraceRecord, TraceWriter};
