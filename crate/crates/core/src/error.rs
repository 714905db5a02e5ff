use std::path::PathBuf;

use thiserror::Error;

use crate::environment::TaskId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("joint {joint} angle {angle} outside limits [{lower}, {upper}]")]
    JointLimit {
        joint: usize,
        angle: f64,
        lower: f64,
        upper: f64,
    },

    #[error("invalid chain description: {0}")]
    Chain(String),

    #[error("invalid scene description: {0}")]
    Scene(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("episode already terminated; reset required")]
    Terminated,

    #[error("prior policy failed to complete {task:?} within {attempts} attempts")]
    Setup { task: TaskId, attempts: usize },

    #[error("outcome for {got:?} while training {training:?}")]
    WrongTask { training: TaskId, got: TaskId },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("{what} hash mismatch: file has {found}, configuration has {expected}")]
    HashMismatch {
        what: &'static str,
        found: String,
        expected: String,
    },

    #[error("episode {episode} step {step}: {what} has dimension {found}, expected {expected}")]
    Dimension {
        episode: usize,
        step: usize,
        what: &'static str,
        found: usize,
        expected: usize,
    },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("corrupt episode {episode}: {reason}")]
    CorruptEpisode { episode: usize, reason: String },

    #[error("recorder: {0}")]
    Recorder(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
