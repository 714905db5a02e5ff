//! Library side of the `grasp` binary, split out so integration tests can drive
//! the server and the plotting code in-process.

pub mod commands;
pub mod plot;
pub mod server;

use std::fmt;
use std::path::{Path, PathBuf};

use grasp_cascade::environment::{Environment, Scene};
use grasp_cascade::experiment::ExperimentConfig;
use grasp_cascade::kinematics::KinematicChain;
use grasp_cascade::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
/// Failures that fit none of the documented classes.
pub const EXIT_OTHER: i32 = 1;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn config(e: impl fmt::Display) -> Self {
        Self { code: EXIT_CONFIG, message: e.to_string() }
    }

    pub fn data(e: impl fmt::Display) -> Self {
        Self { code: EXIT_DATA, message: e.to_string() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Scene(_) | Error::Chain(_) | Error::InvalidInput(_) => EXIT_CONFIG,
            Error::Io { .. }
            | Error::Parse(_)
            | Error::Version { .. }
            | Error::HashMismatch { .. }
            | Error::Dimension { .. }
            | Error::Truncated(_)
            | Error::CorruptEpisode { .. }
            | Error::Recorder(_) => EXIT_DATA,
            Error::NonFinite(_) => EXIT_NUMERIC,
            _ => EXIT_OTHER,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::data(e)
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// Loads an experiment config; any failure here is a configuration error.
pub fn load_config(path: Option<&Path>) -> CliResult<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).map_err(Failure::config),
        None => Ok(ExperimentConfig::toy()),
    }
}

/// Environment from explicit scene/chain files, falling back to the config's.
pub fn load_env(config: Option<&Path>, scene: Option<&PathBuf>, chain: Option<&PathBuf>) -> CliResult<Environment> {
    let cfg = load_config(config)?;
    let scene = match scene {
        Some(p) => Scene::load(p).map_err(Failure::config)?,
        None => cfg.load_scene().map_err(Failure::config)?,
    };
    let chain = match chain {
        Some(p) => KinematicChain::load(p).map_err(Failure::config)?,
        None => cfg.load_chain().map_err(Failure::config)?,
    };
    Environment::new(chain, scene).map_err(Failure::config)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Failure::data)?;
    std::fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(Failure::from(Error::Config("x".into())).code, EXIT_CONFIG);
        assert_eq!(Failure::from(Error::Truncated("x".into())).code, EXIT_DATA);
        assert_eq!(
            Failure::from(Error::HashMismatch { what: "scene", found: "a".into(), expected: "b".into() }).code,
            EXIT_DATA
        );
        assert_eq!(Failure::from(Error::NonFinite("x".into())).code, EXIT_NUMERIC);
        assert_eq!(Failure::from(Error::EmptyBatch).code, EXIT_OTHER);
    }
}
