pub mod error;
pub mod geometry;
pub mod kinematics;

pub use error::{Error, Result};
pub mod environment;
pub mod collision;
pub mod rewards;
pub mod solver;
pub mod demonstrations;
pub mod learning;
pub mod experiment;
pub mod teleop;
