//! Reward engine, RL environment, reasoning-dataset builder and benchmark
//! harness for multi-task log analysis.

pub mod error;
pub mod format;
pub mod metrics;
pub mod model;
pub mod reward;

pub use error::{Error, Result, TransportError};
pub mod bench;
pub mod cli;
pub mod env;
pub mod forge;
pub mod policy;
