//! Training harness, evaluator, and trace analyzer for the step-aware
//! group-relative policy optimization pipeline in `stepgrpo-core`.
//!
//! Everything stateful lives here: the flat-text config format, plain-text
//! checkpoints, JSON Lines traces and metrics, the training and evaluation
//! loops, and the analytics behind the `analyze` CLI subcommands.

pub mod analyzer;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod report;
pub mod trace;
pub mod trainer;

pub use config::TrainConfig;
pub use error::{HarnessError, Result};
