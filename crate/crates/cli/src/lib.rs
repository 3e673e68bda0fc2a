//! Experiment runner for negative correlation learning ensembles.
//!
//! Every subcommand reads one TOML config, writes plain CSV artifacts plus
//! a `manifest.json` into the output directory, and derives all randomness
//! from the config seed.

pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
pub use experiments::execute;
pub use manifest::{OutputDir, RunManifest, RunStatus};
