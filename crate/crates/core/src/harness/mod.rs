//! Reproducible experiment surface: configuration, execution, persistent
//! outputs with manifests, report merging, and the command-line front end.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod manifest;
pub mod report;
pub mod selftest;

pub use cli::run_cli;
pub use config::{Experiment, ExperimentConfig};
pub use experiment::execute;
pub use manifest::{RunManifest, RunStatus};

/// Environment variable naming the default output directory.
pub const ENV_OUT_DIR: &str = "LOOPSIM_OUT_DIR";
/// Environment variable giving the worker-pool size.
pub const ENV_WORKERS: &str = "LOOPSIM_WORKERS";

/// Formats a float for CSV output with 17 significant digits, enough to
/// round-trip every `f64` exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}
