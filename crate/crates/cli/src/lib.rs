//! Command-line experiment runner for the `slowdrift` library.
//!
//! A run reads a configuration, executes one task, and leaves an output
//! directory with the task's CSV files, a `checks.csv` table of measured
//! quantities with verdicts, and a `manifest.json` listing every file with
//! its SHA-256.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod scenario;

use std::path::Path;

pub use artifacts::{emit_summary, render_summary, Check, Manifest, PipelineOutput, RunArtifacts};
pub use config::{load_config, parse_config, ExperimentConfig, LoadedConfig, PipelineKind};
pub use error::{CliError, Result};
pub use pipeline::{horseshoe_stage, identity_stage, run_task, HorseshoeStage, Task};

/// Runs `task` on a loaded configuration and writes its artifacts to `out`.
pub fn run_experiment(loaded: &LoadedConfig, task: Task, out: &Path) -> Result<RunArtifacts> {
    let started = artifacts::unix_now();
    let output = run_task(task, &loaded.config)?;
    let manifest = Manifest {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        task: task.name().to_string(),
        scenario: loaded.config.scenario.clone(),
        config_source: loaded.source.clone(),
        config_hash: loaded.hash.clone(),
        seed: loaded.config.seed,
        eps: loaded.config.eps.clone(),
        started_unix: started,
        finished_unix: started,
        files: Vec::new(),
    };
    artifacts::write_run(out, &output, manifest)
}
