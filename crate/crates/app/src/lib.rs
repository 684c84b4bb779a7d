//! Configuration, pipeline drivers and output writers behind the `ldg-plates` binary.

pub mod check;
pub mod config;
pub mod error;
pub mod expr;
pub mod output;
pub mod pipeline;
pub mod study;

pub use config::RunConfig;
pub use error::{AppError, AppResult, ConfigError};
pub use expr::Expression;
pub use pipeline::{run_config, RunOutcome, RunSummary};

use std::path::Path;
use std::time::Instant;

/// Loads, runs and writes one configuration; the summary reports whether every certificate passed.
pub fn run(cfg: &RunConfig) -> AppResult<RunSummary> {
    let t0 = Instant::now();
    let out = run_config(cfg)?;
    output::write_run(&cfg.output_dir, &out, t0.elapsed().as_secs_f64())
}

pub fn run_file(path: &Path) -> AppResult<RunSummary> {
    run(&RunConfig::load(path)?)
}
