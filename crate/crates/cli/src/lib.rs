//! Configuration, scenarios and output for the `phasemix` binary.

// negated comparisons are how NaN inputs get rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod scenarios;

pub use config::{parse_config, ConfigError, Overrides, Resolved, RunConfig, Scenario};
pub use scenarios::{run_scenario, Check, Outcome, RunError};

/// Runs a resolved configuration on a pool of `workers` threads.
pub fn run(resolved: &Resolved) -> Result<Outcome, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolved.config.workers.max(1))
        .build()
        .map_err(|e| RunError::Io(std::io::Error::other(e)))?;
    pool.install(|| run_scenario(resolved))
}
