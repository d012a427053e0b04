//! Configuration, artifact export and run orchestration for the `stopt`
//! command-line tool.

pub mod config;
pub mod export;
pub mod run;

pub use config::{ConfigError, RunConfig, Study};
pub use run::{run, run_single, verify, Outcome, RunError, RunReport};
