//! Experiment driver for `amlmc-core`: run configuration, a rayon executor,
//! text file formats and the subcommands behind the `amlmc` binary.

pub mod config;
pub mod exec;
pub mod formats;
pub mod run;

pub use config::{ConfigError, RunConfig};
pub use exec::Pool;
pub use run::RunError;
