//! The `kemeny` command-line tool: instance generation, solving, training,
//! benchmarking and ingestion.

pub mod bench;
pub mod commands;
pub mod error;
pub mod ingest;
pub mod instance;
pub mod solvers;

pub use commands::run;
pub use error::{exit, CliError, CliResult};
