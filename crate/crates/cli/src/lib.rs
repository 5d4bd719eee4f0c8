//! Command-line runner: configuration resolution and run execution.

pub mod config;
pub mod run;

pub use config::{Algo, Cli, RunConfig};
pub use run::{execute, read_metrics, summarize, Summary};
