//! Batch front-end for `lindkraus`: config parsing, run orchestration and
//! deterministic CSV output.

pub mod config;
pub mod error;
pub mod run;

pub use config::{parse_config, Mode, RunConfig};
pub use error::{CliError, CliResult};
pub use run::{run, RunOptions};
