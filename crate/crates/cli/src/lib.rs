//! Command-line pipeline over `peg-core`: file formats, artifact output and
//! the evaluation harness.

pub mod commands;
pub mod error;
pub mod evaluate;
pub mod formats;
pub mod output;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
