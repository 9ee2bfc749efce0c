//! Command-line front end for `fmahal`: curve CSV input/output, SVG
//! boxplots and the simulation benchmarks.

pub mod bench;
pub mod commands;
pub mod error;
pub mod io;
pub mod svg;

pub use error::{CliError, CliResult};
