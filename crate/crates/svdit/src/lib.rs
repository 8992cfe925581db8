//! File formats, run manifests, timing and the `svdit` command-line tool on
//! top of [`svdit_core`].

pub mod cli;
pub mod error;
pub mod format;
pub mod timing;

pub use error::{CliError, Result};
