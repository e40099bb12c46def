//! File formats, configuration and command implementations behind the
//! `agent` binary.

pub mod config;
pub mod error;
pub mod formats;
pub mod run;
pub mod sweep;

pub use config::RunConfig;
pub use error::CliError;
