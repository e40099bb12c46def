use std::path::PathBuf;

use thiserror::Error;

/// Process exit status for a schema violation.
pub const EXIT_SCHEMA: u8 = 2;
/// Process exit status for a runtime failure.
pub const EXIT_RUNTIME: u8 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    /// The document does not match the schema or violates a model invariant.
    #[error("schema violation: {0}")]
    Schema(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Runtime(#[from] reasoning_agent_core::Error),

    /// Some sweep cells failed; details are in the index.
    #[error("{failed} of {total} sweep cells failed")]
    CellsFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => EXIT_SCHEMA,
            _ => EXIT_RUNTIME,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
