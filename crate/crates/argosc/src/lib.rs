//! File formats, experiment specifications and the command-line front end of
//! `argosc-core`.

pub mod commands;
pub mod io;
pub mod report;
pub mod spec;

use argosc_core::Error;

/// Failure classes of the CLI, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    /// Bad input: spec, dataset, flags or configuration. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// I/O or numerical failure while running. Exit code 2.
    #[error("{0}")]
    Runtime(String),
    /// A reproduction tolerance was missed. Exit code 3.
    #[error("{0}")]
    Acceptance(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Acceptance(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidDataset(_) | Error::InvalidConfig(_) | Error::Dimension(_) => Failure::Validation(e.to_string()),
            Error::Divergence { .. } | Error::NonFiniteColumn { .. } | Error::NonConvergence { .. } => {
                Failure::Runtime(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Failure::Runtime(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}
