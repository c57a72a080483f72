use alloc::string::String;

/// Errors raised by the identification pipeline and its building blocks.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite state encountered at t = {t}")]
    Divergence { t: f64 },
    #[error("non-finite value in design column `{column}`")]
    NonFiniteColumn { column: String },
    #[error("coordinate descent did not converge after {sweeps} sweeps (last max change {max_change:e})")]
    NonConvergence { sweeps: usize, max_change: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
