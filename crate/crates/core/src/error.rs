use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("matrix is rank deficient (min/max singular value ratio {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("index out of range: {what} {index} >= {bound}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("topology is not connected")]
    Disconnected,

    #[error("could not sample a connected Erdos-Renyi graph after {attempts} attempts")]
    RetryBudgetExhausted { attempts: usize },

    #[error("mixing matrix violates {0}")]
    MixingInvariant(String),

    #[error("point lies outside the region ||X^T X - I||_F <= 1/6 (violation {violation})")]
    OutsideRegion { violation: f64 },

    #[error("non-finite value at k={k}, t={t}, agent {agent}")]
    Divergence { k: usize, t: usize, agent: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at byte offset {offset}: {reason}")]
    Parse { offset: u64, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
