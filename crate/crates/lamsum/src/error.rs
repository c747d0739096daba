//! Crate-wide error type.

use std::path::PathBuf;

use crate::backend::BackendError;
use crate::voting::VotingError;

/// Broad failure category, used by callers (e.g. the CLI) to map errors onto
/// exit codes without matching every variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Backend,
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at {path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("invalid references: {0}")]
    InvalidReferences(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Voting(#[from] VotingError),

    #[error("prompt for {n_units} units estimated at {estimated_tokens} tokens exceeds the \
             context budget of {budget_tokens}; lower the chunk size s")]
    ContextOverflow {
        n_units: usize,
        estimated_tokens: u64,
        budget_tokens: u64,
    },

    #[error("backend call failed at level {level}, chunk {chunk_index}, shuffle {shuffle_index}: {source}")]
    Backend {
        level: usize,
        chunk_index: usize,
        shuffle_index: usize,
        #[source]
        source: BackendError,
    },

    #[error("pipeline did not converge within {cap} levels (unit count stuck at {stuck_at})")]
    LevelCapExceeded { cap: usize, stuck_at: usize },
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } | Error::Malformed { .. } => ErrorCategory::Io,
            Error::Backend { .. } => ErrorCategory::Backend,
            Error::InvalidCorpus(_)
            | Error::InvalidReferences(_)
            | Error::Config(_)
            | Error::Voting(_)
            | Error::ContextOverflow { .. }
            | Error::LevelCapExceeded { .. } => ErrorCategory::Config,
        }
    }
}
