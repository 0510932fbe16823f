use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied arguments or configuration violate a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("LFSR polynomial is not primitive: period {period}, expected {expected}")]
    NotPrimitive { period: usize, expected: usize },

    #[error("not a preferred pair: cross-correlation takes {distinct} distinct values {values:?}")]
    NotPreferredPair { distinct: usize, values: Vec<i64> },

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Whitening failed because an auto-covariance is not positive definite.
    #[error("singular covariance: {0}")]
    Singular(String),

    #[error("unstable filter: {0}")]
    UnstableFilter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// A pipeline stage failed.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad arguments or configuration rather than
    /// a failure while doing the work.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_validation(),
            _ => matches!(
                self,
                Error::InvalidInput(_)
                    | Error::Dimension(_)
                    | Error::NotPrimitive { .. }
                    | Error::NotPreferredPair { .. }
                    | Error::Infeasible(_)
            ),
        }
    }

    /// Short machine-readable name of the innermost error.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Dimension(_) => "dimension",
            Error::NotPrimitive { .. } => "not_primitive",
            Error::NotPreferredPair { .. } => "not_preferred_pair",
            Error::Infeasible(_) => "infeasible",
            Error::Singular(_) => "singular",
            Error::UnstableFilter(_) => "unstable_filter",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
            Error::Format { .. } => "format",
            Error::Stage { source, .. } => source.kind(),
        }
    }

    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    pub(crate) fn at(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}
