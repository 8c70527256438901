use std::fmt;

use thiserror::Error;

/// Stable machine-readable error categories surfaced by the CLI and bindings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    Io,
    Parse,
    Identifiability,
    Separation,
    Singular,
    Overflow,
    NonConvergence,
    Usage,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Io => "IO",
            ErrorCode::Parse => "PARSE",
            ErrorCode::Identifiability => "IDENTIFIABILITY",
            ErrorCode::Separation => "SEPARATION",
            ErrorCode::Singular => "SINGULAR",
            ErrorCode::Overflow => "OVERFLOW",
            ErrorCode::NonConvergence => "NONCONVERGENCE",
            ErrorCode::Usage => "USAGE",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Counts of bootstrap resamples dropped, by cause.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct FailureTaxonomy {
    pub degenerate: usize,
    pub separation: usize,
    pub singular: usize,
    pub nonconvergence: usize,
    pub overflow: usize,
    pub other: usize,
}

impl FailureTaxonomy {
    pub fn total(&self) -> usize {
        self.degenerate
            + self.separation
            + self.singular
            + self.nonconvergence
            + self.overflow
            + self.other
    }

    pub(crate) fn record(&mut self, err: &Error) {
        match err {
            Error::Degenerate(_) | Error::InsufficientData { .. } => self.degenerate += 1,
            Error::Separation { .. } => self.separation += 1,
            Error::SingularDesign { .. } | Error::SingularInformation(_) => self.singular += 1,
            Error::NonConvergence(_) => self.nonconvergence += 1,
            Error::Overflow(_) => self.overflow += 1,
            _ => self.other += 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("inconsistent record at row {row}: {message}")]
    Consistency { row: usize, message: String },

    #[error("invalid model configuration: {0}")]
    Config(String),

    #[error("basis term {term} evaluates to a non-finite value at row {row}")]
    Evaluation { term: usize, row: usize },

    #[error("model is not identifiable: {0}")]
    Identifiability(String),

    #[error("insufficient data: {needed} complete cases needed, {available} available")]
    InsufficientData { needed: usize, available: usize },

    #[error("singular design: columns {dependent:?} are linearly dependent")]
    SingularDesign { dependent: Vec<usize> },

    #[error("singular information matrix: {0}")]
    SingularInformation(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("complete separation: |theta|_inf = {norm:.3e} with likelihood still increasing")]
    Separation { norm: f64 },

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("no root found: {0}")]
    NoRoot(String),

    #[error("M(gamma) is non-finite over the whole grid")]
    ProfileOverflow,

    #[error("bootstrap unstable: {successful} of {requested} resamples succeeded ({taxonomy:?})")]
    Instability {
        requested: usize,
        successful: usize,
        taxonomy: FailureTaxonomy,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn code(&self) -> ErrorCode {
        match self {
            Error::Io { .. } => ErrorCode::Io,
            Error::Parse { .. } | Error::Consistency { .. } | Error::Json(_) => ErrorCode::Parse,
            Error::Identifiability(_) => ErrorCode::Identifiability,
            Error::Separation { .. } => ErrorCode::Separation,
            Error::SingularDesign { .. }
            | Error::SingularInformation(_)
            | Error::Degenerate(_)
            | Error::InsufficientData { .. } => ErrorCode::Singular,
            Error::Overflow(_) | Error::Evaluation { .. } | Error::ProfileOverflow => {
                ErrorCode::Overflow
            }
            Error::NonConvergence(_) | Error::NoRoot(_) | Error::Instability { .. } => {
                ErrorCode::NonConvergence
            }
            Error::Config(_) | Error::InvalidArgument(_) | Error::Domain(_) => ErrorCode::Usage,
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
