use thiserror::Error;

/// Errors produced anywhere in the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("range error: {0}")]
    Range(String),

    #[error(
        "nonlinear solver did not converge at t = {time} s after {iterations} sweeps (last change {last_change:e})"
    )]
    SolverDivergence { time: f64, iterations: usize, last_change: f64 },

    #[error("degenerate least-squares window: {0}")]
    DegenerateWindow(String),

    #[error("non-finite value in term `{term}` at row {row}")]
    NonFinite { term: String, row: usize },

    #[error("zero-variance column `{0}` cannot be normalized")]
    ZeroVariance(String),

    #[error("ill-conditioned design matrix (condition number {condition:e}); collinear terms: {terms:?}")]
    IllConditioned { condition: f64, terms: Vec<String> },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty data set: {0}")]
    Empty(String),

    #[error("all candidate terms were pruned")]
    AllPruned,

    #[error("run {run_id} failed: {source}")]
    Run {
        run_id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    /// Coarse category used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Range(_) | Error::Domain(_) => ErrorKind::Validation,
            Error::Io { .. } | Error::Parse { .. } => ErrorKind::Io,
            Error::Run { source, .. } => source.kind(),
            _ => ErrorKind::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numeric,
    Io,
}

pub type Result<T> = std::result::Result<T, Error>;
