use std::path::PathBuf;

/// Errors of the replication engine, file formats and CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] k2gof_core::Error),
    #[error("{what}: {failed} of {total} replicates failed (limit {limit_pct}%)")]
    TooManyFailures { what: String, failed: usize, total: usize, limit_pct: f64 },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("rotation plan {reference}/{candidate} failed its audit: max residual {residual:e}")]
    Audit { reference: String, candidate: String, residual: f64 },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn input(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Input { path: path.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code: 2 input, 3 no convergence, 4 harness, 5 audit or
    /// dimension failure.
    pub fn exit_code(&self) -> i32 {
        use k2gof_core::Error as C;
        match self {
            Error::Input { .. } | Error::Config(_) => 2,
            Error::Audit { .. } => 5,
            Error::TooManyFailures { .. } | Error::Io { .. } | Error::ThreadPool(_) => 4,
            Error::Core(e) => match e {
                C::NoConvergence { .. } => 3,
                C::DimensionMismatch { .. } | C::SupportMismatch { .. } | C::DegenerateK(_) => 5,
                C::InvalidSupport(_)
                | C::InvalidParams { .. }
                | C::InvalidGrid(_)
                | C::OutOfSupport { .. }
                | C::EmptyData
                | C::TooFewObservations { .. }
                | C::TooFewReplicates { .. } => 2,
                _ => 4,
            },
        }
    }
}
