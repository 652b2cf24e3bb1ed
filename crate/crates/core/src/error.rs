use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("Schur decomposition did not converge after {iterations} iterations")]
    DecompositionFailure { iterations: usize },

    #[error("singular Sylvester pencil: {0}")]
    SingularPencil(String),

    #[error("problem too large: {0}")]
    Size(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("malformed input in {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("projection matrix has zero Frobenius norm")]
    DegenerateProjection,

    #[error("sample {sample}: best-match set covers every class, no runner-up exists")]
    NoRunnerUp { sample: usize },

    #[error("objective undefined at alpha_t = {0} (gamma diverges)")]
    UndefinedGamma(f64),

    #[error("gradient descent diverged: {0}")]
    StepSize(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("episode {index} failed: {source}")]
    Episode {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 = validation, 3 = I/O, 4 = numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_) | Error::Validation(_) | Error::Size(_) => 2,
            Error::NotFound(_) | Error::Format { .. } | Error::Io { .. } => 3,
            Error::Episode { source, .. } => source.exit_code(),
            _ => 4,
        }
    }

    /// Short stable identifier used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NonFinite { .. } => "non_finite",
            Error::DecompositionFailure { .. } => "decomposition_failure",
            Error::SingularPencil(_) => "singular_pencil",
            Error::Size(_) => "size",
            Error::Validation(_) => "validation",
            Error::NotFound(_) => "not_found",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
            Error::DegenerateProjection => "degenerate_projection",
            Error::NoRunnerUp { .. } => "no_runner_up",
            Error::UndefinedGamma(_) => "undefined_gamma",
            Error::StepSize(_) => "step_size",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::Episode { .. } => "episode",
        }
    }
}
