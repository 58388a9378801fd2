use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("tet {index} is degenerate (volume {volume:e}, threshold {threshold:e})")]
    DegenerateTet { index: usize, volume: f64, threshold: f64 },

    #[error("no midsagittal surface path: {0}")]
    NoPath(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("anchor set is empty; stiffness matrix would be singular")]
    NoAnchors,

    #[error("eigensolver did not converge (residual {residual:e})")]
    EigenNonConvergence { residual: f64 },

    #[error("constrained pose normal matrix is singular; use a regularization eps > 0")]
    SingularPose,

    #[error("warped reconstruction requested but basis has no curl basis")]
    MissingCurlBasis,

    #[error("contour: {0}")]
    Contour(String),

    #[error("database generation: accepted {accepted} of {drawn} samples ({rate:.3}%); try a smaller max_disp")]
    LowAcceptance { accepted: usize, drawn: usize, rate: f64 },

    #[error("basis fingerprint mismatch: database built from {expected}, supplied basis is {got}")]
    FingerprintMismatch { expected: String, got: String },

    #[error("malformed database: {0}")]
    MalformedDatabase(String),

    #[error("empty database")]
    EmptyDatabase,

    #[error("image: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            msg: msg.into(),
        }
    }
}
