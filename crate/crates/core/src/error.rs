use thiserror::Error;

/// Errors raised by the localization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("target at ({x}, {y}, {z}) is {distance:e} m from element {element}, inside the singularity guard")]
    Singularity {
        x: f64,
        y: f64,
        z: f64,
        element: usize,
        distance: f64,
    },

    #[error(
        "Fisher matrix is not identifiable: equilibrated eigenvalue {eigenvalue:e} at parameter index {index} \
         (condition {condition:e}, cap {cap:e})"
    )]
    Identifiability {
        eigenvalue: f64,
        index: usize,
        condition: f64,
        cap: f64,
    },

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("grid search failed: no grid point produced a finite objective")]
    SearchFailed,

    #[error("exhaustive target matching supports at most 8 targets, got {0}")]
    TooManyTargets(usize),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("malformed matrix file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// I/O error with the offending path in its message.
    pub fn io_at(path: &std::path::Path, e: std::io::Error) -> Self {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
