use thiserror::Error;

/// Errors raised by the kernel, discrepancy, oracle, alignment and data modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, tolerance {tolerance:e})")]
    NotPsd { min_eigenvalue: f64, tolerance: f64 },

    #[error("invalid bandwidth sigma^2 = {0}; must be finite and > 0")]
    InvalidBandwidth(f64),

    #[error("degenerate bandwidth: all pairwise distances are zero")]
    DegenerateBandwidth,

    #[error("invalid regularization epsilon = {0}; must be finite and > 0")]
    InvalidEpsilon(f64),

    #[error("{context} needs at least {needed} samples, found {found}")]
    TooFewSamples {
        context: &'static str,
        needed: usize,
        found: usize,
    },

    #[error("dataset `{0}` has no labels")]
    MissingLabels(String),

    #[error("invalid labels: {0}")]
    InvalidLabels(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("linear algebra failure: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPsd { .. }
                | Error::NonFinite(_)
                | Error::NonFiniteGradient { .. }
                | Error::Linalg(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
