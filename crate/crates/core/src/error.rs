use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by geometry validation, discretization, solves and studies.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("a/eps = {ratio} is not an integer (a = {a}, eps = {eps})")]
    NonIntegerPeriodCount { a: f64, eps: f64, ratio: f64 },

    #[error("parameter `{name}` must be strictly positive and finite, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("channel width alpha*eps^3 = {width} does not fit in a period of length {eps}")]
    ChannelTooWide { width: f64, eps: f64 },

    #[error("channel top L*eps = {channel_top} is not below the strip top {strip_top}")]
    StripBelowChannel { channel_top: f64, strip_top: f64 },

    #[error("resolution policy: {what} must be at least {min}, got {got}")]
    ResolutionTooCoarse {
        what: &'static str,
        got: f64,
        min: f64,
    },

    #[error("grid has {unknowns} unknowns, above the cap of {cap}")]
    GridTooLarge { unknowns: usize, cap: usize },

    #[error(
        "matrix is singular or numerically singular (pivot {pivot:e} at position {index}); \
         omega is probably at a discrete resonance, shift it slightly"
    )]
    SingularMatrix { index: usize, pivot: f64 },

    #[error("factorization failed: {0}")]
    FactorizationFailure(String),

    #[error("solve did not reach the residual target: relative residual {residual:e}")]
    InaccurateSolve { residual: f64 },

    #[error("denominator k^2 + alpha/(LV) - omega^2 = {denominator:e} vanishes: resonant mode")]
    ResonantMode { denominator: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("H1 seminorm against a function reference needs its gradient")]
    MissingGradient,

    #[error("grid has no line at x2 = 0")]
    NoTraceLine,

    #[error("grid has no resonator strip")]
    NoStripInGrid,

    #[error("grid has no channels")]
    NoChannelsInGrid,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: unknown key `{key}`")]
    UnknownKey {
        path: PathBuf,
        line: usize,
        key: String,
    },

    #[error("invalid configuration: {0}")]
    Validation(Box<Error>),

    #[error("invalid study configuration: {0}")]
    InvalidStudy(String),

    #[error("manufactured-solution gate failed: {0}")]
    GateFailed(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// True for errors that come from a linear solve rather than from input data.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::SingularMatrix { .. }
                | Error::FactorizationFailure(_)
                | Error::InaccurateSolve { .. }
                | Error::ResonantMode { .. }
        )
    }

    /// Process exit code: 1 for bad input, 2 for solver failures, 3 for a failed gate.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::GateFailed(_) => 3,
            e if e.is_solver_failure() => 2,
            _ => 1,
        }
    }
}
