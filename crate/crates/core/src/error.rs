use thiserror::Error;

/// Errors raised by kernel, solver, and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-integrable kernel: {0}")]
    NonIntegrableKernel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("convex conjugate unsupported for {0}")]
    UnsupportedConjugate(String),

    #[error("history does not cover age {age} at t = {t}")]
    MissingHistory { t: f64, age: f64 },

    #[error("non-monotone timestamp: {new} after {last}")]
    Ordering { last: f64, new: f64 },

    #[error("unsupported manufactured case: {0}")]
    UnsupportedManufactured(String),

    #[error("numerical divergence at step {step} (t = {t})")]
    Divergence { step: usize, t: f64 },

    #[error("equivalence undefined at sample {index}: E = {energy}, L = {lyapunov}")]
    EquivalenceUndefined { index: usize, energy: f64, lyapunov: f64 },

    #[error("undefined scaling: {0}")]
    UndefinedScaling(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
