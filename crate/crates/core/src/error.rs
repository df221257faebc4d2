use thiserror::Error;

/// Errors raised by the lattice, solvers, measurement synthesis and inversion pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid region mask: {0}")]
    InvalidMask(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: String, index: usize },

    #[error("length mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("Picard iteration failed at time level {level}: {reason}")]
    PicardFailed { level: usize, reason: String },

    #[error("support violation: {0}")]
    Support(String),

    #[error("tabulated nonlinearity evaluated at {tau} outside [{min}, {max}]")]
    Extrapolation { tau: f64, min: f64, max: f64 },

    #[error("optimizer stagnated after {iterations} iterations (objective history tail {tail:?})")]
    Stagnation { iterations: usize, tail: Vec<f64> },

    #[error("{stage} failed: {reason}")]
    Pipeline { stage: String, reason: String },

    #[error("measurement '{label}' failed: {source}")]
    Measurement {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(values: &[f64], context: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            context: context.to_string(),
            index,
        }),
        None => Ok(()),
    }
}

pub(crate) fn check_len(actual: usize, expected: usize, context: &str) -> Result<()> {
    if actual != expected {
        return Err(Error::Shape {
            context: context.to_string(),
            expected,
            actual,
        });
    }
    Ok(())
}
