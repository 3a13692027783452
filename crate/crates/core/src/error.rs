use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degree mismatch: expected {expected}, found {found}")]
    DegreeMismatch { expected: usize, found: usize },

    #[error("degenerate frame: vector {index} is dependent on the preceding ones")]
    DegenerateFrame { index: usize },

    #[error("form is not simple (Plücker residual {residual:.3e})")]
    NotSimple { residual: f64 },

    #[error("point is outside the tubular neighborhood (distance {distance:.6} >= radius {radius})")]
    OutsideTube { distance: f64, radius: f64 },

    #[error("nearest-point projection did not converge after {iterations} iterations; trace {trace:?}")]
    ProjectionDiverged { iterations: usize, trace: Vec<f64> },

    #[error("metric degenerates: pulled-back volume norm is {norm:e}")]
    SingularMetric { norm: f64 },

    #[error("reach {reach:.4} does not exceed the tube radius {radius}; shrink epsilon")]
    ReachTooSmall { reach: f64, radius: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
