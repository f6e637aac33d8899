use thiserror::Error;

use crate::measure::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("unsupported dimension {0} (only 1 and 2 are supported)")]
    UnsupportedDimension(usize),

    #[error("length scale must be positive and finite, got {0}")]
    InvalidKappa(f64),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("quadrature did not converge after {intervals} intervals (estimated error {achieved:e})")]
    QuadratureNoConvergence { achieved: f64, intervals: usize },

    #[error("uncovered input point at {point:?}: dual potential equals one where the kernel is positive")]
    UncoveredInput { point: Point },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("empty sample cannot be a probability measure")]
    EmptySample,

    #[error("single linkage needs at least 2 points, got {0}")]
    TooFewPoints(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
