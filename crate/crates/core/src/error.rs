use thiserror::Error;

/// Errors raised by the localization library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("receivers are collinear (|d10 ^ d20| = {wedge:.3e} below tolerance {tolerance:.3e})")]
    CollinearSensors { wedge: f64, tolerance: f64 },

    #[error("non-finite coordinate in input")]
    NonFinite,

    #[error("covariance matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("covariance matrix is too ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("no real preimage: discriminant b^2 - ac = {0:.3e}")]
    NoRealPreimage(f64),

    #[error("position coincides with receiver {0}")]
    AtSensor(usize),

    #[error("position lies on the degeneracy locus (|det J| = {0:.3e})")]
    OnDegeneracyLocus(f64),

    #[error("ellipse projection is degenerate for this metric and point")]
    DegenerateProjection,

    #[error("ellipse projection count {found} disagrees with the real root count {expected}")]
    ProjectionCountMismatch { found: usize, expected: usize },

    #[error("sextic fit residual {0:.3e} exceeds tolerance")]
    SexticFit(f64),

    #[error("estimate has no finite location")]
    NotFinite,

    #[error("missing key `{0}`")]
    MissingKey(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid campaign spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
