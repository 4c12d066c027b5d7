use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("point lies outside the domain")]
    OutsideDomain,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("surrogate training failed: {0}")]
    Training(String),

    /// Posterior-mean samples have no spread, so no output density exists.
    #[error("degenerate output density: samples have zero spread")]
    DegenerateDensity,

    #[error("likelihood-weighted acquisition requires a fitted mixture")]
    MissingMixture,

    #[error("every optimizer restart produced a non-finite value")]
    NoFiniteStart,

    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),

    #[error("integration produced a non-finite state at t = {time}")]
    BlowUp { time: f64 },

    #[error("fixture error: {0}")]
    Fixture(String),
}
