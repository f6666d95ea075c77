use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate orbit: {0}")]
    DegenerateOrbit(String),
    #[error("state outside the admissible support: {0}")]
    SupportViolation(String),
    #[error("iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("could not bracket a root: {0}")]
    RootBracketFailure(String),
    #[error("quadrature failed to reach tolerance: {0}")]
    QuadratureFailure(String),
    #[error("radius outside the orbit: {0}")]
    OutOfOrbit(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("marker outside the radial grid: {0}")]
    MarkerOutOfGrid(String),
    #[error("step rejected: {0}")]
    StepRejected(String),
    #[error("need at least {needed} snapshots, got {got}")]
    InsufficientSnapshots { needed: usize, got: usize },
    #[error("series contains non-positive values: {0}")]
    NonPositiveValues(String),
}

pub type Result<T> = std::result::Result<T, Error>;
