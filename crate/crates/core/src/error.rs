use thiserror::Error;

/// Errors raised by the solver and the estimate harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandauError {
    #[error("grid too coarse for stencils: n = {0} (need an even n >= 8)")]
    GridTooCoarse(usize),
    #[error("grid size must be even, got {0}")]
    OddGridSize(usize),
    #[error("grid extent must be positive and finite, got {0}")]
    InvalidExtent(f64),
    #[error("non-finite value in field at node {0}")]
    NonFinite(usize),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("kernel singular at origin; use tabulate_kernels")]
    SingularKernel,
    #[error("gamma must lie in [-3, 0), got {0}")]
    GammaOutOfRange(f64),
    #[error("ball average undefined for radial exponent {0} <= -3")]
    NonIntegrableExponent(f64),
    #[error("negative density {value:e} at node {node} exceeds tolerance {tolerance:e}")]
    NegativeDensity { node: usize, value: f64, tolerance: f64 },
    #[error("state has non-positive or non-finite mass {0}")]
    InvalidMass(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("CFL violation: dt = {dt:e} exceeds stable limit {limit:e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("conservative projection singular: moment Gram matrix is degenerate")]
    ProjectionSingular,
    #[error("transform normalization self-test failed: relative Parseval defect {0:e}")]
    ParsevalMismatch(f64),
    #[error("{0}")]
    Regime(String),
    #[error("Coulomb identity mismatch {0:e}: c_bar is not -8 pi f")]
    CoulombIdentity(f64),
}

pub type Result<T> = std::result::Result<T, LandauError>;
