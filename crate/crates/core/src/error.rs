use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not skew-symmetric (asymmetry {asymmetry:.3e})")]
    NotSkew { asymmetry: f64 },
    #[error("{what} is not symmetric positive definite")]
    NotSpd { what: String },
    #[error("eigenvector continuity lost at x = {x} (overlap {overlap:.3})")]
    EigenSplitFailure { x: f64, overlap: f64 },
    #[error("node {node}: coupling solve residual {residual:.3e}")]
    SingularNodeMatrix { node: usize, residual: f64 },
    #[error("state bound exceeded on beam {beam} at t = {t} (|r| = {magnitude:.3e})")]
    BlowUp { beam: usize, t: f64, magnitude: f64 },
    #[error("trace dimension mismatch: {0}")]
    TraceDimensionMismatch(String),
    #[error("compatibility violated: {0}")]
    Compatibility(String),
    #[error("profiles violate the transmission conditions at the charged node (residual {residual:.3e})")]
    ProfileIncompatible { residual: f64 },
    #[error("plan stalled at step {step} with {unsolved} unsolved edges")]
    PlanStalled { step: usize, unsolved: usize },
    #[error("trace unavailable: {0}")]
    TraceUnavailable(String),
    #[error("rotation drift {drift:.3e} exceeds tolerance")]
    NotRotation { drift: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
