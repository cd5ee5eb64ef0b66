use alloc::boxed::Box;
use alloc::string::String;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(ValidationReport),

    #[error("inadmissible state: {0}")]
    Inadmissible(String),

    #[error("Colebrook iteration did not converge (Re = {reynolds:e})")]
    FrictionNonConvergence { reynolds: f64 },

    #[error("singular Jacobian (no pivot in column {column})")]
    SingularJacobian { column: usize },

    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    MaxIterationsExceeded { iterations: usize, residual: f64 },

    #[error("time step {step} failed: {source}")]
    StepFailed { step: usize, source: Box<Error> },

    #[error("compressor {0}: outlet pressure below inlet pressure")]
    Decompression(String),

    #[error("compressor {0}: reverse flow through an active compressor")]
    ReverseFlow(String),

    #[error("no strictly feasible constant control up to u_max = {u_max_bar} bar")]
    NoFeasibleStart { u_max_bar: f64 },

    #[error("line search stalled at outer iteration {outer} (mu = {mu:e}, gradient norm {grad_norm:e})")]
    InnerStall { outer: usize, mu: f64, grad_norm: f64, iterate: alloc::vec::Vec<f64> },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
