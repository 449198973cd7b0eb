//! Crate-wide error type.

/// Everything that can go wrong constructing tensors or running the solvers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension {dim} exceeds the dense-representation cap {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },

    #[error("vector has zero or non-finite norm; cannot normalize")]
    DegenerateVector,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite gradient on component {component}")]
    NonFiniteGradient { component: usize },

    #[error("power iteration start maps to the zero vector (exact critical point)")]
    DegenerateStart,

    #[error("no restart of the rank-one search produced a usable direction")]
    NoRestartSucceeded,

    #[error("no component has latched onto direction {direction}")]
    EmptyDiscoverySet { direction: usize },

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    #[error("rejection sampling failed after {attempts} attempts")]
    RejectionFailure { attempts: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
