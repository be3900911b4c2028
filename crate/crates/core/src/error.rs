use thiserror::Error;

/// Failure modes shared by every stage of the engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A size limit (site count, dense dimension, brute-force cap) was exceeded.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("index out of range: {0}")]
    Index(String),

    /// A state vector does not live in the space an operator was built for.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Krylov propagation could not reach the tolerance above the step floor.
    #[error("propagation did not converge: {0}")]
    Convergence(String),

    #[error("invalid prediction kind: {0}")]
    InvalidKind(String),

    #[error("invalid perturbation family: {0}")]
    InvalidFamily(String),
}

pub type Result<T> = std::result::Result<T, Error>;
