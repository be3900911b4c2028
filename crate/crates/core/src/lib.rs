//! Loschmidt-echo dynamics of small spin-1/2 rings: basis and sectors,
//! Hamiltonians, Krylov propagation, echo observables, short-time
//! expansions and scaling analysis.

pub mod analysis;
pub mod basis;
pub mod echo;
pub mod error;
pub mod expansions;
pub mod hamiltonians;
pub mod numfmt;
pub mod propagator;

pub use error::{Error, Result};
