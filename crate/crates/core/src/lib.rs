//! Branching processes with interactions and their moment-dual jump-diffusion.
//!
//! The integer-valued process `Z` is a continuous-time Markov chain on the
//! nonnegative integers combining linear branching and death with pairwise
//! competition, annihilation and cooperation, plus multi-individual
//! catastrophes driven by a finite atomic measure on `(0, 1]`. Its moment
//! dual `X` is a jump-diffusion on `[0, 1]` tied to `Z` through
//! `E_x[X_t^n] = E_n[x^{Z_t}]`.
//!
//! The crate is organized around that pair of processes:
//!
//! - [`model`]: parameters, derived quantities, per-state transition rates,
//!   regime and long-term classification,
//! - [`ctmc`]: exact event-driven simulation of `Z`, hitting times,
//!   generating-function estimates, truncated generator matrices,
//! - [`dual`]: the jump-diffusion `X`, moment and fixation estimates, and the
//!   discrete resource-efficiency pre-limit chain,
//! - [`analysis`]: stationary distributions (numeric and closed form), scale
//!   functions, fixation probabilities and expected fixation times,
//! - [`harness`]: statistical probes checking duality, coming down from
//!   infinity, explosion, parity conservation and convergence to
//!   stationarity.

pub mod analysis;
pub mod ctmc;
pub mod digest;
pub mod dual;
pub mod harness;
pub mod model;
pub mod rng;
pub mod stats;

mod linalg;
mod quad;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Parameter sets that fail construction-time validation.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    /// Arguments outside an operation's domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Requests for quantities the model does not define.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Numerical procedures that failed to reach their contract.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
