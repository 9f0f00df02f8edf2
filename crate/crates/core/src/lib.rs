//! Federated compositional optimization.
//!
//! Problems of the form `Φ(x) = (1/K) Σ h_k(x) + f((1/K) Σ g_k(x))` where each
//! client `k` only sees its own `h_k`, `g_k`. The crate provides the problem
//! builders (including KL and χ² penalized DRO objectives), the FedAvg
//! variants and FedDRO, theory-derived schedules, an experiment harness and
//! independent verification oracles.

pub mod algorithms;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod oracles;
pub mod problems;
pub mod schedule;
pub mod vector;

pub use error::{Error, Result};
