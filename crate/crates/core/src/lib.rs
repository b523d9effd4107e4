//! Repeated secretary problem toolkit: optimal thresholds and win
//! probabilities, simulation of idealized and behavioral agents over repeated
//! games, and Bayesian comparison of stopping-policy models on decision logs.

pub mod analysis;
pub mod distributions;
pub mod engine;
pub mod error;
pub mod inference;
pub mod io;
pub mod memory;
pub mod policies;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
