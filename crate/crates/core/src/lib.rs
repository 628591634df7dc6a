//! Simple random walk on a randomly oriented square lattice: simulation,
//! exact oracles, and estimators for return probabilities, Green functions
//! and the range.

pub mod cli;
pub mod estimators;
pub mod exact;
pub mod orientation;
pub mod range;
pub mod report;
pub mod rng;
pub mod walk;
