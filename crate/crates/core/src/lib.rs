//! Simulation and verification of continuous-time fragmentation-interaction-
//! aggregation processes (cFIAPs), their replica-mean-field versions and
//! their Poisson-Hypothesis limits.

pub mod error;
pub mod dfiap;
pub mod experiment;
pub mod expr;
pub mod model;
pub mod ph;
pub mod point_process;
pub mod rmf;
pub mod stats;

pub use error::{FiapError, Result};
