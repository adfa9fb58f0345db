//! Classical laboratory for two-stage phase-estimation experiments on the
//! local density of states (LDOS) of perturbed quantum maps.
//!
//! The crate simulates the sampling circuit (two successive phase
//! estimations with an intermediate projective measurement), computes every
//! LDOS quantity exactly from full diagonalization as an oracle, and runs
//! the statistical layer: Breit-Wigner / Gaussian profile fits, Chernoff
//! similarity and sample-size bounds, and two-hypothesis tests.

pub mod circuit;
pub mod config;
pub mod error;
pub mod linalg;
pub mod models;
pub mod oracle;
pub mod runner;
pub mod spectral;
pub mod stats;

pub use error::{LdosError, Result};
