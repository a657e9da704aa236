//! Simulator for a generalized harmonic explorer whose turns are driven by
//! exit probabilities of a (simple random walk × discrete Bessel walk) pair,
//! plus analytic left-passage formulas for SLE used as references.

pub mod analytic;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod explorer;
pub mod hitting;
pub mod lattice;
pub mod rng;
pub mod validation;
pub mod walk;

pub use error::{Error, Result};
