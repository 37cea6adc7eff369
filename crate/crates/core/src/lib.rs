//! Solvers for continuous-time contracting between a principal and a finite
//! set of competing agents who control the drift and jump intensities of a
//! shared vector of output processes.
//!
//! The crate is organized around the pipeline
//!
//! 1. [`model`] — problem instances: coefficients, jump measures, agent and
//!    principal preferences, plus the built-in model families.
//! 2. [`sim`] — Euler path simulation, change-of-measure densities, and
//!    reweighted Monte Carlo estimators.
//! 3. [`nash`] — the agents' generators, the per-point best-response fixed
//!    point, and the principal's Hamiltonian.
//! 4. [`bsde`] — continuation-value / certainty-equivalent dynamics, forward
//!    accumulation and backward least-squares Monte Carlo.
//! 5. [`hjb`] — grid solver for the principal's integro-differential dynamic
//!    programming equation, feedback-policy extraction, and an independent
//!    FBSDE cross-check.
//! 6. [`contract`] — contract synthesis from the feedback policy and Monte
//!    Carlo verification of incentive compatibility and participation.

pub mod bsde;
pub mod contract;
pub mod error;
pub mod hjb;
pub mod model;
pub mod nash;
pub mod num;
pub mod sim;

pub use error::{Error, Result};
