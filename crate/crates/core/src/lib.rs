//! Hubbard–Stratonovich (HS) and trainable HS (THS) detectors for overloaded
//! MIMO systems with QPSK signalling, plus the tooling around them:
//! deep-unfolding training, TPG and MMSE baselines, Monte Carlo BER
//! estimation and convergence diagnostics.

// Negated float comparisons (`!(x > 0.0)`) are used on purpose so NaN fails
// validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod detectors;
pub mod error;
pub mod evaluation;
pub mod rng;
pub mod system_model;
pub mod unfolding_trainer;

pub use error::{Error, Result};
