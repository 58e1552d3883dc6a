//! Monte Carlo BER estimation, convergence diagnostics, numerical checks of
//! the identities the HS detector is built on, and report persistence.

mod ber;
mod diagnostics;
mod report;
mod validators;

pub use ber::{estimate_ber, sweep_ber, sweep_ber_points, BerCurve, BerPoint, EvalOptions};
pub use diagnostics::{bit_flip_ratio, gradient_amplitude, run_diagnostics, DiagnosticsRecord};
pub use report::{read_report, write_report, Report, SCHEMA_VERSION};
pub use validators::{
    brute_force_expectation, verify_hs_identity, ExpectationCheck, HsIdentityCheck,
    QuadratureConfig, MAX_EXPECTATION_DIM,
};
