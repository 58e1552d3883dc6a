use std::fmt::Write as _;

use nalgebra::DVector;
use rand::Rng;

use crate::error::Result;
use crate::evaluation::{brute_force_expectation, verify_hs_identity, HsIdentityCheck, QuadratureConfig};
use crate::rng::{tags, RngStream};
use crate::system_model::{realify_channel, sample_channel, SystemDims};

pub const IDENTITY_TOLERANCE: f64 = 1e-8;
pub const EXPECTATION_TOLERANCE: f64 = 1e-10;
pub const IDENTITY_A: [f64; 3] = [0.5, 1.0, 2.0];
pub const IDENTITY_X: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub seed: u64,
    pub instances: usize,
    /// Transmit antennas of the enumerated instances (`N = 2n`).
    pub n: usize,
    /// Compare against `tanh(−βHᵀv)`; the run must then fail.
    pub flip_tanh_sign: bool,
}

impl ValidationOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            instances: 100,
            n: 6,
            flip_tanh_sign: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationRow {
    pub index: usize,
    pub m: usize,
    pub beta: f64,
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOutcome {
    pub identity: Vec<HsIdentityCheck>,
    pub real_n: usize,
    pub expectation: Vec<ExpectationRow>,
    pub failures: Vec<String>,
}

impl ValidationOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn max_identity_residual(&self) -> f64 {
        self.identity.iter().map(|c| c.residual).fold(0.0, f64::max)
    }

    pub fn max_expectation_diff(&self) -> f64 {
        self.expectation.iter().map(|r| r.max_abs_diff).fold(0.0, f64::max)
    }

    /// Human-readable summary printed by `validate`.
    pub fn table(&self) -> String {
        let mut out = String::from("check         a     x   residual\n");
        for c in &self.identity {
            let _ = writeln!(out, "hs_identity   {:<4} {:>3}   {:.3e}", c.a, c.x, c.residual);
        }
        let _ = writeln!(
            out,
            "expectation   {} instances, N = {}, max |diff| {:.3e}",
            self.expectation.len(),
            self.real_n,
            self.max_expectation_diff()
        );
        for f in &self.failures {
            let _ = writeln!(out, "FAIL {f}");
        }
        out.push_str(if self.passed() { "all checks passed\n" } else { "validation failed\n" });
        out
    }
}

/// Runs the Gaussian identity grid and the enumerated Boltzmann means.
pub fn run_validation(options: ValidationOptions) -> Result<ValidationOutcome> {
    let mut failures = Vec::new();
    let mut identity = Vec::with_capacity(IDENTITY_A.len() * IDENTITY_X.len());
    for &a in &IDENTITY_A {
        for &x in &IDENTITY_X {
            let c = verify_hs_identity(a, x, QuadratureConfig::default())?;
            if !(c.residual < IDENTITY_TOLERANCE) || !c.range_sufficient {
                failures.push(format!("hs_identity a={a} x={x} residual {:.3e}", c.residual));
            }
            identity.push(c);
        }
    }

    let root = RngStream::new(options.seed, tags::VALIDATE);
    let mut expectation = Vec::with_capacity(options.instances);
    for index in 0..options.instances {
        let mut rng = root.substream(tags::VALIDATE, index as u64).rng();
        let m = rng.gen_range(2..=8);
        let dims = SystemDims::new(options.n, m)?;
        let channel = realify_channel(&sample_channel(dims, &mut rng));
        let v = DVector::from_fn(dims.real_m(), |_, _| rng.gen_range(-1.0..1.0));
        let beta = rng.gen_range(0.1..=5.0);
        let check = brute_force_expectation(&channel, &v, beta)?;
        let sign = if options.flip_tanh_sign { -1.0 } else { 1.0 };
        let closed = channel.matrix().tr_mul(&v).map(|u| (sign * beta * u).tanh());
        let max_abs_diff = (&check.enumerated - closed).amax();
        if !(max_abs_diff < EXPECTATION_TOLERANCE) {
            failures.push(format!(
                "expectation instance {index} (m={m}, beta={beta:.3}) max |diff| {max_abs_diff:.3e}"
            ));
        }
        expectation.push(ExpectationRow {
            index,
            m,
            beta,
            max_abs_diff,
        });
    }
    Ok(ValidationOutcome {
        identity,
        real_n: 2 * options.n,
        expectation,
        failures,
    })
}
