use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::system_model::RealChannel;

/// Trapezoidal grid for the Gaussian integral check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Half-width of the integration range in units of `√a · max(1, |x|·a)`.
    pub half_range_sd: f64,
    pub points: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            half_range_sd: 12.0,
            points: 200_001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsIdentityCheck {
    pub a: f64,
    pub x: f64,
    /// `exp(−a x²/2)`
    pub lhs: f64,
    pub integral_re: f64,
    pub integral_im: f64,
    pub residual: f64,
    pub half_range: f64,
    /// False when the range is narrower than `10 √a · max(1, |x|·a)`.
    pub range_sufficient: bool,
}

/// Integrates `(2πa)^(−1/2) exp(−z²/(2a) − i x z)` over `z` with the
/// trapezoidal rule and compares the result with `exp(−a x²/2)`.
pub fn verify_hs_identity(a: f64, x: f64, quad: QuadratureConfig) -> Result<HsIdentityCheck> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::ParameterDomain(format!("a = {a} must be positive")));
    }
    if !x.is_finite() {
        return Err(Error::ParameterDomain("x must be finite".into()));
    }
    if quad.points < 3 || !(quad.half_range_sd > 0.0) {
        return Err(Error::InvalidConfig(
            "quadrature needs at least 3 points and a positive range".into(),
        ));
    }
    let scale = a.sqrt() * (x.abs() * a).max(1.0);
    let half_range = quad.half_range_sd * scale;
    let step = 2.0 * half_range / (quad.points - 1) as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * a).sqrt();
    let (mut re, mut im) = (0.0, 0.0);
    for k in 0..quad.points {
        let z = -half_range + k as f64 * step;
        let weight = if k == 0 || k + 1 == quad.points { 0.5 } else { 1.0 };
        let envelope = weight * (-z * z / (2.0 * a)).exp();
        let (sin, cos) = (x * z).sin_cos();
        re += envelope * cos;
        im -= envelope * sin;
    }
    re *= norm * step;
    im *= norm * step;
    let lhs = (-a * x * x / 2.0).exp();
    Ok(HsIdentityCheck {
        a,
        x,
        lhs,
        integral_re: re,
        integral_im: im,
        residual: (re - lhs).abs(),
        half_range,
        range_sufficient: half_range >= 10.0 * scale,
    })
}

/// Largest `N` accepted by [`brute_force_expectation`].
pub const MAX_EXPECTATION_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationCheck {
    /// `Σ_x x e^{βvᵀHx} / Σ_x e^{βvᵀHx}` by enumeration.
    pub enumerated: DVector<f64>,
    /// `tanh(β Hᵀv)`
    pub closed_form: DVector<f64>,
    pub max_abs_diff: f64,
}

/// Computes the Boltzmann mean of `x ∈ {±1}^N` under weight `e^{βvᵀHx}` by
/// visiting all `2^N` points, and compares it with the factorized
/// `tanh(β Hᵀv)`.
pub fn brute_force_expectation(channel: &RealChannel, v: &DVector<f64>, beta: f64) -> Result<ExpectationCheck> {
    let n = channel.cols();
    if n > MAX_EXPECTATION_DIM {
        return Err(Error::InstanceTooLarge {
            n,
            max: MAX_EXPECTATION_DIM,
        });
    }
    check_len("v", channel.rows(), v.len())?;
    let h = channel.matrix();
    let count = 1usize << n;
    let point = |code: usize| DVector::from_fn(n, |i, _| if (code >> i) & 1 == 0 { 1.0 } else { -1.0 });
    let energies: Vec<f64> = (0..count).map(|c| beta * v.dot(&(h * point(c)))).collect();
    let peak = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut acc = DVector::zeros(n);
    for (c, e) in energies.iter().enumerate() {
        let w = (e - peak).exp();
        z += w;
        acc.axpy(w, &point(c), 1.0);
    }
    let enumerated = acc / z;
    let closed_form = h.tr_mul(v).map(|u| (beta * u).tanh());
    let max_abs_diff = (&enumerated - &closed_form).amax();
    Ok(ExpectationCheck {
        enumerated,
        closed_form,
        max_abs_diff,
    })
}
