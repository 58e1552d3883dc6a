use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-layer parameters `{β_t, η_t, ζ_t}` of the trainable HS detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawThs", into = "RawThs")]
pub struct ThsParams {
    beta: Vec<f64>,
    eta: Vec<f64>,
    zeta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawThs {
    #[serde(rename = "T")]
    depth: usize,
    beta: Vec<f64>,
    eta: Vec<f64>,
    zeta: Vec<f64>,
}

impl TryFrom<RawThs> for ThsParams {
    type Error = Error;

    fn try_from(raw: RawThs) -> Result<Self> {
        if raw.beta.len() != raw.depth {
            return Err(Error::ParameterDomain(format!(
                "T = {} but {} beta values given",
                raw.depth,
                raw.beta.len()
            )));
        }
        ThsParams::new(raw.beta, raw.eta, raw.zeta)
    }
}

impl From<ThsParams> for RawThs {
    fn from(p: ThsParams) -> Self {
        RawThs {
            depth: p.depth(),
            beta: p.beta,
            eta: p.eta,
            zeta: p.zeta,
        }
    }
}

impl ThsParams {
    pub fn new(beta: Vec<f64>, eta: Vec<f64>, zeta: Vec<f64>) -> Result<Self> {
        let depth = beta.len();
        if depth == 0 {
            return Err(Error::ParameterDomain("depth T must be at least 1".into()));
        }
        if eta.len() != depth || zeta.len() != depth {
            return Err(Error::ParameterDomain(format!(
                "parameter arrays disagree on depth: beta {}, eta {}, zeta {}",
                depth,
                eta.len(),
                zeta.len()
            )));
        }
        if let Some(t) = beta.iter().position(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::ParameterDomain(format!(
                "beta[{t}] = {} must be positive and finite",
                beta[t]
            )));
        }
        if eta.iter().chain(&zeta).any(|v| !v.is_finite()) {
            return Err(Error::ParameterDomain("eta and zeta must be finite".into()));
        }
        Ok(Self { beta, eta, zeta })
    }

    /// Same `(β, η, ζ)` in every layer.
    pub fn constant(depth: usize, beta: f64, eta: f64, zeta: f64) -> Result<Self> {
        Self::new(vec![beta; depth], vec![eta; depth], vec![zeta; depth])
    }

    pub fn depth(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    /// Flat layout `[β_0..β_{T-1}, η_0.., ζ_0..]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.depth());
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.eta);
        v.extend_from_slice(&self.zeta);
        v
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.is_empty() || !flat.len().is_multiple_of(3) {
            return Err(Error::ParameterDomain(format!(
                "flat THS parameter vector has length {}, expected a positive multiple of 3",
                flat.len()
            )));
        }
        let t = flat.len() / 3;
        Self::new(
            flat[..t].to_vec(),
            flat[t..2 * t].to_vec(),
            flat[2 * t..].to_vec(),
        )
    }
}

/// Fixed parameters of the untrained HS detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsParams {
    pub depth: usize,
    pub eta: f64,
    pub lambda: f64,
    pub beta: f64,
}

impl HsParams {
    pub fn new(depth: usize, eta: f64, lambda: f64, beta: f64) -> Result<Self> {
        let p = Self {
            depth,
            eta,
            lambda,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    /// `η = 0.1, λ = 1, β = 1`.
    pub fn reference(depth: usize) -> Self {
        Self {
            depth,
            eta: 0.1,
            lambda: 1.0,
            beta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::ParameterDomain("depth T must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::ParameterDomain(format!("lambda = {} must be positive", self.lambda)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::ParameterDomain(format!("beta = {} must be positive", self.beta)));
        }
        if !self.eta.is_finite() {
            return Err(Error::ParameterDomain("eta must be finite".into()));
        }
        Ok(())
    }

    /// The THS parameters that reproduce this detector: `ζ = 1 + η/λ`.
    pub fn as_ths(&self) -> Result<ThsParams> {
        self.validate()?;
        ThsParams::constant(self.depth, self.beta, self.eta, 1.0 + self.eta / self.lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TpgVariant {
    /// `W = Hᵀ`.
    Scalable,
    /// `W = Hᵀ(HHᵀ + αI)⁻¹`.
    Lmmse,
}

/// Per-layer `{γ_t, θ_t}` of the TPG family plus the LMMSE regularizer.
///
/// `alpha = None` selects the noise-matched regularizer `σ_w²/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTpg", into = "RawTpg")]
pub struct TpgParams {
    gamma: Vec<f64>,
    theta: Vec<f64>,
    alpha: Option<f64>,
    variant: TpgVariant,
}

#[derive(Serialize, Deserialize)]
struct RawTpg {
    #[serde(rename = "T")]
    depth: usize,
    gamma: Vec<f64>,
    theta: Vec<f64>,
    #[serde(default)]
    alpha: Option<f64>,
    variant: TpgVariant,
}

impl TryFrom<RawTpg> for TpgParams {
    type Error = Error;

    fn try_from(raw: RawTpg) -> Result<Self> {
        if raw.gamma.len() != raw.depth {
            return Err(Error::ParameterDomain(format!(
                "T = {} but {} gamma values given",
                raw.depth,
                raw.gamma.len()
            )));
        }
        TpgParams::new(raw.gamma, raw.theta, raw.alpha, raw.variant)
    }
}

impl From<TpgParams> for RawTpg {
    fn from(p: TpgParams) -> Self {
        RawTpg {
            depth: p.depth(),
            gamma: p.gamma,
            theta: p.theta,
            alpha: p.alpha,
            variant: p.variant,
        }
    }
}

impl TpgParams {
    pub fn new(
        gamma: Vec<f64>,
        theta: Vec<f64>,
        alpha: Option<f64>,
        variant: TpgVariant,
    ) -> Result<Self> {
        if gamma.is_empty() {
            return Err(Error::ParameterDomain("depth T must be at least 1".into()));
        }
        if theta.len() != gamma.len() {
            return Err(Error::ParameterDomain(format!(
                "gamma has {} entries but theta has {}",
                gamma.len(),
                theta.len()
            )));
        }
        if let Some(t) = theta.iter().position(|&v| v == 0.0 || !v.is_finite()) {
            return Err(Error::ParameterDomain(format!(
                "theta[{t}] = {} must be finite and non-zero",
                theta[t]
            )));
        }
        if gamma.iter().any(|v| !v.is_finite()) {
            return Err(Error::ParameterDomain("gamma must be finite".into()));
        }
        if let Some(a) = alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::ParameterDomain(format!(
                    "alpha = {a} must be finite and non-negative"
                )));
            }
        }
        Ok(Self {
            gamma,
            theta,
            alpha,
            variant,
        })
    }

    pub fn scalable(gamma: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        Self::new(gamma, theta, None, TpgVariant::Scalable)
    }

    pub fn depth(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn variant(&self) -> TpgVariant {
        self.variant
    }

    /// Inverse temperature `1/|θ_t|` of layer `t`.
    pub fn beta(&self, t: usize) -> f64 {
        1.0 / self.theta[t].abs()
    }

    /// Flat layout `[γ_0..γ_{T-1}, θ_0..θ_{T-1}]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.gamma.clone();
        v.extend_from_slice(&self.theta);
        v
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != 2 * self.depth() {
            return Err(Error::ParameterDomain(format!(
                "flat TPG parameter vector has length {}, expected {}",
                flat.len(),
                2 * self.depth()
            )));
        }
        let t = self.depth();
        Self::new(flat[..t].to_vec(), flat[t..].to_vec(), self.alpha, self.variant)
    }
}
