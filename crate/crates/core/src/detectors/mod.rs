//! Detection algorithms for the real-valued QPSK MIMO model.
//!
//! The iterative detectors ([`ths_detect`], [`hs_detect`],
//! [`scalable_tpg_detect`], [`tpg_detect`]) only touch the channel through
//! `H s` and `Hᵀ r` products, except for the one-off regularized inverse the
//! LMMSE-flavoured TPG detector builds before iterating.

mod hs;
mod linear;
mod ml;
mod params;
mod tpg;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::system_model::{NoiseModel, RealChannel};

pub use hs::{hs_detect, ths_detect, ths_step};
pub use linear::{mmse_detect, regularized_pseudo_inverse};
pub use ml::{brute_force_ml_detect, ml_objective, MAX_ML_DIM};
pub use params::{HsParams, ThsParams, TpgParams, TpgVariant};
pub use tpg::{scalable_tpg_detect, tpg_detect};

/// Per-iteration record of an iterative detector.
///
/// `u[t]` and `s[t]` hold the state after `t` iterations (`t = 0..=T`);
/// for TPG detectors `u` holds the pre-projection search point `r`.
/// `gradient_amplitude[t]` is `N⁻¹‖Hᵀ(y − H s_t)‖₂` and
/// `bit_flip_ratio[t - 1]` compares `sign(s_{t-1})` with `sign(s_t)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectorTrace {
    pub u: Vec<DVector<f64>>,
    pub s: Vec<DVector<f64>>,
    pub gradient_amplitude: Vec<f64>,
    pub bit_flip_ratio: Vec<f64>,
}

impl DetectorTrace {
    pub(crate) fn with_capacity(depth: usize) -> Self {
        Self {
            u: Vec::with_capacity(depth + 1),
            s: Vec::with_capacity(depth + 1),
            gradient_amplitude: Vec::with_capacity(depth + 1),
            bit_flip_ratio: Vec::with_capacity(depth),
        }
    }

    pub(crate) fn record(&mut self, channel: &RealChannel, y: &DVector<f64>, u: &DVector<f64>, s: &DVector<f64>) {
        use crate::evaluation::{bit_flip_ratio, gradient_amplitude};
        if let Some(prev) = self.s.last() {
            self.bit_flip_ratio.push(bit_flip_ratio(prev, s));
        }
        self.gradient_amplitude.push(gradient_amplitude(channel, y, s));
        self.u.push(u.clone());
        self.s.push(s.clone());
    }

    /// Number of completed iterations.
    pub fn iterations(&self) -> usize {
        self.s.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub soft: DVector<f64>,
    pub hard: DVector<f64>,
    pub trace: Option<DetectorTrace>,
}

impl DetectionResult {
    pub(crate) fn from_soft(soft: DVector<f64>, trace: Option<DetectorTrace>) -> Self {
        let hard = hard_decision(&soft);
        Self { soft, hard, trace }
    }
}

/// Elementwise sign with `sign(0) = +1`.
pub fn hard_decision(soft: &DVector<f64>) -> DVector<f64> {
    soft.map(sign)
}

#[inline]
pub(crate) fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Anything that maps a received vector to a detected one.
pub trait Detector: Sync {
    fn name(&self) -> String;

    fn detect(
        &self,
        channel: &RealChannel,
        y: &DVector<f64>,
        noise: &NoiseModel,
        trace: bool,
    ) -> Result<DetectionResult>;
}

/// The concrete detectors, selectable from configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorSpec {
    Ths { params: ThsParams },
    Hs { params: HsParams },
    ScalableTpg { params: TpgParams },
    Tpg { params: TpgParams },
    Mmse,
    Ml,
}

impl DetectorSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            DetectorSpec::Ths { .. } => "ths",
            DetectorSpec::Hs { .. } => "hs",
            DetectorSpec::ScalableTpg { .. } => "scalable_tpg",
            DetectorSpec::Tpg { .. } => "tpg",
            DetectorSpec::Mmse => "mmse",
            DetectorSpec::Ml => "ml",
        }
    }

    /// Number of iterations, for the iterative detectors.
    pub fn depth(&self) -> Option<usize> {
        match self {
            DetectorSpec::Ths { params } => Some(params.depth()),
            DetectorSpec::Hs { params } => Some(params.depth),
            DetectorSpec::ScalableTpg { params } | DetectorSpec::Tpg { params } => {
                Some(params.depth())
            }
            DetectorSpec::Mmse | DetectorSpec::Ml => None,
        }
    }

    pub fn supports_trace(&self) -> bool {
        self.depth().is_some()
    }
}

impl Detector for DetectorSpec {
    fn name(&self) -> String {
        self.kind().to_string()
    }

    fn detect(
        &self,
        channel: &RealChannel,
        y: &DVector<f64>,
        noise: &NoiseModel,
        trace: bool,
    ) -> Result<DetectionResult> {
        match self {
            DetectorSpec::Ths { params } => ths_detect(channel, y, params, trace),
            DetectorSpec::Hs { params } => hs_detect(channel, y, params, trace),
            DetectorSpec::ScalableTpg { params } => scalable_tpg_detect(channel, y, params, trace),
            DetectorSpec::Tpg { params } => tpg_detect(channel, y, noise.sigma2, params, trace),
            DetectorSpec::Mmse => mmse_detect(channel, y, noise.sigma2),
            DetectorSpec::Ml => brute_force_ml_detect(channel, y),
        }
    }
}
