//! Channel model: complex Rayleigh channels, the real-valued equivalent
//! system and QPSK transmission over it.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Antenna counts. `n` transmit and `m` receive antennas give a real model
/// with `N = 2n` unknowns and `M = 2m` observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDims")]
pub struct SystemDims {
    n: usize,
    m: usize,
}

#[derive(Deserialize)]
struct RawDims {
    n: usize,
    m: usize,
}

impl TryFrom<RawDims> for SystemDims {
    type Error = Error;

    fn try_from(raw: RawDims) -> Result<Self> {
        SystemDims::new(raw.n, raw.m)
    }
}

impl SystemDims {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidDims { n, m });
        }
        Ok(Self { n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Real signal dimension `N = 2n`.
    pub fn real_n(&self) -> usize {
        2 * self.n
    }

    /// Real observation dimension `M = 2m`.
    pub fn real_m(&self) -> usize {
        2 * self.m
    }

    pub fn is_overloaded(&self) -> bool {
        self.m < self.n
    }
}

/// `m × n` complex channel with i.i.d. CN(0, 1) entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexChannel {
    pub entries: DMatrix<Complex64>,
}

/// The `M × N` real matrix `[[Re H, -Im H], [Im H, Re H]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealChannel {
    matrix: DMatrix<f64>,
}

impl RealChannel {
    /// Wraps an arbitrary real matrix. Used for hand-built test channels;
    /// channels produced by [`realify_channel`] carry the block structure.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Observation dimension M.
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// Signal dimension N.
    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Checks the complex-embedding block identities exactly.
    pub fn has_block_structure(&self) -> bool {
        let (rows, cols) = self.matrix.shape();
        if rows % 2 != 0 || cols % 2 != 0 {
            return false;
        }
        let (m, n) = (rows / 2, cols / 2);
        (0..m).all(|i| {
            (0..n).all(|j| {
                let h = &self.matrix;
                h[(i, j)] == h[(i + m, j + n)] && h[(i, j + n)] == -h[(i + m, j)]
            })
        })
    }
}

/// The real QPSK alphabet, one ±1 symbol per real dimension.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Constellation;

impl Constellation {
    pub const SYMBOLS: [f64; 2] = [1.0, -1.0];

    pub fn symbols(&self) -> &'static [f64; 2] {
        &Self::SYMBOLS
    }

    pub fn contains(&self, value: f64) -> bool {
        value == 1.0 || value == -1.0
    }
}

/// Additive noise level. `sigma2` is the complex noise variance per receive
/// antenna; each real component of the realified noise has half of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub snr_db: Option<f64>,
    pub sigma2: f64,
}

impl NoiseModel {
    pub fn from_snr(snr_db: f64, n: usize) -> Self {
        Self {
            snr_db: Some(snr_db),
            sigma2: snr_to_sigma2(snr_db, n),
        }
    }

    pub fn noiseless() -> Self {
        Self {
            snr_db: None,
            sigma2: 0.0,
        }
    }

    pub fn from_sigma2(sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::ParameterDomain(format!(
                "noise variance must be finite and non-negative, got {sigma2}"
            )));
        }
        Ok(Self {
            snr_db: None,
            sigma2,
        })
    }

    pub fn per_real_component_variance(&self) -> f64 {
        self.sigma2 / 2.0
    }
}

/// One transmitted vector and what the receiver saw.
#[derive(Debug, Clone)]
pub struct TransmissionSample<'a> {
    pub channel: &'a RealChannel,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub noise: NoiseModel,
}

/// `σ_w² = n · 10^(−SNR/10)`.
pub fn snr_to_sigma2(snr_db: f64, n: usize) -> f64 {
    n as f64 * 10f64.powf(-snr_db / 10.0)
}

pub fn sample_channel<R: Rng + ?Sized>(dims: SystemDims, rng: &mut R) -> ComplexChannel {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let entries = DMatrix::from_fn(dims.m(), dims.n(), |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(scale * re, scale * im)
    });
    ComplexChannel { entries }
}

pub fn realify_channel(hc: &ComplexChannel) -> RealChannel {
    let (m, n) = hc.entries.shape();
    let mut h = DMatrix::zeros(2 * m, 2 * n);
    for j in 0..n {
        for i in 0..m {
            let z = hc.entries[(i, j)];
            h[(i, j)] = z.re;
            h[(i, j + n)] = -z.im;
            h[(i + m, j)] = z.im;
            h[(i + m, j + n)] = z.re;
        }
    }
    RealChannel { matrix: h }
}

/// Stacks real parts above imaginary parts.
pub fn realify_vector(v: &DVector<Complex64>) -> DVector<f64> {
    let k = v.len();
    DVector::from_fn(2 * k, |i, _| if i < k { v[i].re } else { v[i - k].im })
}

/// Inverse of [`realify_vector`]; the input length must be even.
pub fn derealify_vector(v: &DVector<f64>) -> Result<DVector<Complex64>> {
    if !v.len().is_multiple_of(2) {
        return Err(Error::DimensionMismatch {
            what: "realified vector (must be even)",
            expected: v.len() + 1,
            got: v.len(),
        });
    }
    let k = v.len() / 2;
    Ok(DVector::from_fn(k, |i, _| Complex64::new(v[i], v[i + k])))
}

/// Uniform draw from `{±1}^N`.
pub fn sample_signal<R: Rng + ?Sized>(dims: SystemDims, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(dims.real_n(), |_, _| if rng.gen::<bool>() { 1.0 } else { -1.0 })
}

/// Computes `y = Hx + w` with `w ~ N(0, σ_w²/2 · I)`.
pub fn transmit<'a, R: Rng + ?Sized>(
    channel: &'a RealChannel,
    x: DVector<f64>,
    noise: NoiseModel,
    rng: &mut R,
) -> Result<TransmissionSample<'a>> {
    check_len("transmitted vector", channel.cols(), x.len())?;
    let mut y = channel.matrix() * &x;
    let sd = noise.per_real_component_variance().sqrt();
    if sd > 0.0 {
        for yi in y.iter_mut() {
            let w: f64 = rng.sample(StandardNormal);
            *yi += sd * w;
        }
    }
    Ok(TransmissionSample {
        channel,
        x,
        y,
        noise,
    })
}
