use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::Detector;
use crate::error::{Error, Result};
use crate::rng::{tags, RngStream};
use crate::system_model::{realify_channel, sample_channel, sample_signal, transmit, NoiseModel, SystemDims};

/// Bit error estimate at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub detector: String,
    pub bits_tested: u64,
    pub bit_errors: u64,
    pub ber: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci_half_width: f64,
    pub vectors: u64,
    /// Vectors on which the detector diverged; all their bits count as errors.
    pub diverged_vectors: u64,
}

impl BerPoint {
    fn new(snr_db: f64, detector: String, bits: u64, errors: u64, vectors: u64, diverged: u64) -> Self {
        let ber = errors as f64 / bits as f64;
        Self {
            snr_db,
            detector,
            bits_tested: bits,
            bit_errors: errors,
            ber,
            ci_half_width: 1.96 * (ber * (1.0 - ber) / bits as f64).sqrt(),
            vectors,
            diverged_vectors: diverged,
        }
    }
}

/// One detector's BER over an SNR grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub detector: String,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub depth: Option<usize>,
    pub seed: u64,
    pub stream_id: u64,
    pub vectors_per_channel: usize,
    pub points: Vec<BerPoint>,
    /// Unix time of the run; left empty unless requested so reruns stay
    /// byte-identical.
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub num_vectors: usize,
    /// Consecutive vectors that share one channel draw.
    pub vectors_per_channel: usize,
}

impl EvalOptions {
    pub fn new(num_vectors: usize) -> Self {
        Self {
            num_vectors,
            vectors_per_channel: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_vectors == 0 || self.vectors_per_channel == 0 {
            return Err(Error::InvalidConfig(
                "num_vectors and vectors_per_channel must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Counts hard-decision errors of `detector` over `options.num_vectors`
/// independent transmissions at `snr_db`.
///
/// The draws depend only on `stream` and the vector index, so different
/// detectors given the same stream see identical channels, signals and noise.
pub fn estimate_ber(
    detector: &dyn Detector,
    dims: SystemDims,
    snr_db: f64,
    options: EvalOptions,
    stream: RngStream,
) -> Result<BerPoint> {
    estimate_with_noise(detector, dims, NoiseModel::from_snr(snr_db, dims.n()), options, stream)
        .map(|mut p| {
            p.snr_db = snr_db;
            p
        })
}

pub(crate) fn estimate_with_noise(
    detector: &dyn Detector,
    dims: SystemDims,
    noise: NoiseModel,
    options: EvalOptions,
    stream: RngStream,
) -> Result<BerPoint> {
    options.validate()?;
    let blocks = options.num_vectors.div_ceil(options.vectors_per_channel);
    let per_block: Vec<(u64, u64)> = (0..blocks)
        .into_par_iter()
        .map(|block| -> Result<(u64, u64)> {
            let mut channel_rng = stream.substream(tags::EVAL_CHANNEL, block as u64).rng();
            let channel = realify_channel(&sample_channel(dims, &mut channel_rng));
            let first = block * options.vectors_per_channel;
            let last = (first + options.vectors_per_channel).min(options.num_vectors);
            let (mut errors, mut diverged) = (0u64, 0u64);
            for index in first..last {
                let mut rng = stream.substream(tags::EVAL_VECTOR, index as u64).rng();
                let x = sample_signal(dims, &mut rng);
                let sample = transmit(&channel, x, noise, &mut rng)?;
                match detector.detect(&channel, &sample.y, &noise, false) {
                    Ok(out) => {
                        errors += out.hard.iter().zip(sample.x.iter()).filter(|(a, b)| a != b).count() as u64;
                    }
                    Err(Error::Diverged { .. }) => {
                        errors += dims.real_n() as u64;
                        diverged += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok((errors, diverged))
        })
        .collect::<Result<_>>()?;
    let errors = per_block.iter().map(|p| p.0).sum();
    let diverged = per_block.iter().map(|p| p.1).sum();
    let vectors = options.num_vectors as u64;
    Ok(BerPoint::new(
        f64::NAN,
        detector.name(),
        vectors * dims.real_n() as u64,
        errors,
        vectors,
        diverged,
    ))
}

/// [`estimate_ber`] at every SNR of `grid`; point `k` uses substream `k`.
pub fn sweep_ber(
    detector: &dyn Detector,
    dims: SystemDims,
    grid: &[f64],
    options: EvalOptions,
    stream: RngStream,
) -> Result<BerCurve> {
    let points: Vec<(f64, &dyn Detector)> = grid.iter().map(|&s| (s, detector)).collect();
    sweep_ber_points(&detector.name(), dims, &points, options, stream)
}

/// Sweep where each SNR point may use its own detector instance, e.g.
/// parameters trained for that SNR.
pub fn sweep_ber_points(
    name: &str,
    dims: SystemDims,
    points: &[(f64, &dyn Detector)],
    options: EvalOptions,
    stream: RngStream,
) -> Result<BerCurve> {
    if points.is_empty() {
        return Err(Error::InvalidConfig("SNR grid is empty".into()));
    }
    if points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
        return Err(Error::InvalidConfig("SNR grid must be strictly increasing".into()));
    }
    let mut out = Vec::with_capacity(points.len());
    for (k, &(snr, det)) in points.iter().enumerate() {
        let mut p = estimate_ber(det, dims, snr, options, stream.substream(tags::EVAL_POINT, k as u64))?;
        p.detector = name.to_string();
        out.push(p);
    }
    Ok(BerCurve {
        detector: name.to_string(),
        n: dims.n(),
        m: dims.m(),
        depth: None,
        seed: stream.seed,
        stream_id: stream.stream_id,
        vectors_per_channel: options.vectors_per_channel,
        points: out,
        timestamp: None,
    })
}
