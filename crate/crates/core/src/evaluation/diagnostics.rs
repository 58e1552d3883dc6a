use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{sign, Detector};
use crate::error::{Error, Result};
use crate::rng::{tags, RngStream};
use crate::system_model::{realify_channel, sample_channel, sample_signal, transmit, NoiseModel, RealChannel, SystemDims};

/// `G = N⁻¹‖Hᵀ(y − H s)‖₂`.
pub fn gradient_amplitude(channel: &RealChannel, y: &DVector<f64>, s: &DVector<f64>) -> f64 {
    let h = channel.matrix();
    (h.tr_mul(&(y - h * s))).norm() / channel.cols() as f64
}

/// Fraction of coordinates whose sign differs between `prev` and `next`.
pub fn bit_flip_ratio(prev: &DVector<f64>, next: &DVector<f64>) -> f64 {
    assert_eq!(prev.len(), next.len(), "bit_flip_ratio needs equal lengths");
    if prev.is_empty() {
        return 0.0;
    }
    let flips = prev
        .iter()
        .zip(next.iter())
        .filter(|(a, b)| sign(**a) != sign(**b))
        .count();
    flips as f64 / prev.len() as f64
}

/// Ensemble means of the per-iteration diagnostics, indexed by iteration
/// `t = 1..=T` (element `t − 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub detector: String,
    pub n: usize,
    pub m: usize,
    pub mean_gradient_amplitude: Vec<f64>,
    pub mean_bit_flip_ratio: Vec<f64>,
    pub ensemble_size: usize,
    pub noiseless: bool,
    pub snr_db: Option<f64>,
}

impl DiagnosticsRecord {
    pub fn depth(&self) -> usize {
        self.mean_gradient_amplitude.len()
    }
}

/// Runs `detector` with tracing on `ensemble_size` transmissions, one channel
/// per signal, and averages `G_t` and the bit-flip ratio per iteration.
///
/// `snr_db` is ignored when `noiseless` is set.
pub fn run_diagnostics(
    detector: &dyn Detector,
    dims: SystemDims,
    ensemble_size: usize,
    noiseless: bool,
    snr_db: Option<f64>,
    stream: RngStream,
) -> Result<DiagnosticsRecord> {
    if ensemble_size == 0 {
        return Err(Error::InvalidConfig("ensemble size must be at least 1".into()));
    }
    let noise = match (noiseless, snr_db) {
        (true, _) => NoiseModel::noiseless(),
        (false, Some(snr)) => NoiseModel::from_snr(snr, dims.n()),
        (false, None) => {
            return Err(Error::InvalidConfig(
                "diagnostics need an SNR unless noiseless is set".into(),
            ))
        }
    };
    let traces: Vec<(Vec<f64>, Vec<f64>)> = (0..ensemble_size)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.substream(tags::DIAGNOSTICS, i as u64).rng();
            let channel = realify_channel(&sample_channel(dims, &mut rng));
            let x = sample_signal(dims, &mut rng);
            let sample = transmit(&channel, x, noise, &mut rng)?;
            let out = detector.detect(&channel, &sample.y, &noise, true)?;
            let trace = out.trace.ok_or_else(|| {
                Error::InvalidConfig(format!("detector {} does not record traces", detector.name()))
            })?;
            Ok((trace.gradient_amplitude[1..].to_vec(), trace.bit_flip_ratio))
        })
        .collect::<Result<_>>()?;
    let depth = traces[0].0.len();
    let mut g = vec![0.0; depth];
    let mut flips = vec![0.0; depth];
    for (tg, tf) in &traces {
        for t in 0..depth {
            g[t] += tg[t];
            flips[t] += tf[t];
        }
    }
    let scale = 1.0 / ensemble_size as f64;
    g.iter_mut().chain(flips.iter_mut()).for_each(|v| *v *= scale);
    Ok(DiagnosticsRecord {
        detector: detector.name(),
        n: dims.n(),
        m: dims.m(),
        mean_gradient_amplitude: g,
        mean_bit_flip_ratio: flips,
        ensemble_size,
        noiseless,
        snr_db: if noiseless { None } else { snr_db },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::{ths_detect, DetectorSpec, HsParams};
    use nalgebra::DMatrix;

    #[test]
    fn amplitude_cases() {
        let h = RealChannel::from_matrix(DMatrix::from_element(1, 1, 2.0));
        let g = gradient_amplitude(&h, &DVector::from_vec(vec![1.0]), &DVector::from_vec(vec![0.0]));
        assert!((g - 2.0).abs() < 1e-15);

        let dims = SystemDims::new(3, 2).unwrap();
        let mut rng = RngStream::new(1, 1).rng();
        let h = realify_channel(&sample_channel(dims, &mut rng));
        let x = sample_signal(dims, &mut rng);
        let y = h.matrix() * &x;
        assert!(gradient_amplitude(&h, &y, &x) < 1e-14);
    }

    #[test]
    fn amplitude_invariant_under_complex_rotation() {
        // Multiplying every complex symbol by i maps (re, im) to (−im, re):
        // on the real model this is the block permutation J = [[0, −I], [I, 0]],
        // which commutes with the channel's block structure and is orthogonal.
        let dims = SystemDims::new(3, 2).unwrap();
        let mut rng = RngStream::new(2, 1).rng();
        let h = realify_channel(&sample_channel(dims, &mut rng));
        let s = DVector::from_fn(6, |i, _| 0.1 * i as f64 - 0.2);
        let y = DVector::from_fn(4, |i, _| 0.3 * i as f64 - 0.5);
        let rot = |v: &DVector<f64>| {
            let k = v.len() / 2;
            DVector::from_fn(v.len(), |i, _| if i < k { -v[i + k] } else { v[i - k] })
        };
        let a = gradient_amplitude(&h, &y, &s);
        let b = gradient_amplitude(&h, &rot(&y), &rot(&s));
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn flip_ratio_cases() {
        let a = DVector::from_vec(vec![0.1, -0.2, 0.3]);
        assert_eq!(bit_flip_ratio(&a, &a), 0.0);
        assert_eq!(bit_flip_ratio(&a, &(-&a)), 1.0);
        let b = DVector::from_vec(vec![-0.1, -0.5, 0.4]);
        assert!((bit_flip_ratio(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        // sign(0) = +1
        let z = DVector::from_vec(vec![0.0]);
        assert_eq!(bit_flip_ratio(&z, &DVector::from_vec(vec![0.5])), 0.0);
    }

    #[test]
    fn ensemble_of_one_matches_trace() {
        let dims = SystemDims::new(3, 2).unwrap();
        let det = DetectorSpec::Hs { params: HsParams::reference(6) };
        let stream = RngStream::new(5, 0);
        let rec = run_diagnostics(&det, dims, 1, true, None, stream).unwrap();
        assert_eq!(rec.depth(), 6);

        let mut rng = stream.substream(tags::DIAGNOSTICS, 0).rng();
        let h = realify_channel(&sample_channel(dims, &mut rng));
        let x = sample_signal(dims, &mut rng);
        let y = h.matrix() * &x;
        let tr = ths_detect(&h, &y, &HsParams::reference(6).as_ths().unwrap(), true)
            .unwrap()
            .trace
            .unwrap();
        for t in 0..6 {
            assert!((rec.mean_gradient_amplitude[t] - tr.gradient_amplitude[t + 1]).abs() <= 1e-12);
            assert_eq!(rec.mean_bit_flip_ratio[t], tr.bit_flip_ratio[t]);
        }
    }

    #[test]
    fn untraceable_detector_rejected() {
        let dims = SystemDims::new(2, 2).unwrap();
        assert!(run_diagnostics(&DetectorSpec::Mmse, dims, 2, true, None, RngStream::new(1, 1)).is_err());
        let det = DetectorSpec::Hs { params: HsParams::reference(3) };
        assert!(run_diagnostics(&det, dims, 2, false, None, RngStream::new(1, 1)).is_err());
        assert!(run_diagnostics(&det, dims, 0, true, None, RngStream::new(1, 1)).is_err());
    }
}
