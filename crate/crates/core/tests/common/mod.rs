#![allow(dead_code)]

use hs_mimo::rng::RngStream;
use hs_mimo::system_model::{
    realify_channel, sample_channel, sample_signal, snr_to_sigma2, transmit, NoiseModel, RealChannel, SystemDims,
};
use hs_mimo::unfolding_trainer::Batch;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// A batch of `size` noisy transmissions through one channel.
pub fn random_batch(dims: SystemDims, size: usize, snr_db: f64, stream: RngStream) -> Batch {
    let mut rng = stream.rng();
    let channel = realify_channel(&sample_channel(dims, &mut rng));
    let noise = NoiseModel::from_snr(snr_db, dims.n());
    let mut x = DMatrix::zeros(dims.real_n(), size);
    let mut y = DMatrix::zeros(dims.real_m(), size);
    for b in 0..size {
        let sample = transmit(&channel, sample_signal(dims, &mut rng), noise, &mut rng).unwrap();
        x.set_column(b, &sample.x);
        y.set_column(b, &sample.y);
    }
    Batch::new(channel, x, y, snr_to_sigma2(snr_db, dims.n())).unwrap()
}

pub fn random_dims<R: Rng>(rng: &mut R, max_n: usize, max_m: usize) -> SystemDims {
    SystemDims::new(rng.gen_range(1..=max_n), rng.gen_range(1..=max_m)).unwrap()
}

/// A channel and an arbitrary observation vector.
pub fn random_instance(dims: SystemDims, stream: RngStream) -> (RealChannel, DVector<f64>) {
    let mut rng = stream.rng();
    let h = realify_channel(&sample_channel(dims, &mut rng));
    let y = DVector::from_fn(dims.real_m(), |_, _| rng.gen_range(-3.0..3.0));
    (h, y)
}

/// Max over components of `|a − b|`, and `‖a − b‖ / ‖b‖`.
pub fn gradient_errors(analytic: &[f64], numeric: &[f64]) -> (f64, f64) {
    let a = DVector::from_column_slice(analytic);
    let b = DVector::from_column_slice(numeric);
    let diff = &a - &b;
    let rel = if b.norm() > 0.0 { diff.norm() / b.norm() } else { diff.norm() };
    (diff.amax(), rel)
}
