use nalgebra::DVector;

use super::DetectionResult;
use crate::error::{check_len, Error, Result};
use crate::system_model::RealChannel;

/// Largest real dimension accepted by [`brute_force_ml_detect`].
pub const MAX_ML_DIM: usize = 20;

/// `½‖y − Hx‖²`.
pub fn ml_objective(channel: &RealChannel, y: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * (y - channel.matrix() * x).norm_squared()
}

/// Exhaustive search of `{±1}^N` for the minimizer of `½‖y − Hx‖²`.
///
/// Candidates are visited in lexicographic order with `+1` before `−1`, and
/// only a strictly smaller objective replaces the incumbent, so ties resolve
/// to the lexicographically smallest vector.
pub fn brute_force_ml_detect(channel: &RealChannel, y: &DVector<f64>) -> Result<DetectionResult> {
    let n = channel.cols();
    if n > MAX_ML_DIM {
        return Err(Error::InstanceTooLarge { n, max: MAX_ML_DIM });
    }
    check_len("y", channel.rows(), y.len())?;
    let mut x = DVector::from_element(n, 1.0);
    let mut best = DVector::from_element(n, 1.0);
    let mut best_val = f64::INFINITY;
    for code in 0u64..(1u64 << n) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = if (code >> (n - 1 - i)) & 1 == 0 { 1.0 } else { -1.0 };
        }
        let val = ml_objective(channel, y, &x);
        if val < best_val {
            best_val = val;
            best.copy_from(&x);
        }
    }
    Ok(DetectionResult {
        soft: best.clone(),
        hard: best,
        trace: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::system_model::{realify_channel, sample_channel, sample_signal, SystemDims};
    use nalgebra::DMatrix;
    use rand::Rng;

    #[test]
    fn recovers_noiseless_signal() {
        let dims = SystemDims::new(3, 3).unwrap();
        for seed in 0..10 {
            let mut rng = RngStream::new(seed, 7).rng();
            let h = realify_channel(&sample_channel(dims, &mut rng));
            let x0 = sample_signal(dims, &mut rng);
            let y = h.matrix() * &x0;
            assert_eq!(brute_force_ml_detect(&h, &y).unwrap().hard, x0);
        }
    }

    #[test]
    fn identity_is_componentwise() {
        let eye = RealChannel::from_matrix(DMatrix::identity(2, 2));
        let y = DVector::from_vec(vec![0.9, -0.2]);
        assert_eq!(brute_force_ml_detect(&eye, &y).unwrap().hard.as_slice(), &[1.0, -1.0]);
    }

    #[test]
    fn ties_go_to_plus_one() {
        let zero = RealChannel::from_matrix(DMatrix::zeros(2, 3));
        let out = brute_force_ml_detect(&zero, &DVector::zeros(2)).unwrap();
        assert_eq!(out.hard.as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn too_large_rejected() {
        let h = RealChannel::from_matrix(DMatrix::zeros(2, 22));
        assert!(matches!(
            brute_force_ml_detect(&h, &DVector::zeros(2)),
            Err(Error::InstanceTooLarge { n: 22, max: 20 })
        ));
    }

    #[test]
    fn beats_random_hypercube_points() {
        let dims = SystemDims::new(5, 4).unwrap();
        for seed in 0..5 {
            let mut rng = RngStream::new(seed, 8).rng();
            let h = realify_channel(&sample_channel(dims, &mut rng));
            let y = DVector::from_fn(8, |_, _| rng.gen_range(-3.0..3.0));
            let best = ml_objective(&h, &y, &brute_force_ml_detect(&h, &y).unwrap().hard);
            for _ in 0..1000 {
                let x = sample_signal(dims, &mut rng);
                assert!(best <= ml_objective(&h, &y, &x));
            }
        }
    }
}
