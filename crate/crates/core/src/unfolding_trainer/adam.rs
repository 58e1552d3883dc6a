use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("adam_beta1", self.beta1), ("adam_beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("adam_epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// First and second moment accumulators, one slot per scalar parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// A non-finite gradient entry aborts before anything is modified.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    let len = params.len();
    if grads.len() != len || state.first_moment.len() != len || state.second_moment.len() != len {
        return Err(Error::DimensionMismatch {
            what: "Adam parameter/gradient/state",
            expected: len,
            got: grads.len(),
        });
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            generation: 0,
            index,
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for i in 0..len {
        let g = grads[i];
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        *m = config.beta1 * *m + (1.0 - config.beta1) * g;
        *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut st = AdamState::new(3);
        adam_step(&mut p, &[0.0; 3], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..Default::default()
        };
        let mut p = vec![0.0, 0.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[3.0, -0.5], &mut st, &cfg).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-9);
        assert!((p[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn constant_gradient_step_tends_to_learning_rate() {
        // Simulate the recurrence directly: with g constant, m̂ → g and
        // v̂ → g², so each step approaches lr.
        let cfg = AdamConfig {
            learning_rate: 1e-3,
            ..Default::default()
        };
        let mut p = vec![0.0];
        let mut st = AdamState::new(1);
        let mut last = 0.0;
        for _ in 0..5000 {
            let before = p[0];
            adam_step(&mut p, &[0.37], &mut st, &cfg).unwrap();
            last = before - p[0];
        }
        assert!((last / cfg.learning_rate - 1.0).abs() < 1e-6, "step {last}");
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = vec![1.0, 1.0];
        let mut st = AdamState::new(2);
        let err = adam_step(&mut p, &[0.1, f64::NAN], &mut st, &AdamConfig::default());
        assert!(matches!(err, Err(Error::NonFiniteGradient { index: 1, .. })));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(st.step, 0);
        assert!(adam_step(&mut p, &[0.1], &mut st, &AdamConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig::default().validate().is_ok());
        let bad = AdamConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = AdamConfig {
            beta2: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
