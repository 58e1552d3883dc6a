use nalgebra::DVector;

use super::{DetectionResult, DetectorTrace, HsParams, ThsParams};
use crate::error::{check_len, Error, Result};
use crate::system_model::RealChannel;

/// One THS layer:
/// `u' = ζ u + η Hᵀ(y − H s)`, `s' = tanh(β u')`.
pub fn ths_step(
    u: &DVector<f64>,
    s: &DVector<f64>,
    channel: &RealChannel,
    y: &DVector<f64>,
    beta: f64,
    eta: f64,
    zeta: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_len("u", channel.cols(), u.len())?;
    check_len("s", channel.cols(), s.len())?;
    check_len("y", channel.rows(), y.len())?;
    let mut state = LayerState::new(channel);
    state.u.copy_from(u);
    state.s.copy_from(s);
    state.step(channel, y, beta, eta, zeta);
    Ok((state.u, state.s))
}

/// Runs `params.depth()` THS layers from `u₀ = s₀ = 0`.
pub fn ths_detect(
    channel: &RealChannel,
    y: &DVector<f64>,
    params: &ThsParams,
    trace: bool,
) -> Result<DetectionResult> {
    run(channel, y, params.depth(), trace, |t| {
        (params.beta()[t], params.eta()[t], params.zeta()[t])
    })
}

/// The untrained HS detector:
/// `u' = (1 + η/λ) u + η Hᵀ(y − H s)`, `s' = tanh(β u')`.
pub fn hs_detect(
    channel: &RealChannel,
    y: &DVector<f64>,
    params: &HsParams,
    trace: bool,
) -> Result<DetectionResult> {
    params.validate()?;
    let zeta = 1.0 + params.eta / params.lambda;
    run(channel, y, params.depth, trace, |_| (params.beta, params.eta, zeta))
}

/// Working buffers for the recursion; reused across layers.
struct LayerState {
    u: DVector<f64>,
    s: DVector<f64>,
    hs: DVector<f64>,
    grad: DVector<f64>,
}

impl LayerState {
    fn new(channel: &RealChannel) -> Self {
        let (rows, cols) = (channel.rows(), channel.cols());
        Self {
            u: DVector::zeros(cols),
            s: DVector::zeros(cols),
            hs: DVector::zeros(rows),
            grad: DVector::zeros(cols),
        }
    }

    fn step(&mut self, channel: &RealChannel, y: &DVector<f64>, beta: f64, eta: f64, zeta: f64) {
        let h = channel.matrix();
        self.hs.gemv(1.0, h, &self.s, 0.0);
        // hs <- y - Hs
        self.hs.zip_apply(y, |r, yi| *r = yi - *r);
        self.grad.gemv_tr(1.0, h, &self.hs, 0.0);
        self.u.axpy(eta, &self.grad, zeta);
        self.s.zip_apply(&self.u, |si, ui| *si = (beta * ui).tanh());
    }
}

fn run(
    channel: &RealChannel,
    y: &DVector<f64>,
    depth: usize,
    trace: bool,
    layer: impl Fn(usize) -> (f64, f64, f64),
) -> Result<DetectionResult> {
    check_len("y", channel.rows(), y.len())?;
    if depth == 0 {
        return Err(Error::ParameterDomain("depth T must be at least 1".into()));
    }
    let mut state = LayerState::new(channel);
    let mut record = trace.then(|| DetectorTrace::with_capacity(depth));
    if let Some(tr) = record.as_mut() {
        tr.record(channel, y, &state.u, &state.s);
    }
    for t in 0..depth {
        let (beta, eta, zeta) = layer(t);
        state.step(channel, y, beta, eta, zeta);
        if !state.u.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { iteration: t + 1 });
        }
        if let Some(tr) = record.as_mut() {
            tr.record(channel, y, &state.u, &state.s);
        }
    }
    Ok(DetectionResult::from_soft(state.s, record))
}
