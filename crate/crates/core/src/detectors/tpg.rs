use nalgebra::{DMatrix, DVector};

use super::{regularized_pseudo_inverse, DetectionResult, DetectorTrace, TpgParams, TpgVariant};
use crate::error::{check_len, Error, Result};
use crate::system_model::RealChannel;

/// TPG with `W = Hᵀ`:
/// `r_t = s_t + γ_t Hᵀ(y − H s_t)`, `s_{t+1} = tanh(r_t / |θ_t|)`, `s_0 = 0`.
pub fn scalable_tpg_detect(
    channel: &RealChannel,
    y: &DVector<f64>,
    params: &TpgParams,
    trace: bool,
) -> Result<DetectionResult> {
    if params.variant() != TpgVariant::Scalable {
        return Err(Error::ParameterDomain(
            "scalable_tpg_detect requires the scalable variant".into(),
        ));
    }
    run(channel, y, params, None, trace)
}

/// TPG with the LMMSE-like matrix `W = Hᵀ(HHᵀ + αI)⁻¹`, built once per call.
/// `sigma2` supplies `α = σ_w²/2` when the parameters leave α unset.
pub fn tpg_detect(
    channel: &RealChannel,
    y: &DVector<f64>,
    sigma2: f64,
    params: &TpgParams,
    trace: bool,
) -> Result<DetectionResult> {
    if params.variant() != TpgVariant::Lmmse {
        return Err(Error::ParameterDomain(
            "tpg_detect requires the lmmse variant".into(),
        ));
    }
    let alpha = params.alpha().unwrap_or(sigma2 / 2.0);
    let w = regularized_pseudo_inverse(channel, alpha)?;
    run(channel, y, params, Some(&w), trace)
}

fn run(
    channel: &RealChannel,
    y: &DVector<f64>,
    params: &TpgParams,
    w: Option<&DMatrix<f64>>,
    trace: bool,
) -> Result<DetectionResult> {
    check_len("y", channel.rows(), y.len())?;
    let h = channel.matrix();
    let cols = channel.cols();
    let depth = params.depth();

    let mut s = DVector::zeros(cols);
    let mut r = DVector::zeros(cols);
    let mut residual = DVector::zeros(channel.rows());
    let mut record = trace.then(|| DetectorTrace::with_capacity(depth));
    if let Some(tr) = record.as_mut() {
        tr.record(channel, y, &r, &s);
    }
    for t in 0..depth {
        residual.gemv(1.0, h, &s, 0.0);
        residual.zip_apply(y, |res, yi| *res = yi - *res);
        match w {
            Some(w) => r.gemv(1.0, w, &residual, 0.0),
            None => r.gemv_tr(1.0, h, &residual, 0.0),
        }
        r.axpy(1.0, &s, params.gamma()[t]);
        if !r.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { iteration: t + 1 });
        }
        let beta = params.beta(t);
        s.zip_apply(&r, |si, ri| *si = (beta * ri).tanh());
        if let Some(tr) = record.as_mut() {
            tr.record(channel, y, &r, &s);
        }
    }
    Ok(DetectionResult::from_soft(s, record))
}
