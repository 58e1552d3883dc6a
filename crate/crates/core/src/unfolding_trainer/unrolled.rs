//! Forward and reverse passes through the unrolled THS and TPG recursions.
//!
//! A mini-batch shares one channel, so the per-sample vectors are stacked as
//! columns and every layer is two dense matrix products. The backward passes
//! are written out by hand: `tanh' = 1 − tanh²`, and the linear maps
//! `s ↦ Hᵀ(y − Hs)` and `s ↦ W(y − Hs)` transpose to `−HᵀH` and `−HᵀWᵀ`.

use nalgebra::DMatrix;

use crate::detectors::{regularized_pseudo_inverse, ThsParams, TpgParams, TpgVariant};
use crate::error::{check_len, Error, Result};
use crate::system_model::RealChannel;

/// Columns of `x` are transmitted vectors, columns of `y` the observations.
#[derive(Debug, Clone)]
pub struct Batch {
    pub channel: RealChannel,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub sigma2: f64,
}

impl Batch {
    pub fn new(channel: RealChannel, x: DMatrix<f64>, y: DMatrix<f64>, sigma2: f64) -> Result<Self> {
        check_len("batch x rows", channel.cols(), x.nrows())?;
        check_len("batch y rows", channel.rows(), y.nrows())?;
        check_len("batch size", x.ncols(), y.ncols())?;
        if x.ncols() == 0 {
            return Err(Error::InvalidConfig("batch must contain at least one sample".into()));
        }
        Ok(Self {
            channel,
            x,
            y,
            sigma2,
        })
    }

    pub fn size(&self) -> usize {
        self.x.ncols()
    }
}

/// Batch MSE `mean_b N⁻¹‖s_out − x‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub mse: f64,
}

fn mse(s: &DMatrix<f64>, x: &DMatrix<f64>) -> LossValue {
    let scale = (x.nrows() * x.ncols()) as f64;
    LossValue {
        mse: (s - x).norm_squared() / scale,
    }
}

fn check_depth(depth_used: usize, depth: usize) -> Result<()> {
    if depth_used == 0 || depth_used > depth {
        return Err(Error::ParameterDomain(format!(
            "depth_used = {depth_used} must lie in 1..={depth}"
        )));
    }
    Ok(())
}

fn ensure_finite(m: &DMatrix<f64>, iteration: usize) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { iteration })
    }
}

/// `s ← y − H s` on whole batches.
fn residual(h: &DMatrix<f64>, y: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    let mut r = y.clone();
    r.gemm(-1.0, h, s, 1.0);
    r
}

/// Saved state of a THS forward pass.
#[derive(Debug, Clone)]
pub struct ThsActivations<'a> {
    pub channel: &'a RealChannel,
    pub depth_used: usize,
    /// `u_0..=u_D`
    pub u: Vec<DMatrix<f64>>,
    /// `s_0..=s_D`
    pub s: Vec<DMatrix<f64>>,
    /// `Hᵀ(y − H s_t)` for `t = 0..D`
    pub grad: Vec<DMatrix<f64>>,
}

/// Gradient of the loss with respect to every THS parameter; entries for
/// layers at or beyond the trained depth are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub d_beta: Vec<f64>,
    pub d_eta: Vec<f64>,
    pub d_zeta: Vec<f64>,
}

impl ParamGradient {
    /// Same layout as [`ThsParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.d_beta.clone();
        v.extend_from_slice(&self.d_eta);
        v.extend_from_slice(&self.d_zeta);
        v
    }
}

/// Runs `depth_used` THS layers on every column and keeps the intermediates.
pub fn forward_unrolled<'a>(
    channel: &'a RealChannel,
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    params: &ThsParams,
    depth_used: usize,
) -> Result<(LossValue, ThsActivations<'a>)> {
    check_depth(depth_used, params.depth())?;
    check_len("batch y rows", channel.rows(), y.nrows())?;
    check_len("batch x rows", channel.cols(), x.nrows())?;
    check_len("batch size", y.ncols(), x.ncols())?;
    let h = channel.matrix();
    let zeros = DMatrix::zeros(channel.cols(), x.ncols());
    let mut acts = ThsActivations {
        channel,
        depth_used,
        u: vec![zeros.clone()],
        s: vec![zeros],
        grad: Vec::with_capacity(depth_used),
    };
    for t in 0..depth_used {
        let (beta, eta, zeta) = (params.beta()[t], params.eta()[t], params.zeta()[t]);
        let g = h.tr_mul(&residual(h, y, &acts.s[t]));
        let mut u = &acts.u[t] * zeta;
        u.zip_apply(&g, |ui, gi| *ui += eta * gi);
        ensure_finite(&u, t + 1)?;
        let s = u.map(|v| (beta * v).tanh());
        acts.grad.push(g);
        acts.u.push(u);
        acts.s.push(s);
    }
    Ok((mse(&acts.s[depth_used], x), acts))
}

/// Reverse accumulation through the layers recorded in `acts`.
pub fn backward_gradients(
    acts: &ThsActivations<'_>,
    params: &ThsParams,
    x: &DMatrix<f64>,
) -> Result<ParamGradient> {
    let depth = params.depth();
    let d = acts.depth_used;
    if acts.s.len() != d + 1 || acts.u.len() != d + 1 || acts.grad.len() != d || d > depth {
        return Err(Error::InvalidConfig(
            "activations do not describe a completed forward pass".into(),
        ));
    }
    let h = acts.channel.matrix();
    let scale = 2.0 / (x.nrows() * x.ncols()) as f64;
    let mut out = ParamGradient {
        d_beta: vec![0.0; depth],
        d_eta: vec![0.0; depth],
        d_zeta: vec![0.0; depth],
    };
    let mut ds = (&acts.s[d] - x) * scale;
    let mut du = DMatrix::<f64>::zeros(x.nrows(), x.ncols());
    for t in (0..d).rev() {
        let (beta, eta, zeta) = (params.beta()[t], params.eta()[t], params.zeta()[t]);
        let s_next = &acts.s[t + 1];
        // a = ds ⊙ (1 − s²)
        let mut a = ds;
        a.zip_apply(s_next, |ai, si| *ai *= 1.0 - si * si);
        out.d_beta[t] = a.dot(&acts.u[t + 1]);
        du.zip_apply(&a, |di, ai| *di += beta * ai);
        out.d_zeta[t] = du.dot(&acts.u[t]);
        out.d_eta[t] = du.dot(&acts.grad[t]);
        ds = h.tr_mul(&(h * &du)) * (-eta);
        du *= zeta;
    }
    Ok(out)
}

/// Loss at depth `depth_used` without retaining activations.
pub fn ths_loss(batch: &Batch, params: &ThsParams, depth_used: usize) -> Result<f64> {
    forward_unrolled(&batch.channel, &batch.y, &batch.x, params, depth_used).map(|(l, _)| l.mse)
}

/// Saved state of a TPG forward pass.
#[derive(Debug, Clone)]
pub struct TpgActivations {
    pub depth_used: usize,
    /// `s_0..=s_D`
    pub s: Vec<DMatrix<f64>>,
    /// `r_0..r_{D-1}`
    pub r: Vec<DMatrix<f64>>,
    /// `W(y − H s_t)`
    pub direction: Vec<DMatrix<f64>>,
    /// `W`, or `None` for `W = Hᵀ`.
    pub w: Option<DMatrix<f64>>,
}

/// Gradient with respect to `[γ_0.., θ_0..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TpgGradient {
    pub d_gamma: Vec<f64>,
    pub d_theta: Vec<f64>,
}

impl TpgGradient {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.d_gamma.clone();
        v.extend_from_slice(&self.d_theta);
        v
    }
}

pub fn tpg_forward(
    batch: &Batch,
    params: &TpgParams,
    depth_used: usize,
) -> Result<(LossValue, TpgActivations)> {
    check_depth(depth_used, params.depth())?;
    let h = batch.channel.matrix();
    let w = match params.variant() {
        TpgVariant::Scalable => None,
        TpgVariant::Lmmse => Some(regularized_pseudo_inverse(
            &batch.channel,
            params.alpha().unwrap_or(batch.sigma2 / 2.0),
        )?),
    };
    let mut acts = TpgActivations {
        depth_used,
        s: vec![DMatrix::zeros(batch.channel.cols(), batch.size())],
        r: Vec::with_capacity(depth_used),
        direction: Vec::with_capacity(depth_used),
        w,
    };
    for t in 0..depth_used {
        let res = residual(h, &batch.y, &acts.s[t]);
        let dir = match &acts.w {
            Some(w) => w * res,
            None => h.tr_mul(&res),
        };
        let mut r = acts.s[t].clone();
        let gamma = params.gamma()[t];
        r.zip_apply(&dir, |ri, di| *ri += gamma * di);
        ensure_finite(&r, t + 1)?;
        let beta = params.beta(t);
        acts.s.push(r.map(|v| (beta * v).tanh()));
        acts.r.push(r);
        acts.direction.push(dir);
    }
    Ok((mse(&acts.s[depth_used], &batch.x), acts))
}

pub fn tpg_backward(acts: &TpgActivations, params: &TpgParams, batch: &Batch) -> Result<TpgGradient> {
    let depth = params.depth();
    let d = acts.depth_used;
    if acts.s.len() != d + 1 || acts.r.len() != d || d > depth {
        return Err(Error::InvalidConfig(
            "activations do not describe a completed forward pass".into(),
        ));
    }
    let h = batch.channel.matrix();
    let x = &batch.x;
    let scale = 2.0 / (x.nrows() * x.ncols()) as f64;
    let mut out = TpgGradient {
        d_gamma: vec![0.0; depth],
        d_theta: vec![0.0; depth],
    };
    let mut ds = (&acts.s[d] - x) * scale;
    for t in (0..d).rev() {
        let theta = params.theta()[t];
        let beta = 1.0 / theta.abs();
        let mut a = ds;
        a.zip_apply(&acts.s[t + 1], |ai, si| *ai *= 1.0 - si * si);
        // ∂(1/|θ|)/∂θ = −sign(θ)/θ²
        out.d_theta[t] = a.dot(&acts.r[t]) * (-theta.signum() / (theta * theta));
        let dr = a * beta;
        out.d_gamma[t] = dr.dot(&acts.direction[t]);
        let back = match &acts.w {
            Some(w) => h.tr_mul(&w.tr_mul(&dr)),
            None => h.tr_mul(&(h * &dr)),
        };
        ds = dr;
        let gamma = params.gamma()[t];
        ds.zip_apply(&back, |di, bi| *di -= gamma * bi);
    }
    Ok(out)
}

/// A detector family whose per-layer scalars can be trained by unfolding.
pub trait Unfoldable: Clone + Sized {
    fn depth(&self) -> usize;

    fn to_flat(&self) -> Vec<f64>;

    fn with_flat(&self, flat: &[f64]) -> Result<Self>;

    /// Restores domain constraints after an optimizer step.
    fn project(&self, flat: &mut [f64]);

    fn loss(&self, batch: &Batch, depth_used: usize) -> Result<f64>;

    /// Loss and flat gradient at depth `depth_used`.
    fn loss_and_gradient(&self, batch: &Batch, depth_used: usize) -> Result<(f64, Vec<f64>)>;
}

/// Lower bound on `β_t` (THS) and `|θ_t|` (TPG) kept after each update.
pub const POSITIVITY_FLOOR: f64 = 1e-6;

impl Unfoldable for ThsParams {
    fn depth(&self) -> usize {
        ThsParams::depth(self)
    }

    fn to_flat(&self) -> Vec<f64> {
        ThsParams::to_flat(self)
    }

    fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        ThsParams::from_flat(flat)
    }

    fn project(&self, flat: &mut [f64]) {
        let t = self.depth();
        for b in &mut flat[..t] {
            if *b < POSITIVITY_FLOOR {
                *b = POSITIVITY_FLOOR;
            }
        }
    }

    fn loss(&self, batch: &Batch, depth_used: usize) -> Result<f64> {
        ths_loss(batch, self, depth_used)
    }

    fn loss_and_gradient(&self, batch: &Batch, depth_used: usize) -> Result<(f64, Vec<f64>)> {
        let (loss, acts) = forward_unrolled(&batch.channel, &batch.y, &batch.x, self, depth_used)?;
        let grad = backward_gradients(&acts, self, &batch.x)?;
        Ok((loss.mse, grad.to_flat()))
    }
}

impl Unfoldable for TpgParams {
    fn depth(&self) -> usize {
        TpgParams::depth(self)
    }

    fn to_flat(&self) -> Vec<f64> {
        TpgParams::to_flat(self)
    }

    fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        TpgParams::with_flat(self, flat)
    }

    fn project(&self, flat: &mut [f64]) {
        let t = self.depth();
        for th in &mut flat[t..] {
            if th.abs() < POSITIVITY_FLOOR {
                *th = if *th < 0.0 { -POSITIVITY_FLOOR } else { POSITIVITY_FLOOR };
            }
        }
    }

    fn loss(&self, batch: &Batch, depth_used: usize) -> Result<f64> {
        tpg_forward(batch, self, depth_used).map(|(l, _)| l.mse)
    }

    fn loss_and_gradient(&self, batch: &Batch, depth_used: usize) -> Result<(f64, Vec<f64>)> {
        let (loss, acts) = tpg_forward(batch, self, depth_used)?;
        let grad = tpg_backward(&acts, self, batch)?;
        Ok((loss.mse, grad.to_flat()))
    }
}
