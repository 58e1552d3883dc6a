use nalgebra::{DMatrix, DVector};

use super::DetectionResult;
use crate::error::{check_len, Error, Result};
use crate::system_model::RealChannel;

/// `W = Hᵀ(HHᵀ + αI)⁻¹`, an `N × M` matrix.
///
/// Solved through a Cholesky factorization of the `M × M` Gram matrix, so
/// `α = 0` works only when `H` has full row rank.
pub fn regularized_pseudo_inverse(channel: &RealChannel, alpha: f64) -> Result<DMatrix<f64>> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::ParameterDomain(format!(
            "regularizer must be finite and non-negative, got {alpha}"
        )));
    }
    let h = channel.matrix();
    if !h.iter().all(|v| v.is_finite()) {
        return Err(Error::LinearSolve("channel matrix has non-finite entries".into()));
    }
    let mut gram = h * h.transpose();
    for i in 0..gram.nrows() {
        gram[(i, i)] += alpha;
    }
    let chol = gram.cholesky().ok_or_else(|| {
        Error::LinearSolve(format!(
            "HHᵀ + {alpha}·I is not positive definite ({}×{})",
            h.nrows(),
            h.nrows()
        ))
    })?;
    // (HHᵀ + αI)⁻¹ H, transposed
    Ok(chol.solve(h).transpose())
}

/// Linear MMSE estimate `Hᵀ(HHᵀ + (σ_w²/2) I)⁻¹ y` followed by sign decisions.
pub fn mmse_detect(channel: &RealChannel, y: &DVector<f64>, sigma2: f64) -> Result<DetectionResult> {
    check_len("y", channel.rows(), y.len())?;
    let w = regularized_pseudo_inverse(channel, sigma2 / 2.0)?;
    Ok(DetectionResult::from_soft(w * y, None))
}
