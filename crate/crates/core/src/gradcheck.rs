//! Central finite-difference check of the analytic GRU gradients.

use crate::gru::{mse_and_grad, segment_backward, segment_forward, Gradients, GruModel, HiddenState};
use crate::linalg::Matrix;

pub const FD_STEP: f64 = 1e-5;

/// MSE of one segment forward from `h0`.
pub fn segment_loss(model: &GruModel, x: &Matrix, y: &Matrix, h0: &HiddenState) -> f64 {
    let out = segment_forward(model, x, h0).expect("gradcheck inputs must be consistent");
    mse_and_grad(&out.yhat, y, 1.0).0
}

/// Analytic gradient of the segment MSE.
pub fn analytic_gradient(model: &GruModel, x: &Matrix, y: &Matrix, h0: &HiddenState) -> Gradients {
    let out = segment_forward(model, x, h0).expect("gradcheck inputs must be consistent");
    let (_, dy) = mse_and_grad(&out.yhat, y, 1.0);
    segment_backward(model, &out.cache, &dy).expect("cache matches model")
}

/// Max over parameters of `|a − n| / max(|a|, |n|, 1e-8)` between backprop and
/// central differences.
pub fn gradcheck(model: &GruModel, x: &Matrix, y: &Matrix, h0: &HiddenState) -> f64 {
    let analytic = analytic_gradient(model, x, y, h0);
    gradcheck_against(model, x, y, h0, &analytic)
}

/// Same as [`gradcheck`] but compares against a caller-supplied gradient.
pub fn gradcheck_against(
    model: &GruModel,
    x: &Matrix,
    y: &Matrix,
    h0: &HiddenState,
    analytic: &Gradients,
) -> f64 {
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (k, grad) in analytic.tensors().iter().enumerate() {
        for i in 0..grad.len() {
            let orig = probe.tensors()[k][i];
            probe.tensors_mut()[k][i] = orig + FD_STEP;
            let plus = segment_loss(&probe, x, y, h0);
            probe.tensors_mut()[k][i] = orig - FD_STEP;
            let minus = segment_loss(&probe, x, y, h0);
            probe.tensors_mut()[k][i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = grad[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}
