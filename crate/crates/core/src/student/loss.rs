use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::targets::TargetMatrix;

/// Row-wise log-softmax of `s / tau`.
fn log_softmax_rows(s: &Array2<f64>, tau: f64) -> Array2<f64> {
    let mut out = s.mapv(|v| v / tau);
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Cross entropy between the row distributions of `target / tau` and
/// `scores / tau`, averaged over rows. Also returns `d loss / d scores`.
pub fn soft_target_ce(scores: &Array2<f64>, target: &Array2<f64>, tau: f64) -> Result<(f64, Array2<f64>)> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::param(format!("tau_ce must be > 0, got {tau}")));
    }
    if scores.dim() != target.dim() {
        return Err(Error::shape(format!(
            "scores {:?} vs target {:?}",
            scores.dim(),
            target.dim()
        )));
    }
    let n = scores.nrows();
    if n == 0 {
        return Ok((0.0, Array2::zeros(scores.dim())));
    }
    let log_p = log_softmax_rows(scores, tau);
    let q = log_softmax_rows(target, tau).mapv(f64::exp);
    let loss = -(&q * &log_p).sum() / n as f64;
    let grad = (log_p.mapv(f64::exp) - &q) / (n as f64 * tau);
    Ok((loss, grad))
}

/// Mean row entropy of `softmax(target / tau)`, the floor of
/// [`soft_target_ce`] for a fixed target.
pub fn target_entropy(target: &Array2<f64>, tau: f64) -> f64 {
    let n = target.nrows();
    if n == 0 {
        return 0.0;
    }
    let log_q = log_softmax_rows(target, tau);
    -(log_q.mapv(f64::exp) * &log_q).sum() / n as f64
}

/// Loss between quantized rows `za` and real-valued rows `xb` of the other
/// modality, supervised by `t`: `CE(softmax(T/tau), softmax(za xb^T / tau))`.
pub fn cross_modal_loss(za: ArrayView2<f64>, xb: ArrayView2<f64>, t: &TargetMatrix, tau_ce: f64) -> Result<f64> {
    if za.ncols() != xb.ncols() {
        return Err(Error::shape(format!("{} vs {} columns", za.ncols(), xb.ncols())));
    }
    let scores = za.dot(&xb.t());
    Ok(soft_target_ce(&scores, t.values(), tau_ce)?.0)
}
