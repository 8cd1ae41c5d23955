//! Binary cross entropy over logits.

use super::layers::Tensor4;
use super::sigmoid;
use crate::error::{Error, Result};

/// Mean binary cross entropy between logits and 0/1 targets, together with
/// the gradient w.r.t. the logits.
///
/// Per element `l = max(z, 0) - t z + ln(1 + e^{-|z|})`, the numerically
/// stable form of `-[t ln s(z) + (1 - t) ln(1 - s(z))]`; the gradient is
/// `(s(z) - t) / N` with `N` the element count.
pub fn bce_with_logits(logits: &Tensor4, targets: &Tensor4) -> Result<(f64, Tensor4)> {
    if logits.dim() != targets.dim() {
        return Err(Error::ShapeMismatch(format!(
            "logits {:?} vs targets {:?}",
            logits.dim(),
            targets.dim()
        )));
    }
    if targets.iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::NonBinaryTarget);
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor4::zeros(logits.raw_dim());
    ndarray::Zip::from(&mut grad)
        .and(logits)
        .and(targets)
        .for_each(|g, &z, &t| {
            loss += z.max(0.0) - t * z + (-z.abs()).exp().ln_1p();
            *g = (sigmoid(z) - t) / n;
        });
    Ok((loss / n, grad))
}
