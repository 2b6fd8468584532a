//! Classification losses with their exact gradients.

use crate::error::{Error, Result};
use crate::nn::activation::sigmoid;
use crate::tensor::Tensor;

/// Numerically stable softmax cross-entropy.
///
/// Returns `(-log softmax(logits)[true_class], softmax(logits) - onehot)`.
pub fn softmax_cross_entropy(logits: &Tensor, true_class: usize) -> Result<(f64, Tensor)> {
    if true_class >= logits.len() {
        return Err(Error::Contract(format!(
            "true class {true_class} out of range for {} logits",
            logits.len()
        )));
    }
    let max = logits
        .data()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.data().iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits.data()[true_class] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[true_class] -= 1.0;
    Ok((loss, Tensor::vector(grad)))
}

/// Binary cross-entropy on a sigmoid score.
///
/// `score` must lie strictly inside (0,1), which the sigmoid output
/// guarantees. Returns `(loss, d loss / d score)`. Training paths should
/// prefer [`bce_from_logit`], which fuses the sigmoid for stability.
pub fn bce_loss(score: f64, target: bool) -> (f64, f64) {
    debug_assert!(score > 0.0 && score < 1.0, "score {score} outside (0,1)");
    let t = if target { 1.0 } else { 0.0 };
    let loss = -(t * score.ln() + (1.0 - t) * (1.0 - score).ln());
    let dscore = (score - t) / (score * (1.0 - score));
    (loss, dscore)
}

/// Binary cross-entropy composed with the final sigmoid, evaluated from the
/// pre-activation. Stable for any finite logit.
///
/// Returns `(loss, d loss / d logit)` where the gradient is simply
/// `sigmoid(logit) - target`.
pub fn bce_from_logit(logit: f64, target: bool) -> (f64, f64) {
    let t = if target { 1.0 } else { 0.0 };
    let loss = logit.max(0.0) - logit * t + (-logit.abs()).exp().ln_1p();
    let dlogit = sigmoid(logit) - t;
    (loss, dlogit)
}
