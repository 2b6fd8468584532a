//! Finite-difference verification of analytic gradients.

use crate::error::Result;
use crate::nn::mlp::{FlatParams, GradKind, Mode};
use crate::nn::{bce_from_logit, seeded, softmax_cross_entropy, MlpModel};
use crate::tensor::Tensor;

/// Central-difference step; tolerances throughout assume f64 precision.
pub const DEFAULT_STEP: f64 = 1e-5;

/// `|analytic - numeric| / max(|numeric|, 1e-6)`, with the finite-difference
/// value as the reference. The floor keeps noise on near-zero gradients from
/// registering as error.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1e-6)
}

/// Overwrites every parameter with a uniform draw from `±scale`.
///
/// Freshly built layers have zero biases, which parks ReLU pre-activations
/// exactly on the kink whenever a unit's inputs all vanish; central
/// differences straddle the kink there and disagree with the one-sided
/// analytic derivative. Checking at fully random parameters avoids that
/// degenerate point.
pub fn randomize_params<M: FlatParams>(model: &mut M, scale: f64, rng: &mut crate::nn::SeededRng) {
    use rand::Rng;
    for idx in 0..model.param_count() {
        model.set_param(idx, rng.random_range(-scale..scale));
    }
}

/// Compares `analytic` against central finite differences of `loss` over
/// every parameter of `model`, returning the worst relative error.
///
/// `loss` must be deterministic given the parameters; fixed-mask dropout
/// qualifies, fresh random masks do not.
pub fn max_relative_error_fd<M, F>(model: &mut M, analytic: &[f64], step: f64, mut loss: F) -> f64
where
    M: FlatParams,
    F: FnMut(&M) -> f64,
{
    let n = model.param_count();
    assert_eq!(analytic.len(), n, "analytic gradient length mismatch");
    let mut worst = 0.0_f64;
    for idx in 0..n {
        let original = model.get_param(idx);
        model.set_param(idx, original + step);
        let plus = loss(model);
        model.set_param(idx, original - step);
        let minus = loss(model);
        model.set_param(idx, original);
        let numeric = (plus - minus) / (2.0 * step);
        worst = worst.max(relative_error(analytic[idx], numeric));
    }
    worst
}

/// Loss applied on top of the model output during a gradient check.
#[derive(Debug, Clone, Copy)]
pub enum GradcheckLoss {
    /// Softmax cross-entropy against a fixed class; for logit-output models.
    SoftmaxCe(usize),
    /// Sigmoid + BCE against a fixed target; for single-logit models whose
    /// final activation is the sigmoid.
    BceLogit(bool),
}

/// Checks every weight and bias of `model` at the given input, with dropout
/// masks frozen by `mask_seed`. Returns the max relative error.
pub fn gradcheck_mlp(
    model: &mut MlpModel,
    input: &Tensor,
    loss_kind: GradcheckLoss,
    mask_seed: u64,
) -> Result<f64> {
    let eval = |m: &MlpModel| -> Result<f64> {
        let mut rng = seeded(mask_seed);
        let (output, cache) = m.forward(input, Mode::Train, &mut rng)?;
        Ok(match loss_kind {
            GradcheckLoss::SoftmaxCe(class) => softmax_cross_entropy(&output, class)?.0,
            GradcheckLoss::BceLogit(target) => {
                bce_from_logit(cache.final_pre_activation()[0], target).0
            }
        })
    };

    // Analytic gradients at the current parameters.
    let analytic = {
        let mut rng = seeded(mask_seed);
        let (output, cache) = model.forward(input, Mode::Train, &mut rng)?;
        let grads = match loss_kind {
            GradcheckLoss::SoftmaxCe(class) => {
                let (_, grad) = softmax_cross_entropy(&output, class)?;
                model.backward(&cache, &grad, GradKind::Output)?
            }
            GradcheckLoss::BceLogit(target) => {
                let (_, dlogit) = bce_from_logit(cache.final_pre_activation()[0], target);
                model.backward(&cache, &Tensor::vector(vec![dlogit]), GradKind::Logit)?
            }
        };
        MlpModel::flat_grads(&grads)
    };

    Ok(max_relative_error_fd(model, &analytic, DEFAULT_STEP, |m| {
        eval(m).expect("forward succeeded at unperturbed parameters")
    }))
}
