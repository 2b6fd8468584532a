//! SGD with momentum and coupled weight decay.
//!
//! Per parameter: `g' = grad + wd * param`, `v' = momentum * v + g'`,
//! `param' = param - lr * v'`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::mlp::{MlpGradients, MlpModel};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0,1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Optimizer state for one model: a velocity buffer mirroring every
/// parameter tensor, zero-initialized.
#[derive(Debug, Clone)]
pub struct SgdState {
    cfg: SgdConfig,
    /// One buffer per parameter tensor, in the model's canonical order
    /// (layer 0 weights, layer 0 bias, layer 1 weights, ...).
    velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(model: &MlpModel, cfg: SgdConfig) -> Result<Self> {
        cfg.validate()?;
        let velocity = model
            .layers
            .iter()
            .flat_map(|l| [vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]])
            .collect();
        Ok(SgdState { cfg, velocity })
    }

    pub fn config(&self) -> SgdConfig {
        self.cfg
    }

    /// Applies one update to every parameter of `model`.
    pub fn step(&mut self, model: &mut MlpModel, grads: &MlpGradients) -> Result<()> {
        if grads.layers.len() != model.layers.len() {
            return Err(Error::Contract(format!(
                "gradients cover {} layers, model has {}",
                grads.layers.len(),
                model.layers.len()
            )));
        }
        for (idx, (layer, g)) in model.layers.iter_mut().zip(&grads.layers).enumerate() {
            if g.d_weights.len() != layer.weights.len() || g.d_bias.len() != layer.bias.len() {
                return Err(Error::Contract(format!(
                    "gradient shape mismatch at layer {idx}"
                )));
            }
            update(
                layer.weights.data_mut(),
                g.d_weights.data(),
                &mut self.velocity[2 * idx],
                self.cfg,
            );
            update(
                layer.bias.data_mut(),
                g.d_bias.data(),
                &mut self.velocity[2 * idx + 1],
                self.cfg,
            );
        }
        Ok(())
    }
}

/// The raw update rule on flat buffers.
pub(crate) fn update(params: &mut [f64], grads: &[f64], velocity: &mut [f64], cfg: SgdConfig) {
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity) {
        let adjusted = g + cfg.weight_decay * *p;
        *v = cfg.momentum * *v + adjusted;
        *p -= cfg.learning_rate * *v;
    }
}
