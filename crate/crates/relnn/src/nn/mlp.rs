//! Multi-layer perceptron: stacked dense layers with inverted dropout between
//! hidden layers and exact reverse-mode gradients.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, SeededRng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// What the gradient passed to [`MlpModel::backward`] is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradKind {
    /// Gradient w.r.t. the post-activation output (the usual case).
    Output,
    /// Gradient w.r.t. the final layer's pre-activation. Used to fuse the
    /// last sigmoid with the BCE loss so saturation never produces NaN.
    Logit,
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
    /// Dropout probability applied between hidden layers in `Train` mode,
    /// with kept units scaled by `1/(1-p)` so `Eval` needs no rescaling.
    pub dropout_rate: f64,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    /// Input actually fed to each layer (after the previous layer's dropout).
    layer_inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    post_activations: Vec<Vec<f64>>,
    /// Dropout mask applied to each non-final layer output; entries are the
    /// inverted-scaling factors (0 or 1/(1-p)). `None` when no mask applied.
    masks: Vec<Option<Vec<f64>>>,
}

impl ActivationCache {
    /// Post-activation output of layer `idx`, before any dropout.
    pub fn layer_output(&self, idx: usize) -> &[f64] {
        &self.post_activations[idx]
    }

    /// Pre-activation of the final layer (the logit(s)).
    pub fn final_pre_activation(&self) -> &[f64] {
        self.pre_activations.last().expect("cache is never empty")
    }
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub d_weights: Tensor,
    pub d_bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub layers: Vec<LayerGrads>,
    /// Gradient w.r.t. the model input; lets callers chain models.
    pub input: Tensor,
}

impl MlpGradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        MlpGradients {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrads {
                    d_weights: Tensor::zeros(l.weights.shape().to_vec()),
                    d_bias: Tensor::zeros(l.bias.shape().to_vec()),
                })
                .collect(),
            input: Tensor::zeros(vec![model.in_dim()]),
        }
    }

    /// Element-wise `self += other`, for accumulating over reference-set
    /// members or mini-batches.
    pub fn accumulate(&mut self, other: &MlpGradients) {
        debug_assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.d_weights.data_mut().iter_mut().zip(b.d_weights.data()) {
                *x += y;
            }
            for (x, y) in a.d_bias.data_mut().iter_mut().zip(b.d_bias.data()) {
                *x += y;
            }
        }
        for (x, y) in self.input.data_mut().iter_mut().zip(other.input.data()) {
            *x += y;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            for x in g.d_weights.data_mut() {
                *x *= factor;
            }
            for x in g.d_bias.data_mut() {
                *x *= factor;
            }
        }
        for x in self.input.data_mut() {
            *x *= factor;
        }
    }
}

impl MlpModel {
    /// Stacks freshly initialized dense layers: `dims = [in, h1, ..., out]`
    /// with one activation per layer.
    pub fn new(
        dims: &[usize],
        activations: &[Activation],
        dropout_rate: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::Config(format!(
                "mlp needs n+1 dims for n activations, got {} dims / {} activations",
                dims.len(),
                activations.len()
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0,1), got {dropout_rate}"
            )));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(pair, &act)| DenseLayer::init(pair[0], pair[1], act, rng))
            .collect();
        Ok(MlpModel {
            layers,
            dropout_rate,
        })
    }

    /// Wraps existing layers, validating adjacent dimension compatibility.
    pub fn from_layers(layers: Vec<DenseLayer>, dropout_rate: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("mlp needs at least one layer".into()));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0,1), got {dropout_rate}"
            )));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(
                    "adjacent mlp layers",
                    pair[0].out_dim(),
                    pair[1].in_dim(),
                ));
            }
        }
        Ok(MlpModel {
            layers,
            dropout_rate,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    /// Full forward pass. In `Train` mode, dropout masks are drawn from `rng`
    /// for every non-final layer output; in `Eval` mode the pass is fully
    /// deterministic and `rng` is untouched.
    pub fn forward(
        &self,
        input: &Tensor,
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<(Tensor, ActivationCache)> {
        self.forward_inner(input, mode, Some(rng))
    }

    /// Deterministic eval-mode forward without cache bookkeeping overhead.
    pub fn eval(&self, input: &Tensor) -> Result<Tensor> {
        if input.len() != self.in_dim() {
            return Err(Error::shape("mlp input", self.in_dim(), input.len()));
        }
        let mut current = input.data().to_vec();
        for layer in &self.layers {
            let (_, post) = layer.forward_cached(&Tensor::vector(current))?;
            current = post;
        }
        Ok(Tensor::vector(current))
    }

    fn forward_inner(
        &self,
        input: &Tensor,
        mode: Mode,
        mut rng: Option<&mut SeededRng>,
    ) -> Result<(Tensor, ActivationCache)> {
        if input.len() != self.in_dim() {
            return Err(Error::shape("mlp input", self.in_dim(), input.len()));
        }
        let n = self.layers.len();
        let mut cache = ActivationCache {
            layer_inputs: Vec::with_capacity(n),
            pre_activations: Vec::with_capacity(n),
            post_activations: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
        };
        let mut current = input.data().to_vec();
        for (idx, layer) in self.layers.iter().enumerate() {
            let layer_input = Tensor::vector(current);
            let (pre, post) = layer.forward_cached(&layer_input)?;
            let is_last = idx == n - 1;
            let mask = if !is_last && mode == Mode::Train && self.dropout_rate > 0.0 {
                let rng = rng
                    .as_deref_mut()
                    .ok_or_else(|| Error::Contract("train-mode forward needs an rng".into()))?;
                let keep = 1.0 - self.dropout_rate;
                let scale = 1.0 / keep;
                Some(
                    post.iter()
                        .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
                        .collect::<Vec<f64>>(),
                )
            } else {
                None
            };
            current = match &mask {
                Some(m) => post.iter().zip(m).map(|(h, f)| h * f).collect(),
                None => post.clone(),
            };
            cache.layer_inputs.push(layer_input.into_data());
            cache.pre_activations.push(pre);
            cache.post_activations.push(post);
            cache.masks.push(mask);
        }
        Ok((Tensor::vector(current), cache))
    }

    /// Reverse-mode gradients for every weight and bias, plus the input
    /// gradient. `cache` must come from a forward pass of this model;
    /// dropout masks recorded there are reapplied.
    pub fn backward(
        &self,
        cache: &ActivationCache,
        output_grad: &Tensor,
        kind: GradKind,
    ) -> Result<MlpGradients> {
        let mut grads = MlpGradients::zeros_like(self);
        self.backward_accumulate(cache, output_grad, kind, &mut grads)?;
        Ok(grads)
    }

    /// Like [`MlpModel::backward`], but adds into `acc` instead of
    /// allocating. The hot path when summing gradients over a reference set
    /// or mini-batch.
    pub fn backward_accumulate(
        &self,
        cache: &ActivationCache,
        output_grad: &Tensor,
        kind: GradKind,
        acc: &mut MlpGradients,
    ) -> Result<()> {
        let n = self.layers.len();
        if cache.layer_inputs.len() != n || acc.layers.len() != n {
            return Err(Error::Contract(format!(
                "stale cache: {} layers cached, model has {}",
                cache.layer_inputs.len(),
                n
            )));
        }
        for (idx, layer) in self.layers.iter().enumerate() {
            if cache.layer_inputs[idx].len() != layer.in_dim()
                || cache.pre_activations[idx].len() != layer.out_dim()
            {
                return Err(Error::Contract(format!(
                    "stale cache: layer {idx} dims do not match model"
                )));
            }
        }
        if output_grad.len() != self.out_dim() {
            return Err(Error::shape("mlp output grad", self.out_dim(), output_grad.len()));
        }

        let mut upstream = output_grad.data().to_vec();
        let mut dz = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let is_last = idx == n - 1;
            // Dropout applied to this layer's output is undone first.
            if let Some(mask) = &cache.masks[idx] {
                for (g, f) in upstream.iter_mut().zip(mask) {
                    *g *= f;
                }
            }
            let pre = &cache.pre_activations[idx];
            let post = &cache.post_activations[idx];
            if is_last && kind == GradKind::Logit {
                dz.clone_from(&upstream);
            } else {
                dz.clear();
                dz.extend(
                    upstream
                        .iter()
                        .zip(pre.iter().zip(post))
                        .map(|(g, (&z, &h))| g * layer.activation.derivative(z, h)),
                );
            }
            let x = &cache.layer_inputs[idx];
            let in_dim = layer.in_dim();
            let slot = &mut acc.layers[idx];
            for (o, dzo) in dz.iter().enumerate() {
                let row = &mut slot.d_weights.data_mut()[o * in_dim..(o + 1) * in_dim];
                for (w, xi) in row.iter_mut().zip(x) {
                    *w += dzo * xi;
                }
            }
            for (b, dzo) in slot.d_bias.data_mut().iter_mut().zip(&dz) {
                *b += dzo;
            }
            let mut d_input = vec![0.0; in_dim];
            for (o, dzo) in dz.iter().enumerate() {
                let row = layer.weights.row(o);
                for (s, w) in d_input.iter_mut().zip(row) {
                    *s += dzo * w;
                }
            }
            upstream = d_input;
        }
        for (s, g) in acc.input.data_mut().iter_mut().zip(&upstream) {
            *s += g;
        }
        Ok(())
    }
}

/// Uniform flat view over a parameter collection, used by the
/// finite-difference gradient checker and the optimizer.
pub trait FlatParams {
    fn param_count(&self) -> usize;
    fn get_param(&self, idx: usize) -> f64;
    fn set_param(&mut self, idx: usize, value: f64);
}

impl MlpModel {
    /// Parameter tensors in canonical order: layer 0 weights, layer 0 bias,
    /// layer 1 weights, ... Gradients follow the same order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.shape().to_vec(), l.bias.shape().to_vec()])
            .collect()
    }

    pub fn flat_grads(grads: &MlpGradients) -> Vec<f64> {
        grads
            .layers
            .iter()
            .flat_map(|g| g.d_weights.data().iter().chain(g.d_bias.data()).copied())
            .collect()
    }
}

impl FlatParams for MlpModel {
    fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn get_param(&self, idx: usize) -> f64 {
        let mut offset = idx;
        for layer in &self.layers {
            if offset < layer.weights.len() {
                return layer.weights.data()[offset];
            }
            offset -= layer.weights.len();
            if offset < layer.bias.len() {
                return layer.bias.data()[offset];
            }
            offset -= layer.bias.len();
        }
        panic!("parameter index {idx} out of range");
    }

    fn set_param(&mut self, idx: usize, value: f64) {
        let mut offset = idx;
        for layer in &mut self.layers {
            if offset < layer.weights.len() {
                layer.weights.data_mut()[offset] = value;
                return;
            }
            offset -= layer.weights.len();
            if offset < layer.bias.len() {
                layer.bias.data_mut()[offset] = value;
                return;
            }
            offset -= layer.bias.len();
        }
        panic!("parameter index {idx} out of range");
    }
}
