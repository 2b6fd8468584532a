//! The dense fc-layer primitive: `h = activation(W x + b)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, SeededRng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// Row-major `[out_dim, in_dim]` weight matrix.
    pub weights: Tensor,
    /// `[out_dim]` bias vector.
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    /// Builds a layer with the given parameters, checking shape consistency.
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::Contract(format!(
                "dense layer weights must be 2-d, got shape {:?}",
                weights.shape()
            )));
        }
        if bias.shape() != [weights.shape()[0]] {
            return Err(Error::shape(
                "DenseLayer bias",
                weights.shape()[0],
                bias.len(),
            ));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform initialization: weights in `±sqrt(6/(fan_in+fan_out))`,
    /// biases zero.
    pub fn init(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut SeededRng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data: Vec<f64> = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        DenseLayer {
            weights: Tensor::matrix(out_dim, in_dim, data).expect("consistent by construction"),
            bias: Tensor::zeros(vec![out_dim]),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    /// `activation(W x + b)` for a single input vector.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (_, h) = self.forward_cached(input)?;
        Ok(Tensor::vector(h))
    }

    /// Forward pass that also returns the pre-activation, for backprop.
    pub(crate) fn forward_cached(&self, input: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        if input.len() != self.in_dim() {
            return Err(Error::shape(
                "dense forward input",
                self.in_dim(),
                input.len(),
            ));
        }
        let x = input.data();
        let mut pre = Vec::with_capacity(self.out_dim());
        let mut post = Vec::with_capacity(self.out_dim());
        for o in 0..self.out_dim() {
            let row = self.weights.row(o);
            let mut sum = self.bias.data()[o];
            for (w, xi) in row.iter().zip(x) {
                sum += w * xi;
            }
            pre.push(sum);
            post.push(self.activation.apply(sum));
        }
        Ok((pre, post))
    }
}
