//! Minimal dense-network substrate: forward passes, exact reverse-mode
//! gradients, inverted dropout, classification losses, and the SGD optimizer
//! (momentum + weight decay) used by every trainable stage.

mod activation;
mod gradcheck;
mod layer;
mod loss;
mod mlp;
mod rng;
mod sgd;

pub use activation::Activation;
pub use gradcheck::{
    gradcheck_mlp, max_relative_error_fd, randomize_params, relative_error, GradcheckLoss,
    DEFAULT_STEP,
};
pub use layer::DenseLayer;
pub use loss::{bce_from_logit, bce_loss, softmax_cross_entropy};
pub use mlp::{ActivationCache, FlatParams, GradKind, LayerGrads, MlpGradients, MlpModel, Mode};
pub use rng::{derive_rng, fnv1a64, seeded, SeededRng};
pub use sgd::{SgdConfig, SgdState};
