//! Relation-network classification over embedding vectors.
//!
//! The pipeline has two trainable stages. A fully-connected head (`basenet`)
//! concatenates the local and global context vectors of each record and learns
//! a multi-class classifier with imbalance-corrected sampling; its second
//! hidden layer doubles as an embedding extractor. A relation network
//! (`relnet`) then scores how strongly a target embedding relates to a
//! reference set drawn from each class, and classifies by argmax of the
//! per-class scores. Reference sets come either from the whole class
//! (all-to-all) or from the target's nearest neighbors within the class
//! (`knn`), which concentrates training on easy positives and hard negatives.
//!
//! Supporting modules: [`nn`] is the dense-network substrate (exact gradients,
//! dropout, SGD with momentum and weight decay), [`data`] handles synthetic
//! dataset generation, CSV interchange, group-level splitting and checkpoints,
//! [`metrics`] computes support-weighted precision/recall/F1, and [`pipeline`]
//! wires the stages together for the `relnn` CLI.
//!
//! With the default `parallel` feature, batch prediction, batch embedding and
//! sweep rows fan out over rayon; disabling the feature falls back to
//! sequential loops with bit-identical results.

pub mod basenet;
pub mod config;
pub mod data;
pub mod error;
pub mod knn;
pub mod metrics;
pub mod nn;
pub mod parallel;
pub mod pipeline;
pub mod relnet;
pub mod tensor;

pub use config::{GeneratorConfig, ProfileKind, RunConfig, StrategyKind};
pub use error::{Error, Result};
pub use tensor::Tensor;
