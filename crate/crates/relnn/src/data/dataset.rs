//! Core dataset types: annotated records with two context vectors, and the
//! embedding sets the relation-network stage consumes.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One annotated region of interest: two context vectors plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    /// Scan identity; the unit of train/test splitting.
    pub group_id: String,
    /// Class index in `[0, C)`.
    pub class: usize,
    pub local: Tensor,
    pub global: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<EmbeddingRecord>,
    pub class_names: Vec<String>,
    pub d_local: usize,
    pub d_global: usize,
}

impl Dataset {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Checks every structural invariant: dimensions, finiteness, label
    /// range, id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.records.len());
        for rec in &self.records {
            if rec.local.len() != self.d_local {
                return Err(Error::shape("record local vector", self.d_local, rec.local.len()));
            }
            if rec.global.len() != self.d_global {
                return Err(Error::shape(
                    "record global vector",
                    self.d_global,
                    rec.global.len(),
                ));
            }
            if !rec.local.is_finite() || !rec.global.is_finite() {
                return Err(Error::Contract(format!(
                    "record {} has non-finite features",
                    rec.id
                )));
            }
            if rec.class >= self.n_classes() {
                return Err(Error::Contract(format!(
                    "record {} has class {} but only {} classes declared",
                    rec.id,
                    rec.class,
                    self.n_classes()
                )));
            }
            if !seen.insert(rec.id.as_str()) {
                return Err(Error::Contract(format!("duplicate record id {}", rec.id)));
            }
        }
        Ok(())
    }
}

/// Per-class record counts and fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCounts {
    pub counts: Vec<usize>,
    pub fractions: Vec<f64>,
}

/// Counts records per class; fractions are zero for an empty dataset.
pub fn class_histogram(ds: &Dataset) -> ClassCounts {
    let mut counts = vec![0usize; ds.n_classes()];
    for rec in &ds.records {
        counts[rec.class] += 1;
    }
    let total = ds.records.len();
    let fractions = counts
        .iter()
        .map(|&c| {
            if total == 0 {
                0.0
            } else {
                c as f64 / total as f64
            }
        })
        .collect();
    ClassCounts { counts, fractions }
}

/// One record in embedding space (the head's second-hidden-layer output, or
/// any fixed vector for the k-NN and relation stages).
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub id: String,
    pub group_id: String,
    pub class: usize,
    pub vector: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub records: Vec<Embedding>,
    pub class_names: Vec<String>,
    pub dim: usize,
}

impl EmbeddingSet {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.records.len());
        for rec in &self.records {
            if rec.vector.len() != self.dim {
                return Err(Error::shape("embedding vector", self.dim, rec.vector.len()));
            }
            if !rec.vector.is_finite() {
                return Err(Error::Contract(format!(
                    "embedding {} has non-finite entries",
                    rec.id
                )));
            }
            if rec.class >= self.n_classes() {
                return Err(Error::Contract(format!(
                    "embedding {} has class {} but only {} classes declared",
                    rec.id,
                    rec.class,
                    self.n_classes()
                )));
            }
            if !seen.insert(rec.id.as_str()) {
                return Err(Error::Contract(format!("duplicate embedding id {}", rec.id)));
            }
        }
        Ok(())
    }
}
