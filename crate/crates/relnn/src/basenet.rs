//! The fc head: concatenates local and global context features, trains a
//! three-layer multi-class classifier with imbalance-corrected sampling, and
//! exposes its second hidden layer as the embedding fed to the relation
//! network.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{class_histogram, Dataset, Embedding, EmbeddingRecord, EmbeddingSet};
use crate::error::{Error, Result};
use crate::nn::{
    derive_rng, softmax_cross_entropy, Activation, GradKind, MlpModel, Mode, SeededRng, SgdConfig,
    SgdState,
};
use crate::parallel::par_map;
use crate::tensor::Tensor;

/// Three dense layers: two ReLU hidden layers and a logit layer. The second
/// hidden layer's post-activation output is the embedding handed downstream.
#[derive(Debug, Clone)]
pub struct BaseNetHead {
    pub mlp: MlpModel,
    pub embedding_dim: usize,
}

impl BaseNetHead {
    pub fn new(
        d_local: usize,
        d_global: usize,
        hidden: usize,
        embedding_dim: usize,
        n_classes: usize,
        dropout: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let mlp = MlpModel::new(
            &[d_local + d_global, hidden, embedding_dim, n_classes],
            &[Activation::Relu, Activation::Relu, Activation::Identity],
            dropout,
            rng,
        )?;
        Ok(BaseNetHead { mlp, embedding_dim })
    }

    /// Wraps a loaded model, checking the three-layer head structure.
    pub fn from_mlp(mlp: MlpModel) -> Result<Self> {
        if mlp.layers.len() != 3 {
            return Err(Error::Contract(format!(
                "head must have exactly 3 layers, got {}",
                mlp.layers.len()
            )));
        }
        let embedding_dim = mlp.layers[1].out_dim();
        Ok(BaseNetHead { mlp, embedding_dim })
    }

    pub fn n_classes(&self) -> usize {
        self.mlp.out_dim()
    }

    /// Eval-mode logits for one record.
    pub fn logits(&self, rec: &EmbeddingRecord) -> Result<Tensor> {
        self.mlp.eval(&concat_contexts(rec))
    }

    /// Argmax class; ties break toward the lowest index.
    pub fn classify(&self, rec: &EmbeddingRecord) -> Result<usize> {
        Ok(argmax(self.logits(rec)?.data()))
    }

    /// Post-activation output of the second hidden layer, eval mode.
    pub fn extract_embedding(&self, rec: &EmbeddingRecord) -> Result<Tensor> {
        let h1 = self.mlp.layers[0].forward(&concat_contexts(rec))?;
        self.mlp.layers[1].forward(&h1)
    }

    /// Embeds every record; parallel over records under the `parallel`
    /// feature, with output order fixed to input order.
    pub fn embed_dataset(&self, ds: &Dataset) -> Result<EmbeddingSet> {
        let embedded: Vec<Result<Embedding>> = par_map(&ds.records, |rec| {
            Ok(Embedding {
                id: rec.id.clone(),
                group_id: rec.group_id.clone(),
                class: rec.class,
                vector: self.extract_embedding(rec)?,
            })
        });
        let records = embedded.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(EmbeddingSet {
            records,
            class_names: ds.class_names.clone(),
            dim: self.embedding_dim,
        })
    }
}

/// Index of the maximum entry, lowest index on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `[local | global]`, local block first.
pub fn concat_contexts(rec: &EmbeddingRecord) -> Tensor {
    let mut data = Vec::with_capacity(rec.local.len() + rec.global.len());
    data.extend_from_slice(rec.local.data());
    data.extend_from_slice(rec.global.data());
    Tensor::vector(data)
}

/// Imbalance-corrected sampler settings.
#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig {
    /// Every class is brought to exactly this count per epoch.
    pub target_per_class: usize,
    /// Gaussian augmentation scale for oversampled copies.
    pub jitter_sigma: f64,
    pub seed: u64,
}

/// The median class count, the default oversample/undersample pivot.
pub fn median_class_count(ds: &Dataset) -> usize {
    let mut counts = class_histogram(ds).counts;
    counts.sort_unstable();
    counts[(counts.len() - 1) / 2]
}

/// One epoch's worth of balanced training items.
///
/// Classes at or above the target contribute a uniform sample without
/// replacement; classes below it contribute every record once plus jittered
/// copies (i.i.d. Gaussian noise on both context vectors) up to the target.
/// The emitted order is shuffled under the config seed.
pub fn balanced_epoch(ds: &Dataset, cfg: &SamplerConfig) -> Result<Vec<(Tensor, usize)>> {
    if cfg.target_per_class == 0 {
        return Err(Error::Config("target_per_class must be at least 1".into()));
    }
    let mut rng = derive_rng(cfg.seed, "balanced-epoch");
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes()];
    for (idx, rec) in ds.records.iter().enumerate() {
        by_class[rec.class].push(idx);
    }
    if let Some(class) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::Contract(format!(
            "class {:?} has no records to sample from",
            ds.class_names[class]
        )));
    }

    let target = cfg.target_per_class;
    let mut items = Vec::with_capacity(target * ds.n_classes());
    for (class, members) in by_class.iter().enumerate() {
        if members.len() >= target {
            let mut pool = members.clone();
            pool.shuffle(&mut rng);
            for &idx in pool.iter().take(target) {
                items.push((concat_contexts(&ds.records[idx]), class));
            }
        } else {
            for &idx in members {
                items.push((concat_contexts(&ds.records[idx]), class));
            }
            for _ in members.len()..target {
                let idx = members[rng.random_range(0..members.len())];
                let mut v = concat_contexts(&ds.records[idx]);
                for x in v.data_mut() {
                    *x += rng.sample::<f64, _>(StandardNormal) * cfg.jitter_sigma;
                }
                items.push((v, class));
            }
        }
    }
    items.shuffle(&mut rng);
    Ok(items)
}

/// Trains the head with per-epoch balanced resampling and softmax
/// cross-entropy, returning the mean loss per epoch. Deterministic under
/// `seed`; `epochs = 0` leaves the head untouched.
pub fn train_basenet(
    ds: &Dataset,
    head: &mut BaseNetHead,
    target_per_class: usize,
    jitter_sigma: f64,
    sgd: SgdConfig,
    epochs: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if ds.records.is_empty() {
        return Err(Error::Contract("cannot train on an empty dataset".into()));
    }
    if head.mlp.in_dim() != ds.d_local + ds.d_global {
        return Err(Error::shape(
            "head input width",
            ds.d_local + ds.d_global,
            head.mlp.in_dim(),
        ));
    }
    if head.n_classes() != ds.n_classes() {
        return Err(Error::shape(
            "head class count",
            ds.n_classes(),
            head.n_classes(),
        ));
    }
    let mut optimizer = SgdState::new(&head.mlp, sgd)?;
    let mut epoch_seeds = derive_rng(seed, "base-epoch-seeds");
    let mut dropout_rng = derive_rng(seed, "base-dropout");
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let sampler = SamplerConfig {
            target_per_class,
            jitter_sigma,
            seed: epoch_seeds.random(),
        };
        let items = balanced_epoch(ds, &sampler)?;
        let mut loss_sum = 0.0;
        for (input, class) in &items {
            let (logits, cache) = head.mlp.forward(input, Mode::Train, &mut dropout_rng)?;
            let (loss, grad) = softmax_cross_entropy(&logits, *class)?;
            let grads = head.mlp.backward(&cache, &grad, GradKind::Output)?;
            optimizer.step(&mut head.mlp, &grads)?;
            loss_sum += loss;
        }
        trace.push(loss_sum / items.len() as f64);
    }
    Ok(trace)
}
