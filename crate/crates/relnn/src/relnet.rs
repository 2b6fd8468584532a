//! The relation network: g builds a joint reference embedding from a class's
//! reference set, f scores target-reference relatedness, and prediction takes
//! the argmax of the per-class scores.
//!
//! Reference sets come from one of four strategies. All-to-all uses every
//! class member; nearest-k feeds g only the target's neighborhood, which
//! trains positives on coherent same-class examples and negatives on the
//! hard wrong-class examples near the target. Random-k and farthest-k are
//! control arms.

use std::collections::HashMap;

use rand::Rng;

use crate::basenet::argmax;
use crate::config::StrategyKind;
use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::knn::KnnIndex;
use crate::nn::{
    bce_from_logit, derive_rng, max_relative_error_fd, seeded, Activation, ActivationCache,
    FlatParams, GradKind, MlpGradients, MlpModel, Mode, SeededRng, SgdConfig, SgdState,
    DEFAULT_STEP,
};
use crate::parallel::{par_map, seq_map};
use crate::tensor::Tensor;

/// How a class's reference set is chosen for a given target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceStrategy {
    AllToAll,
    NearestK(usize),
    RandomK(usize),
    FarthestK(usize),
}

impl ReferenceStrategy {
    pub fn from_kind(kind: StrategyKind, k: usize) -> Self {
        match kind {
            StrategyKind::All => ReferenceStrategy::AllToAll,
            StrategyKind::Nn => ReferenceStrategy::NearestK(k),
            StrategyKind::Random => ReferenceStrategy::RandomK(k),
            StrategyKind::Far => ReferenceStrategy::FarthestK(k),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ReferenceStrategy::NearestK(0)
            | ReferenceStrategy::RandomK(0)
            | ReferenceStrategy::FarthestK(0) => {
                Err(Error::Config("strategy k must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// The two-network relation model.
#[derive(Debug, Clone)]
pub struct RelationModel {
    /// Reference aggregation network: 3 dense ReLU layers.
    pub g: MlpModel,
    /// Relation scorer: hidden ReLU layer, then a single sigmoid output.
    pub f: MlpModel,
    pub embedding_dim: usize,
    pub ref_dim: usize,
    /// When set, g consumes `[target | member]` instead of the member alone.
    pub concat_target: bool,
}

impl RelationModel {
    pub fn new(
        embedding_dim: usize,
        g_hidden: usize,
        ref_dim: usize,
        f_hidden: usize,
        dropout: f64,
        concat_target: bool,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let g_in = if concat_target {
            2 * embedding_dim
        } else {
            embedding_dim
        };
        let g = MlpModel::new(
            &[g_in, g_hidden, g_hidden, ref_dim],
            &[Activation::Relu, Activation::Relu, Activation::Relu],
            dropout,
            rng,
        )?;
        let f = MlpModel::new(
            &[embedding_dim + ref_dim, f_hidden, 1],
            &[Activation::Relu, Activation::Sigmoid],
            dropout,
            rng,
        )?;
        Ok(RelationModel {
            g,
            f,
            embedding_dim,
            ref_dim,
            concat_target,
        })
    }

    /// Reassembles a model from loaded g/f checkpoints, validating the wiring.
    pub fn from_parts(g: MlpModel, f: MlpModel, concat_target: bool) -> Result<Self> {
        let ref_dim = g.out_dim();
        let embedding_dim = f.in_dim().checked_sub(ref_dim).ok_or_else(|| {
            Error::Contract(format!(
                "f input width {} is narrower than g output {}",
                f.in_dim(),
                ref_dim
            ))
        })?;
        if embedding_dim == 0 {
            return Err(Error::Contract("embedding width resolved to zero".into()));
        }
        let expected_g_in = if concat_target {
            2 * embedding_dim
        } else {
            embedding_dim
        };
        if g.in_dim() != expected_g_in {
            return Err(Error::shape("g input width", expected_g_in, g.in_dim()));
        }
        if f.out_dim() != 1 {
            return Err(Error::shape("f output width", 1, f.out_dim()));
        }
        if f.layers.last().expect("non-empty").activation != Activation::Sigmoid {
            return Err(Error::Contract(
                "f's final activation must be sigmoid".into(),
            ));
        }
        Ok(RelationModel {
            g,
            f,
            embedding_dim,
            ref_dim,
            concat_target,
        })
    }

    fn g_input(&self, target: &Tensor, member: &Tensor) -> Tensor {
        if self.concat_target {
            let mut data = Vec::with_capacity(target.len() + member.len());
            data.extend_from_slice(target.data());
            data.extend_from_slice(member.data());
            Tensor::vector(data)
        } else {
            member.clone()
        }
    }
}

/// Selects a reference set for `(target, class)` under `strategy`, as
/// `(id, embedding)` pairs borrowed from the index.
///
/// `exclude_id` removes the target itself during training. `rng` is consumed
/// only by the random strategy. Errors if the class has no eligible members.
pub fn select_reference_set<'a>(
    strategy: &ReferenceStrategy,
    index: &'a KnnIndex,
    target: &Tensor,
    class: usize,
    exclude_id: Option<&str>,
    rng: &mut SeededRng,
) -> Result<Vec<(&'a str, &'a Tensor)>> {
    strategy.validate()?;
    let eligible = || -> Result<Vec<(&'a str, &'a Tensor)>> {
        let members: Vec<(&str, &Tensor)> = index
            .class_members(class)?
            .filter(|(id, _)| exclude_id != Some(*id))
            .collect();
        if members.is_empty() {
            return Err(Error::Query(format!(
                "class {class} has no eligible reference members"
            )));
        }
        Ok(members)
    };
    match strategy {
        ReferenceStrategy::AllToAll => eligible(),
        ReferenceStrategy::NearestK(k) => {
            let neighbors = index.query(target, class, *k, exclude_id)?;
            neighbors
                .iter()
                .map(|n| {
                    index.member_entry(class, &n.id).ok_or_else(|| {
                        Error::Query(format!("neighbor {} missing from class {class}", n.id))
                    })
                })
                .collect()
        }
        ReferenceStrategy::RandomK(k) => {
            let mut members = eligible()?;
            if members.len() <= *k {
                return Ok(members);
            }
            // Partial Fisher-Yates: the first k slots become the sample.
            for i in 0..*k {
                let j = rng.random_range(i..members.len());
                members.swap(i, j);
            }
            members.truncate(*k);
            Ok(members)
        }
        ReferenceStrategy::FarthestK(k) => {
            let members = eligible()?;
            let mut scored: Vec<(f64, &str, &Tensor)> = members
                .into_iter()
                .map(|(id, v)| (target.euclidean_distance(v), id, v))
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
            scored.truncate(*k);
            Ok(scored.into_iter().map(|(_, id, v)| (id, v)).collect())
        }
    }
}

/// Indices of a reference set sorted by member id; fixes the summation order
/// so the aggregated embedding is bit-exact under input permutations.
fn id_sorted_order(members: &[(&str, &Tensor)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| members[a].0.cmp(members[b].0));
    order
}

/// Applies g to each member and averages element-wise, summing in id-sorted
/// order. Eval mode is deterministic; train mode draws one dropout mask set
/// per member from `rng`.
pub fn aggregate_reference(
    model: &RelationModel,
    target: &Tensor,
    members: &[(&str, &Tensor)],
    mode: Mode,
    rng: &mut SeededRng,
) -> Result<Tensor> {
    if members.is_empty() {
        return Err(Error::Contract("reference set must be non-empty".into()));
    }
    let order = id_sorted_order(members);
    let mut sum = vec![0.0; model.ref_dim];
    for &idx in &order {
        let input = model.g_input(target, members[idx].1);
        let out = match mode {
            Mode::Eval => model.g.eval(&input)?,
            Mode::Train => model.g.forward(&input, Mode::Train, rng)?.0,
        };
        for (s, o) in sum.iter_mut().zip(out.data()) {
            *s += o;
        }
    }
    let m = members.len() as f64;
    for s in &mut sum {
        *s /= m;
    }
    Ok(Tensor::vector(sum))
}

/// Forward state kept for the training backward pass.
pub(crate) struct RelationForward {
    pub score: f64,
    pub logit: f64,
    /// One g cache per member, in id-sorted order.
    g_caches: Vec<ActivationCache>,
    f_cache: ActivationCache,
    n_members: usize,
}

/// Full train-mode forward through g, the mean, and f.
pub(crate) fn relation_forward(
    model: &RelationModel,
    target: &Tensor,
    members: &[(&str, &Tensor)],
    rng: &mut SeededRng,
) -> Result<RelationForward> {
    if members.is_empty() {
        return Err(Error::Contract("reference set must be non-empty".into()));
    }
    if target.len() != model.embedding_dim {
        return Err(Error::shape(
            "relation target",
            model.embedding_dim,
            target.len(),
        ));
    }
    let order = id_sorted_order(members);
    let mut sum = vec![0.0; model.ref_dim];
    let mut g_caches = Vec::with_capacity(members.len());
    for &idx in &order {
        let input = model.g_input(target, members[idx].1);
        let (out, cache) = model.g.forward(&input, Mode::Train, rng)?;
        for (s, o) in sum.iter_mut().zip(out.data()) {
            *s += o;
        }
        g_caches.push(cache);
    }
    let m = members.len() as f64;
    for s in &mut sum {
        *s /= m;
    }

    let mut f_in = Vec::with_capacity(model.embedding_dim + model.ref_dim);
    f_in.extend_from_slice(target.data());
    f_in.extend_from_slice(&sum);
    let (f_out, f_cache) = model.f.forward(&Tensor::vector(f_in), Mode::Train, rng)?;
    Ok(RelationForward {
        score: f_out.data()[0],
        logit: f_cache.final_pre_activation()[0],
        g_caches,
        f_cache,
        n_members: members.len(),
    })
}

/// Gradients for both networks given `d loss / d logit`. The reference-set
/// mean scales each member's share by `1/|ref_set|`.
pub(crate) fn relation_backward(
    model: &RelationModel,
    fwd: &RelationForward,
    dlogit: f64,
) -> Result<(MlpGradients, MlpGradients)> {
    let f_grads = model.f.backward(
        &fwd.f_cache,
        &Tensor::vector(vec![dlogit]),
        GradKind::Logit,
    )?;
    let d_ref = &f_grads.input.data()[model.embedding_dim..];
    let share: Vec<f64> = d_ref
        .iter()
        .map(|d| d / fwd.n_members as f64)
        .collect();
    let share = Tensor::vector(share);
    let mut g_total = MlpGradients::zeros_like(&model.g);
    for cache in &fwd.g_caches {
        model
            .g
            .backward_accumulate(cache, &share, GradKind::Output, &mut g_total)?;
    }
    Ok((g_total, f_grads))
}

/// Relationship score in (0,1). Eval mode is deterministic and uses a
/// cache-free path; train mode consumes dropout masks from `rng`.
pub fn relation_score(
    model: &RelationModel,
    target: &Tensor,
    members: &[(&str, &Tensor)],
    mode: Mode,
    rng: &mut SeededRng,
) -> Result<f64> {
    if target.len() != model.embedding_dim {
        return Err(Error::shape(
            "relation target",
            model.embedding_dim,
            target.len(),
        ));
    }
    match mode {
        Mode::Train => Ok(relation_forward(model, target, members, rng)?.score),
        Mode::Eval => {
            let ref_embed = aggregate_reference(model, target, members, Mode::Eval, rng)?;
            let mut f_in = Vec::with_capacity(model.embedding_dim + model.ref_dim);
            f_in.extend_from_slice(target.data());
            f_in.extend_from_slice(ref_embed.data());
            Ok(model.f.eval(&Tensor::vector(f_in))?.data()[0])
        }
    }
}

/// One training pair: a target against one class's reference set. Members
/// are indices into the embedding set the pairs were built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationPair {
    pub target_index: usize,
    pub ref_class: usize,
    pub member_indices: Vec<usize>,
    /// True iff the target's class equals `ref_class`.
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSet {
    pub pairs: Vec<RelationPair>,
    /// Targets whose own class had no other member, so no positive pair.
    pub skipped_singletons: usize,
}

/// Builds the training pair set: per target, one positive pair against its
/// own class (target excluded from the references) and `negatives_per_target`
/// negative pairs against distinct other classes (all of them when the budget
/// covers every other class, otherwise a seeded uniform sample).
pub fn build_training_pairs(
    set: &EmbeddingSet,
    index: &KnnIndex,
    strategy: &ReferenceStrategy,
    negatives_per_target: usize,
    seed: u64,
) -> Result<PairSet> {
    strategy.validate()?;
    let populated: Vec<usize> = (0..index.n_classes())
        .filter(|&c| index.class_size(c) > 0)
        .collect();
    if populated.len() < 2 {
        return Err(Error::Contract(format!(
            "pair construction needs at least 2 populated classes, found {}",
            populated.len()
        )));
    }
    let id_to_index: HashMap<&str, usize> = set
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    let resolve = |ids: Vec<(&str, &Tensor)>| -> Result<Vec<usize>> {
        ids.iter()
            .map(|(id, _)| {
                id_to_index.get(id).copied().ok_or_else(|| {
                    Error::Contract(format!("reference id {id} not in the embedding set"))
                })
            })
            .collect()
    };

    let mut rng = derive_rng(seed, "pair-construction");
    let mut pairs = Vec::new();
    let mut skipped_singletons = 0usize;
    for (target_index, rec) in set.records.iter().enumerate() {
        // Positive pair, unless the target is its class's only member.
        if index.class_size(rec.class) >= 2 {
            let members = select_reference_set(
                strategy,
                index,
                &rec.vector,
                rec.class,
                Some(&rec.id),
                &mut rng,
            )?;
            pairs.push(RelationPair {
                target_index,
                ref_class: rec.class,
                member_indices: resolve(members)?,
                positive: true,
            });
        } else {
            skipped_singletons += 1;
        }

        let others: Vec<usize> = populated
            .iter()
            .copied()
            .filter(|&c| c != rec.class)
            .collect();
        let chosen: Vec<usize> = if negatives_per_target >= others.len() {
            others
        } else {
            let mut pool = others;
            for i in 0..negatives_per_target {
                let j = rng.random_range(i..pool.len());
                pool.swap(i, j);
            }
            pool.truncate(negatives_per_target);
            pool.sort_unstable();
            pool
        };
        for neg_class in chosen {
            let members = select_reference_set(
                strategy,
                index,
                &rec.vector,
                neg_class,
                Some(&rec.id),
                &mut rng,
            )?;
            pairs.push(RelationPair {
                target_index,
                ref_class: neg_class,
                member_indices: resolve(members)?,
                positive: false,
            });
        }
    }
    Ok(PairSet {
        pairs,
        skipped_singletons,
    })
}

fn pair_members<'a>(set: &'a EmbeddingSet, pair: &RelationPair) -> Vec<(&'a str, &'a Tensor)> {
    pair.member_indices
        .iter()
        .map(|&i| (set.records[i].id.as_str(), &set.records[i].vector))
        .collect()
}

/// Trains g and f jointly on the pair set with sigmoid-fused binary
/// cross-entropy, shuffling pairs each epoch. Returns the mean loss per
/// epoch. Deterministic under `seed`; `epochs = 0` leaves the model unchanged.
pub fn train_rn(
    set: &EmbeddingSet,
    pair_set: &PairSet,
    model: &mut RelationModel,
    sgd: SgdConfig,
    epochs: usize,
    positive_weight: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if pair_set.pairs.is_empty() {
        return Err(Error::Contract("cannot train on an empty pair set".into()));
    }
    if positive_weight <= 0.0 {
        return Err(Error::Config("positive_weight must be positive".into()));
    }
    let mut g_opt = SgdState::new(&model.g, sgd)?;
    let mut f_opt = SgdState::new(&model.f, sgd)?;
    let mut shuffle_rng = derive_rng(seed, "rn-shuffle");
    let mut dropout_rng = derive_rng(seed, "rn-dropout");
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut order: Vec<usize> = (0..pair_set.pairs.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for &pair_idx in &order {
            let pair = &pair_set.pairs[pair_idx];
            let target = &set.records[pair.target_index].vector;
            let members = pair_members(set, pair);
            let fwd = relation_forward(model, target, &members, &mut dropout_rng)?;
            let (mut loss, mut dlogit) = bce_from_logit(fwd.logit, pair.positive);
            if pair.positive && positive_weight != 1.0 {
                loss *= positive_weight;
                dlogit *= positive_weight;
            }
            let (g_grads, f_grads) = relation_backward(model, &fwd, dlogit)?;
            g_opt.step(&mut model.g, &g_grads)?;
            f_opt.step(&mut model.f, &f_grads)?;
            loss_sum += loss;
        }
        trace.push(loss_sum / pair_set.pairs.len() as f64);
    }
    Ok(trace)
}

/// Scores and argmax for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub predicted: usize,
    pub scores: Vec<f64>,
    /// Classes that had no reference members and were scored 0.
    pub empty_classes: usize,
}

/// Scores `target` against every class under `strategy` (eval mode) and
/// returns the argmax, ties to the lowest class index. Classes with no
/// members in the index score 0 and are counted in `empty_classes`.
pub fn predict_class(
    model: &RelationModel,
    index: &KnnIndex,
    target: &Tensor,
    strategy: &ReferenceStrategy,
    rng: &mut SeededRng,
) -> Result<Prediction> {
    let mut scores = Vec::with_capacity(index.n_classes());
    let mut empty_classes = 0usize;
    for class in 0..index.n_classes() {
        if index.class_size(class) == 0 {
            empty_classes += 1;
            scores.push(0.0);
            continue;
        }
        let members = select_reference_set(strategy, index, target, class, None, rng)?;
        scores.push(relation_score(model, target, &members, Mode::Eval, rng)?);
    }
    Ok(Prediction {
        predicted: argmax(&scores),
        scores,
        empty_classes,
    })
}

fn predict_one(
    model: &RelationModel,
    index: &KnnIndex,
    strategy: &ReferenceStrategy,
    seed: u64,
    rec: &crate::data::Embedding,
) -> Result<Prediction> {
    // Per-target stream keyed by id, so results are independent of
    // evaluation order and thread schedule.
    let mut rng = derive_rng(seed, &format!("predict-{}", rec.id));
    predict_class(model, index, &rec.vector, strategy, &mut rng)
}

/// Predicts every record of `targets`; parallel across targets under the
/// `parallel` feature, output order fixed to input order.
pub fn predict_batch(
    model: &RelationModel,
    index: &KnnIndex,
    targets: &EmbeddingSet,
    strategy: &ReferenceStrategy,
    seed: u64,
) -> Result<Vec<Prediction>> {
    par_map(&targets.records, |rec| {
        predict_one(model, index, strategy, seed, rec)
    })
    .into_iter()
    .collect()
}

/// Always-sequential twin of [`predict_batch`]; same results, used as the
/// benchmark baseline and the non-`parallel` fallback.
pub fn predict_batch_serial(
    model: &RelationModel,
    index: &KnnIndex,
    targets: &EmbeddingSet,
    strategy: &ReferenceStrategy,
    seed: u64,
) -> Result<Vec<Prediction>> {
    seq_map(&targets.records, |rec| {
        predict_one(model, index, strategy, seed, rec)
    })
    .into_iter()
    .collect()
}

impl FlatParams for RelationModel {
    fn param_count(&self) -> usize {
        self.g.param_count() + self.f.param_count()
    }

    fn get_param(&self, idx: usize) -> f64 {
        let g_count = self.g.param_count();
        if idx < g_count {
            self.g.get_param(idx)
        } else {
            self.f.get_param(idx - g_count)
        }
    }

    fn set_param(&mut self, idx: usize, value: f64) {
        let g_count = self.g.param_count();
        if idx < g_count {
            self.g.set_param(idx, value);
        } else {
            self.f.set_param(idx - g_count, value);
        }
    }
}

/// Finite-difference check of the full g -> mean -> f composition over every
/// parameter of both networks, with dropout masks frozen by `mask_seed`.
pub fn gradcheck_relation(
    model: &mut RelationModel,
    target: &Tensor,
    members: &[(String, Tensor)],
    label: bool,
    mask_seed: u64,
) -> Result<f64> {
    let borrowed: Vec<(&str, &Tensor)> =
        members.iter().map(|(id, v)| (id.as_str(), v)).collect();

    let analytic = {
        let mut rng = seeded(mask_seed);
        let fwd = relation_forward(model, target, &borrowed, &mut rng)?;
        let (_, dlogit) = bce_from_logit(fwd.logit, label);
        let (g_grads, f_grads) = relation_backward(model, &fwd, dlogit)?;
        let mut flat = MlpModel::flat_grads(&g_grads);
        flat.extend(MlpModel::flat_grads(&f_grads));
        flat
    };

    Ok(max_relative_error_fd(model, &analytic, DEFAULT_STEP, |m| {
        let borrowed: Vec<(&str, &Tensor)> =
            members.iter().map(|(id, v)| (id.as_str(), v)).collect();
        let mut rng = seeded(mask_seed);
        let fwd = relation_forward(m, target, &borrowed, &mut rng)
            .expect("forward succeeds at perturbed parameters");
        bce_from_logit(fwd.logit, label).0
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Embedding;

    fn embedding_set(points: &[(&str, usize, Vec<f64>)]) -> EmbeddingSet {
        let dim = points[0].2.len();
        let n_classes = points.iter().map(|p| p.1).max().unwrap() + 1;
        EmbeddingSet {
            records: points
                .iter()
                .map(|(id, class, v)| Embedding {
                    id: id.to_string(),
                    group_id: "g".into(),
                    class: *class,
                    vector: Tensor::vector(v.clone()),
                })
                .collect(),
            class_names: (0..n_classes).map(|c| format!("c{c}")).collect(),
            dim,
        }
    }

    fn small_model(embedding_dim: usize, dropout: f64, seed: u64) -> RelationModel {
        let mut rng = seeded(seed);
        RelationModel::new(embedding_dim, 6, 4, 5, dropout, false, &mut rng).unwrap()
    }

    #[test]
    fn nearest_two_of_the_three_point_example() {
        let set = embedding_set(&[
            ("p0", 0, vec![0.0, 0.0]),
            ("p1", 0, vec![1.0, 0.0]),
            ("p2", 0, vec![5.0, 5.0]),
        ]);
        let index = KnnIndex::build(&set).unwrap();
        let target = Tensor::vector(vec![0.9, 0.1]);
        let mut rng = seeded(0);
        let members = select_reference_set(
            &ReferenceStrategy::NearestK(2),
            &index,
            &target,
            0,
            None,
            &mut rng,
        )
        .unwrap();
        let ids: Vec<&str> = members.iter().map(|(id, _)| *id).collect();
        assert_eq!(ids, vec!["p1", "p0"]);
        assert_eq!(members[0].1.data(), &[1.0, 0.0]);
    }

    #[test]
    fn all_to_all_excludes_the_target() {
        let set = embedding_set(&[
            ("a", 0, vec![0.0]),
            ("b", 0, vec![1.0]),
            ("c", 0, vec![2.0]),
            ("d", 0, vec![3.0]),
        ]);
        let index = KnnIndex::build(&set).unwrap();
        let mut rng = seeded(0);
        let members = select_reference_set(
            &ReferenceStrategy::AllToAll,
            &index,
            &Tensor::vector(vec![1.0]),
            0,
            Some("b"),
            &mut rng,
        )
        .unwrap();
        assert_eq!(members.len(), 3);
        assert!(members.iter().all(|(id, _)| *id != "b"));
    }

    #[test]
    fn nearest_k_at_class_size_degenerates_to_all_to_all() {
        let set = embedding_set(&[
            ("a", 0, vec![0.0]),
            ("b", 0, vec![1.0]),
            ("c", 0, vec![4.0]),
        ]);
        let index = KnnIndex::build(&set).unwrap();
        let target = Tensor::vector(vec![0.5]);
        let mut rng = seeded(0);
        let near = select_reference_set(
            &ReferenceStrategy::NearestK(10),
            &index,
            &target,
            0,
            None,
            &mut rng,
        )
        .unwrap();
        let all = select_reference_set(
            &ReferenceStrategy::AllToAll,
            &index,
            &target,
            0,
            None,
            &mut rng,
        )
        .unwrap();
        let mut near_ids: Vec<&str> = near.iter().map(|(id, _)| *id).collect();
        let mut all_ids: Vec<&str> = all.iter().map(|(id, _)| *id).collect();
        near_ids.sort_unstable();
        all_ids.sort_unstable();
        assert_eq!(near_ids, all_ids);
    }

    #[test]
    fn farthest_k_picks_the_other_end() {
        let set = embedding_set(&[
            ("a", 0, vec![0.0]),
            ("b", 0, vec![1.0]),
            ("c", 0, vec![10.0]),
        ]);
        let index = KnnIndex::build(&set).unwrap();
        let mut rng = seeded(0);
        let far = select_reference_set(
            &ReferenceStrategy::FarthestK(1),
            &index,
            &Tensor::vector(vec![0.0]),
            0,
            None,
            &mut rng,
        )
        .unwrap();
        assert_eq!(far[0].0, "c");
    }

    #[test]
    fn random_k_is_seed_deterministic_without_replacement() {
        let set = embedding_set(&[
            ("a", 0, vec![0.0]),
            ("b", 0, vec![1.0]),
            ("c", 0, vec![2.0]),
            ("d", 0, vec![3.0]),
            ("e", 0, vec![4.0]),
        ]);
        let index = KnnIndex::build(&set).unwrap();
        let target = Tensor::vector(vec![0.0]);
        let pick = |seed: u64| {
            let mut rng = seeded(seed);
            select_reference_set(
                &ReferenceStrategy::RandomK(3),
                &index,
                &target,
                0,
                None,
                &mut rng,
            )
            .unwrap()
            .iter()
            .map(|(id, _)| id.to_string())
            .collect::<Vec<_>>()
        };
        let first = pick(9);
        assert_eq!(first, pick(9));
        let unique: std::collections::BTreeSet<&String> = first.iter().collect();
        assert_eq!(unique.len(), 3);
    }

    #[test]
    fn aggregation_is_the_mean_of_g_outputs() {
        let model = small_model(2, 0.0, 3);
        let u = Tensor::vector(vec![0.3, -0.8]);
        let v = Tensor::vector(vec![1.2, 0.4]);
        let target = Tensor::vector(vec![0.0, 0.0]);
        let gu = model.g.eval(&u).unwrap();
        let gv = model.g.eval(&v).unwrap();
        let mut rng = seeded(0);

        let single = aggregate_reference(&model, &target, &[("u", &u)], Mode::Eval, &mut rng)
            .unwrap();
        assert_eq!(single, gu);

        let both = aggregate_reference(
            &model,
            &target,
            &[("u", &u), ("v", &v)],
            Mode::Eval,
            &mut rng,
        )
        .unwrap();
        for ((b, x), y) in both.data().iter().zip(gu.data()).zip(gv.data()) {
            assert!((b - (x + y) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn score_is_in_open_unit_interval_and_permutation_invariant() {
        let model = small_model(3, 0.0, 5);
        let target = Tensor::vector(vec![0.2, -0.4, 0.9]);
        let members: Vec<(String, Tensor)> = (0..5)
            .map(|i| {
                (
                    format!("m{i}"),
                    Tensor::vector(vec![i as f64 * 0.3, -0.1 * i as f64, 0.5]),
                )
            })
            .collect();
        let ordered: Vec<(&str, &Tensor)> =
            members.iter().map(|(id, v)| (id.as_str(), v)).collect();
        let mut rng = seeded(0);
        let base = relation_score(&model, &target, &ordered, Mode::Eval, &mut rng).unwrap();
        assert!(base > 0.0 && base < 1.0);

        let mut shuffled = ordered.clone();
        shuffled.reverse();
        shuffled.swap(0, 2);
        let permuted =
            relation_score(&model, &target, &shuffled, Mode::Eval, &mut rng).unwrap();
        assert_eq!(base.to_bits(), permuted.to_bits());
    }

    #[test]
    fn empty_reference_set_is_a_contract_error() {
        let model = small_model(2, 0.0, 1);
        let target = Tensor::vector(vec![0.0, 0.0]);
        let mut rng = seeded(0);
        assert!(aggregate_reference(&model, &target, &[], Mode::Eval, &mut rng).is_err());
    }

    fn four_class_set() -> EmbeddingSet {
        embedding_set(&[
            ("a0", 0, vec![0.0, 0.0]),
            ("a1", 0, vec![0.1, 0.0]),
            ("a2", 0, vec![0.0, 0.1]),
            ("b0", 1, vec![3.0, 3.0]),
            ("b1", 1, vec![3.1, 3.0]),
            ("c0", 2, vec![-3.0, 3.0]),
            ("c1", 2, vec![-3.1, 3.0]),
            ("d0", 3, vec![0.0, -3.0]),
            ("d1", 3, vec![0.1, -3.0]),
        ])
    }

    #[test]
    fn pair_counts_follow_the_budget() {
        let set = four_class_set();
        let index = KnnIndex::build(&set).unwrap();
        let pair_set = build_training_pairs(
            &set,
            &index,
            &ReferenceStrategy::NearestK(2),
            3,
            0,
        )
        .unwrap();
        // 9 targets, each: 1 positive + 3 negatives (all other classes).
        assert_eq!(pair_set.pairs.len(), 9 * 4);
        assert_eq!(pair_set.skipped_singletons, 0);
        for pair in &pair_set.pairs {
            let target = &set.records[pair.target_index];
            assert_eq!(pair.positive, target.class == pair.ref_class);
            assert!(pair
                .member_indices
                .iter()
                .all(|&m| set.records[m].id != target.id));
            assert!(pair
                .member_indices
                .iter()
                .all(|&m| set.records[m].class == pair.ref_class));
        }
        let positives = pair_set.pairs.iter().filter(|p| p.positive).count();
        assert_eq!(positives, 9);
    }

    #[test]
    fn negative_budget_below_class_count_samples_distinct_classes() {
        let set = four_class_set();
        let index = KnnIndex::build(&set).unwrap();
        let pair_set =
            build_training_pairs(&set, &index, &ReferenceStrategy::AllToAll, 2, 7).unwrap();
        assert_eq!(pair_set.pairs.len(), 9 * 3);
        for (target_index, _) in set.records.iter().enumerate() {
            let negs: Vec<usize> = pair_set
                .pairs
                .iter()
                .filter(|p| p.target_index == target_index && !p.positive)
                .map(|p| p.ref_class)
                .collect();
            assert_eq!(negs.len(), 2);
            assert_ne!(negs[0], negs[1]);
        }
    }

    #[test]
    fn singleton_class_member_gets_no_positive_pair() {
        let set = embedding_set(&[
            ("solo", 0, vec![0.0]),
            ("b0", 1, vec![1.0]),
            ("b1", 1, vec![2.0]),
        ]);
        let index = KnnIndex::build(&set).unwrap();
        let pair_set =
            build_training_pairs(&set, &index, &ReferenceStrategy::NearestK(1), 5, 0).unwrap();
        assert_eq!(pair_set.skipped_singletons, 1);
        let solo_pairs: Vec<_> = pair_set
            .pairs
            .iter()
            .filter(|p| p.target_index == 0)
            .collect();
        assert_eq!(solo_pairs.len(), 1);
        assert!(!solo_pairs[0].positive);
    }

    #[test]
    fn single_class_input_is_rejected() {
        let set = embedding_set(&[("a", 0, vec![0.0]), ("b", 0, vec![1.0])]);
        let index = KnnIndex::build(&set).unwrap();
        assert!(
            build_training_pairs(&set, &index, &ReferenceStrategy::AllToAll, 1, 0).is_err()
        );
    }

    #[test]
    fn training_is_deterministic_and_zero_epochs_is_identity() {
        let set = four_class_set();
        let index = KnnIndex::build(&set).unwrap();
        let pairs =
            build_training_pairs(&set, &index, &ReferenceStrategy::NearestK(2), 3, 1).unwrap();
        let run = |seed: u64| {
            let mut model = small_model(2, 0.5, 40);
            let trace = train_rn(
                &set,
                &pairs,
                &mut model,
                SgdConfig::default(),
                3,
                1.0,
                seed,
            )
            .unwrap();
            (trace, model.g.layers[0].weights.data().to_vec())
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11).0, run(12).0);

        let mut model = small_model(2, 0.5, 41);
        let before = model.g.clone();
        let trace = train_rn(
            &set,
            &pairs,
            &mut model,
            SgdConfig::default(),
            0,
            1.0,
            3,
        )
        .unwrap();
        assert!(trace.is_empty());
        assert_eq!(
            before.layers[0].weights.data(),
            model.g.layers[0].weights.data()
        );
    }

    #[test]
    fn gradcheck_through_g_mean_f_composition() {
        use crate::nn::randomize_params;
        let members: Vec<(String, Tensor)> = vec![
            ("m0".into(), Tensor::vector(vec![0.4, -0.2, 0.7])),
            ("m1".into(), Tensor::vector(vec![-0.5, 0.3, 0.1])),
            ("m2".into(), Tensor::vector(vec![0.9, 0.8, -0.6])),
        ];
        let target = Tensor::vector(vec![0.25, -0.75, 0.5]);
        for seed in [1, 2] {
            let mut model = small_model(3, 0.5, seed);
            randomize_params(&mut model, 0.5, &mut seeded(seed + 1000));
            for label in [true, false] {
                let err =
                    gradcheck_relation(&mut model, &target, &members, label, 17).unwrap();
                assert!(err < 1e-4, "seed {seed} label {label}: error {err}");
            }
        }
    }

    #[test]
    fn gradcheck_with_target_concatenation() {
        use crate::nn::randomize_params;
        let mut rng = seeded(77);
        let mut model = RelationModel::new(3, 6, 4, 5, 0.5, true, &mut rng).unwrap();
        randomize_params(&mut model, 0.5, &mut seeded(78));
        let members: Vec<(String, Tensor)> = vec![
            ("m0".into(), Tensor::vector(vec![0.4, -0.2, 0.7])),
            ("m1".into(), Tensor::vector(vec![-0.5, 0.3, 0.1])),
        ];
        let target = Tensor::vector(vec![0.25, -0.75, 0.5]);
        let err = gradcheck_relation(&mut model, &target, &members, true, 3).unwrap();
        assert!(err < 1e-4, "concat-target error {err}");
    }

    #[test]
    fn prediction_takes_argmax_with_low_index_ties() {
        let set = four_class_set();
        let index = KnnIndex::build(&set).unwrap();
        let model = small_model(2, 0.5, 8);
        let mut rng = seeded(0);
        let pred = predict_class(
            &model,
            &index,
            &Tensor::vector(vec![0.05, 0.05]),
            &ReferenceStrategy::NearestK(2),
            &mut rng,
        )
        .unwrap();
        assert_eq!(pred.scores.len(), 4);
        assert_eq!(pred.empty_classes, 0);
        assert_eq!(pred.predicted, argmax(&pred.scores));
        assert!(pred.scores.iter().all(|s| *s > 0.0 && *s < 1.0));
    }

    #[test]
    fn empty_class_scores_zero_with_warning() {
        let mut set = four_class_set();
        set.class_names.push("ghost".into());
        let index = KnnIndex::build(&set).unwrap();
        let model = small_model(2, 0.5, 8);
        let mut rng = seeded(0);
        let pred = predict_class(
            &model,
            &index,
            &Tensor::vector(vec![0.0, 0.0]),
            &ReferenceStrategy::NearestK(2),
            &mut rng,
        )
        .unwrap();
        assert_eq!(pred.scores.len(), 5);
        assert_eq!(pred.scores[4], 0.0);
        assert_eq!(pred.empty_classes, 1);
    }

    #[test]
    fn parallel_and_serial_batch_prediction_agree() {
        let set = four_class_set();
        let index = KnnIndex::build(&set).unwrap();
        let model = small_model(2, 0.5, 8);
        let strategy = ReferenceStrategy::RandomK(2);
        let a = predict_batch(&model, &index, &set, &strategy, 5).unwrap();
        let b = predict_batch_serial(&model, &index, &set, &strategy, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_reassembly_validates_wiring() {
        let model = small_model(3, 0.5, 6);
        let rebuilt =
            RelationModel::from_parts(model.g.clone(), model.f.clone(), false).unwrap();
        assert_eq!(rebuilt.embedding_dim, 3);
        assert_eq!(rebuilt.ref_dim, 4);
        // Swapping the parts wires nothing sensible and must fail.
        assert!(RelationModel::from_parts(model.f.clone(), model.g.clone(), false).is_err());
    }
}
