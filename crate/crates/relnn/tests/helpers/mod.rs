//! Shared constructors for integration tests.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use relnn::data::{Dataset, Embedding, EmbeddingRecord, EmbeddingSet};
use relnn::nn::{seeded, SeededRng};
use relnn::tensor::Tensor;

/// Random embedding set; `grid` coordinates come from a small integer
/// lattice so distance ties actually occur.
pub fn random_embedding_set(
    seed: u64,
    n: usize,
    dim: usize,
    n_classes: usize,
    grid: bool,
) -> EmbeddingSet {
    let mut rng = seeded(seed);
    let records = (0..n)
        .map(|i| Embedding {
            id: format!("p{i:05}"),
            group_id: format!("g{:02}", i % 7),
            class: rng.random_range(0..n_classes),
            vector: Tensor::vector(random_coords(&mut rng, dim, grid)),
        })
        .collect();
    EmbeddingSet {
        records,
        class_names: (0..n_classes).map(|c| format!("c{c}")).collect(),
        dim,
    }
}

pub fn random_coords(rng: &mut SeededRng, dim: usize, grid: bool) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            if grid {
                f64::from(rng.random_range(-2..3i32))
            } else {
                rng.random_range(-3.0..3.0)
            }
        })
        .collect()
}

/// A query point, class, and optional excluded id drawn from `set`.
pub fn random_query(
    set: &EmbeddingSet,
    rng: &mut SeededRng,
    grid: bool,
) -> (Tensor, usize, Option<String>) {
    let class = rng.random_range(0..set.n_classes());
    let target = Tensor::vector(random_coords(rng, set.dim, grid));
    let exclude = set
        .records
        .iter()
        .filter(|r| r.class == class)
        .map(|r| r.id.clone())
        .next()
        .filter(|_| rng.random::<bool>());
    (target, class, exclude)
}

pub fn random_reference_set(
    rng: &mut SeededRng,
    set_size: usize,
    dim: usize,
) -> (Tensor, Vec<(String, Tensor)>) {
    let target = Tensor::vector(random_coords(rng, dim, false));
    let members = (0..set_size)
        .map(|i| {
            (
                format!("m{i}"),
                Tensor::vector(random_coords(rng, dim, false)),
            )
        })
        .collect();
    (target, members)
}

pub fn shuffled<'a>(members: &[(&'a str, &'a Tensor)], seed: u64) -> Vec<(&'a str, &'a Tensor)> {
    let mut out = members.to_vec();
    out.shuffle(&mut seeded(seed));
    out
}

pub fn grouped_dataset(n_groups: usize, per_group: usize) -> Dataset {
    let mut records = Vec::new();
    for g in 0..n_groups {
        for i in 0..per_group {
            records.push(EmbeddingRecord {
                id: format!("r{g}_{i}"),
                group_id: format!("scan{g:04}"),
                class: (g + i) % 2,
                local: Tensor::vector(vec![g as f64, i as f64]),
                global: Tensor::vector(vec![0.5]),
            });
        }
    }
    Dataset {
        records,
        class_names: vec!["a".into(), "b".into()],
        d_local: 2,
        d_global: 1,
    }
}

pub fn skewed_dataset(counts: &[usize]) -> Dataset {
    let mut records = Vec::new();
    for (class, &count) in counts.iter().enumerate() {
        for i in 0..count {
            records.push(EmbeddingRecord {
                id: format!("c{class}_{i}"),
                group_id: format!("g{}", i % 3),
                class,
                local: Tensor::vector(vec![class as f64, i as f64]),
                global: Tensor::vector(vec![i as f64 * 0.25]),
            });
        }
    }
    Dataset {
        records,
        class_names: (0..counts.len()).map(|c| format!("class{c}")).collect(),
        d_local: 2,
        d_global: 1,
    }
}

pub fn random_dataset(seed: u64, n: usize) -> Dataset {
    let mut rng = seeded(seed);
    let n_classes = rng.random_range(1..5usize);
    let records = (0..n)
        .map(|i| EmbeddingRecord {
            id: format!("r{i:04}"),
            group_id: format!("scan{:02}", i % 5),
            class: rng.random_range(0..n_classes),
            local: Tensor::vector(random_coords(&mut rng, 3, false)),
            global: Tensor::vector(random_coords(&mut rng, 2, false)),
        })
        .collect();
    Dataset {
        records,
        class_names: (0..n_classes).map(|c| format!("class{c}")).collect(),
        d_local: 3,
        d_global: 2,
    }
}

pub fn group_ids(ds: &Dataset) -> BTreeSet<String> {
    ds.records.iter().map(|r| r.group_id.clone()).collect()
}
