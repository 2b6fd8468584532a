//! Exact per-class nearest-neighbor retrieval over training embeddings, plus
//! the independent brute-force oracle it is tested against.
//!
//! Distance is Euclidean. Ties are broken by lexicographic id, which makes
//! every query result a total order and the oracle comparison exact.

use std::collections::BinaryHeap;
use std::collections::HashSet;

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One retrieved neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: String,
    pub distance: f64,
}

#[derive(Debug, Clone)]
struct Entry {
    id: String,
    vector: Tensor,
}

/// Immutable per-class partition of training embeddings.
#[derive(Debug, Clone)]
pub struct KnnIndex {
    classes: Vec<Vec<Entry>>,
    dim: usize,
}

impl KnnIndex {
    /// Partitions `set` by class. Within a class, entries are stored sorted
    /// by id. Errors on empty input, dimension drift, or duplicate ids.
    pub fn build(set: &EmbeddingSet) -> Result<Self> {
        if set.records.is_empty() {
            return Err(Error::Contract("cannot index an empty embedding set".into()));
        }
        let mut seen: HashSet<&str> = HashSet::with_capacity(set.records.len());
        let mut classes: Vec<Vec<Entry>> = vec![Vec::new(); set.n_classes()];
        for rec in &set.records {
            if rec.vector.len() != set.dim {
                return Err(Error::shape("indexed embedding", set.dim, rec.vector.len()));
            }
            if !seen.insert(&rec.id) {
                return Err(Error::Contract(format!(
                    "duplicate id {} in index input",
                    rec.id
                )));
            }
            if rec.class >= classes.len() {
                return Err(Error::Contract(format!(
                    "embedding {} has class {} outside the declared {} classes",
                    rec.id,
                    rec.class,
                    classes.len()
                )));
            }
            classes[rec.class].push(Entry {
                id: rec.id.clone(),
                vector: rec.vector.clone(),
            });
        }
        for members in &mut classes {
            members.sort_by(|a, b| a.id.cmp(&b.id));
        }
        Ok(KnnIndex {
            classes,
            dim: set.dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Number of members indexed under `class`.
    pub fn class_size(&self, class: usize) -> usize {
        self.classes.get(class).map_or(0, Vec::len)
    }

    /// All members of a class, sorted by id.
    pub fn class_members(&self, class: usize) -> Result<impl Iterator<Item = (&str, &Tensor)>> {
        let members = self
            .classes
            .get(class)
            .ok_or_else(|| Error::Query(format!("unknown class {class}")))?;
        Ok(members.iter().map(|e| (e.id.as_str(), &e.vector)))
    }

    /// Looks up one member entry by id within a class.
    pub fn member_entry(&self, class: usize, id: &str) -> Option<(&str, &Tensor)> {
        let members = self.classes.get(class)?;
        members
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .map(|pos| (members[pos].id.as_str(), &members[pos].vector))
    }

    /// The `k` nearest members of `class` to `target`, ascending by
    /// `(distance, id)`. `exclude_id` is removed before selection. A class
    /// with fewer than `k` eligible members returns all of them.
    pub fn query(
        &self,
        target: &Tensor,
        class: usize,
        k: usize,
        exclude_id: Option<&str>,
    ) -> Result<Vec<Neighbor>> {
        if target.len() != self.dim {
            return Err(Error::shape("query target", self.dim, target.len()));
        }
        if k == 0 {
            return Err(Error::Query("k must be at least 1".into()));
        }
        let members = self
            .classes
            .get(class)
            .ok_or_else(|| Error::Query(format!("unknown class {class}")))?;

        // Bounded max-heap of the k best (distance, id) pairs seen so far.
        let mut heap: BinaryHeap<HeapItem> = BinaryHeap::with_capacity(k + 1);
        for entry in members {
            if exclude_id == Some(entry.id.as_str()) {
                continue;
            }
            let distance = euclidean(target.data(), entry.vector.data());
            let item = HeapItem {
                distance,
                id: &entry.id,
            };
            if heap.len() < k {
                heap.push(item);
            } else if let Some(worst) = heap.peek() {
                if item < *worst {
                    heap.pop();
                    heap.push(item);
                }
            }
        }
        if heap.is_empty() {
            return Err(Error::Query(format!(
                "class {class} has no eligible members{}",
                if exclude_id.is_some() {
                    " after exclusion"
                } else {
                    ""
                }
            )));
        }
        let mut result: Vec<HeapItem> = heap.into_vec();
        result.sort();
        Ok(result
            .into_iter()
            .map(|item| Neighbor {
                id: item.id.to_string(),
                distance: item.distance,
            })
            .collect())
    }
}

/// Heap item ordered by `(distance, id)`; distances are finite by the
/// embedding-set invariant, so `total_cmp` agrees with the numeric order.
#[derive(Debug)]
struct HeapItem<'a> {
    distance: f64,
    id: &'a str,
}

impl PartialEq for HeapItem<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.distance.total_cmp(&other.distance).is_eq() && self.id == other.id
    }
}
impl Eq for HeapItem<'_> {}
impl PartialOrd for HeapItem<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem<'_> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then_with(|| self.id.cmp(other.id))
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Reference implementation: computes every distance naively and sorts the
/// whole class. Same contract as [`KnnIndex::query`]; kept free of the
/// bounded-heap selection path on purpose.
pub fn brute_force_oracle(
    set: &EmbeddingSet,
    target: &Tensor,
    class: usize,
    k: usize,
    exclude_id: Option<&str>,
) -> Result<Vec<Neighbor>> {
    if target.len() != set.dim {
        return Err(Error::shape("query target", set.dim, target.len()));
    }
    if k == 0 {
        return Err(Error::Query("k must be at least 1".into()));
    }
    if class >= set.n_classes() {
        return Err(Error::Query(format!("unknown class {class}")));
    }
    let mut scored: Vec<Neighbor> = set
        .records
        .iter()
        .filter(|r| r.class == class && exclude_id != Some(r.id.as_str()))
        .map(|r| {
            // Deliberately re-derives the distance inline.
            let d = r
                .vector
                .data()
                .iter()
                .zip(target.data())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            Neighbor {
                id: r.id.clone(),
                distance: d,
            }
        })
        .collect();
    if scored.is_empty() {
        return Err(Error::Query(format!(
            "class {class} has no eligible members{}",
            if exclude_id.is_some() {
                " after exclusion"
            } else {
                ""
            }
        )));
    }
    scored.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.id.cmp(&b.id))
    });
    scored.truncate(k);
    Ok(scored)
}
