//! Group-level train/test splitting: whole scans go to one side or the other.

use rand::seq::SliceRandom;

use crate::data::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::derive_rng;

/// Splits by group id so no group straddles the two sides. The group-count
/// ratio is as close to `train_fraction` as integrality allows, both sides
/// are non-empty, and the assignment is deterministic under `seed`.
pub fn group_split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Config(format!(
            "train fraction must be in [0,1], got {train_fraction}"
        )));
    }
    let mut groups: Vec<&str> = ds.records.iter().map(|r| r.group_id.as_str()).collect();
    groups.sort_unstable();
    groups.dedup();
    if groups.len() < 2 {
        return Err(Error::Contract(format!(
            "cannot split at group level: dataset has {} group(s)",
            groups.len()
        )));
    }

    let mut rng = derive_rng(seed, "group-split");
    groups.shuffle(&mut rng);
    let n_train = ((groups.len() as f64 * train_fraction).round() as usize)
        .clamp(1, groups.len() - 1);
    let train_groups: std::collections::HashSet<&str> =
        groups[..n_train].iter().copied().collect();

    let mut train = Dataset {
        records: Vec::new(),
        class_names: ds.class_names.clone(),
        d_local: ds.d_local,
        d_global: ds.d_global,
    };
    let mut test = train.clone();
    for rec in &ds.records {
        if train_groups.contains(rec.group_id.as_str()) {
            train.records.push(rec.clone());
        } else {
            test.records.push(rec.clone());
        }
    }
    Ok((train, test))
}
