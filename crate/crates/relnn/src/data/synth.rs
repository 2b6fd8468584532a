//! Synthetic imbalanced dataset generation: Gaussian class clusters with a
//! controllable skew profile, grouped into scan-like record bundles.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::ProfileKind;
use crate::data::dataset::{Dataset, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::nn::derive_rng;
use crate::tensor::Tensor;

/// The 15-class anatomy label distribution, as published slice counts.
///
/// The percentage column of the source table is internally inconsistent
/// (it sums to 100.07), so the canonical fractions here derive from the
/// count column, which is self-consistent and sums to 15425.
pub fn table1_counts() -> &'static [(&'static str, usize)] {
    &[
        ("along falx/tentorium", 1025),
        ("basal cisterns", 504),
        ("brainstem", 95),
        ("cerebellum", 236),
        ("ethmoidal", 113),
        ("frontal region", 4263),
        ("gangliocapsular region", 146),
        ("maxillary", 622),
        ("occipital region", 760),
        ("parietal region", 2341),
        ("sphenoid", 254),
        ("sulcal spaces", 1026),
        ("temporal region", 2520),
        ("thalamus", 51),
        ("ventricular system", 1469),
    ]
}

const TABLE1_TOTAL: usize = 15_425;
const TABLE1_GROUPS: usize = 216;

/// Target class distribution for the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewProfile {
    pub class_names: Vec<String>,
    /// Non-negative, sum to 1 within 1e-9.
    pub fractions: Vec<f64>,
    pub total_count: usize,
    /// Scan-group count; `None` aims for ~40 records per group.
    pub groups: Option<usize>,
}

impl SkewProfile {
    pub fn new(
        class_names: Vec<String>,
        fractions: Vec<f64>,
        total_count: usize,
        groups: Option<usize>,
    ) -> Result<Self> {
        if class_names.len() != fractions.len() || class_names.is_empty() {
            return Err(Error::Config(
                "profile needs one fraction per class name".into(),
            ));
        }
        let sum: f64 = fractions.iter().sum();
        if fractions.iter().any(|f| *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "profile fractions must be non-negative and sum to 1, got {sum}"
            )));
        }
        if total_count == 0 {
            return Err(Error::Config("total_count must be positive".into()));
        }
        Ok(SkewProfile {
            class_names,
            fractions,
            total_count,
            groups,
        })
    }

    /// The published anatomy skew, scaled to `total` records. Group count
    /// scales from the published 216 scans (exactly 216 at the published
    /// total of 15425).
    pub fn table1(total: usize) -> Result<Self> {
        let names = table1_counts()
            .iter()
            .map(|(n, _)| n.to_string())
            .collect();
        let fractions = table1_counts()
            .iter()
            .map(|(_, c)| *c as f64 / TABLE1_TOTAL as f64)
            .collect();
        let groups =
            (((total * TABLE1_GROUPS) as f64 / TABLE1_TOTAL as f64).round() as usize).max(2);
        SkewProfile::new(names, fractions, total, Some(groups))
    }

    pub fn uniform(classes: usize, total: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Config("uniform profile needs >= 1 class".into()));
        }
        let names = (0..classes).map(|i| format!("class{i}")).collect();
        let fractions = vec![1.0 / classes as f64; classes];
        SkewProfile::new(names, fractions, total, None)
    }

    pub fn from_kind(kind: &ProfileKind, total: usize, groups: Option<usize>) -> Result<Self> {
        let mut profile = match kind {
            ProfileKind::Table1 => SkewProfile::table1(total)?,
            ProfileKind::Uniform { classes } => SkewProfile::uniform(*classes, total)?,
            ProfileKind::Custom { names, fractions } => {
                SkewProfile::new(names.clone(), fractions.clone(), total, None)?
            }
        };
        if groups.is_some() {
            profile.groups = groups;
        }
        Ok(profile)
    }

    /// Largest-remainder apportionment of `total_count` over the fractions:
    /// floor every quota, then hand the leftover units to the largest
    /// fractional remainders (ties to the lower class index). The result
    /// sums to `total_count` exactly.
    pub fn apportion(&self) -> Vec<usize> {
        let norm: f64 = self.fractions.iter().sum();
        let total = self.total_count;
        let quotas: Vec<f64> = self
            .fractions
            .iter()
            .map(|f| f / norm * total as f64)
            .collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &idx in order.iter().take(total - assigned) {
            counts[idx] += 1;
        }
        counts
    }
}

/// Generates a dataset of Gaussian class clusters following `profile`.
///
/// Class centers (one per context, so local and global live in distinct
/// sub-clusters) are drawn from `N(0, (spread/overlap)^2 I)`; records are
/// drawn from `N(center, spread^2 I)`. Records are shuffled and bundled into
/// scan groups so every group mixes classes. Fixed seeds reproduce the
/// dataset exactly.
pub fn synth_generate(
    profile: &SkewProfile,
    d_local: usize,
    d_global: usize,
    spread: f64,
    overlap: f64,
    seed: u64,
) -> Result<Dataset> {
    if spread <= 0.0 || overlap <= 0.0 {
        return Err(Error::Config(
            "spread and overlap must be positive".into(),
        ));
    }
    let n_classes = profile.class_names.len();
    if profile.total_count < n_classes {
        return Err(Error::Config(format!(
            "total_count {} is below the class count {n_classes}",
            profile.total_count
        )));
    }
    let counts = profile.apportion();
    let center_scale = spread / overlap;

    let mut center_rng = derive_rng(seed, "synth-centers");
    let gauss_vec = |rng: &mut crate::nn::SeededRng, dim: usize, scale: f64| -> Vec<f64> {
        (0..dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect()
    };
    let centers: Vec<(Vec<f64>, Vec<f64>)> = (0..n_classes)
        .map(|_| {
            (
                gauss_vec(&mut center_rng, d_local, center_scale),
                gauss_vec(&mut center_rng, d_global, center_scale),
            )
        })
        .collect();

    let mut sample_rng = derive_rng(seed, "synth-samples");
    let mut records = Vec::with_capacity(profile.total_count);
    let mut serial = 0usize;
    for (class, &count) in counts.iter().enumerate() {
        let (cl, cg) = &centers[class];
        for _ in 0..count {
            let local: Vec<f64> = cl
                .iter()
                .map(|c| c + sample_rng.sample::<f64, _>(StandardNormal) * spread)
                .collect();
            let global: Vec<f64> = cg
                .iter()
                .map(|c| c + sample_rng.sample::<f64, _>(StandardNormal) * spread)
                .collect();
            records.push(EmbeddingRecord {
                id: format!("r{serial:06}"),
                group_id: String::new(),
                class,
                local: Tensor::vector(local),
                global: Tensor::vector(global),
            });
            serial += 1;
        }
    }

    // Shuffle, then carve into contiguous scan groups of near-equal size.
    let mut group_rng = derive_rng(seed, "synth-groups");
    records.shuffle(&mut group_rng);
    let total = records.len();
    let n_groups = profile
        .groups
        .unwrap_or_else(|| (total / 40).max(2))
        .clamp(1, total.max(1));
    let base = total / n_groups;
    let rem = total % n_groups;
    let mut cursor = 0usize;
    for g in 0..n_groups {
        let size = base + usize::from(g < rem);
        for rec in &mut records[cursor..cursor + size] {
            rec.group_id = format!("scan{g:04}");
        }
        cursor += size;
    }

    let ds = Dataset {
        records,
        class_names: profile.class_names.clone(),
        d_local,
        d_global,
    };
    ds.validate()?;
    Ok(ds)
}
