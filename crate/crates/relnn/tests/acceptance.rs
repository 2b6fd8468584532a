//! Acceptance suite: every release criterion as one test, each printing a
//! single PASS/FAIL line. Run with
//! `cargo test --test acceptance -- --nocapture --test-threads=1`.

use std::time::Instant;

use relnn::basenet::{balanced_epoch, BaseNetHead, SamplerConfig};
use relnn::config::{GeneratorConfig, ProfileKind, RunConfig, StrategyKind};
use relnn::data::{
    class_histogram, group_split, synth_generate, table1_counts, ClassCounts, SkewProfile,
};
use relnn::knn::{brute_force_oracle, KnnIndex};
use relnn::metrics::compute_metrics;
use relnn::nn::{gradcheck_mlp, randomize_params, seeded, GradcheckLoss, Mode};
use relnn::pipeline::{
    base_predictions, rn_predictions, run_all, summarize, synth_dataset, train_base_stage,
    train_rn_stage, Paths,
};
use relnn::relnet::{
    build_training_pairs, gradcheck_relation, relation_score, RelationModel,
    ReferenceStrategy,
};
use relnn::tensor::Tensor;

mod helpers;

/// Prints the per-criterion verdict line before asserting, so failures still
/// report.
fn conclude(number: u32, name: &str, ok: bool, detail: String) {
    println!(
        "acceptance {number} ({name}): {} — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "acceptance criterion {number} ({name}) failed: {detail}");
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness: head and g∘mean∘f vs central finite differences,
//    5 random seeds each, max relative error < 1e-4, under 60 s.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let tolerance = 1e-4;
    let mut worst_head = 0.0_f64;
    let mut worst_rel = 0.0_f64;

    for seed in 0..5u64 {
        let mut rng = seeded(seed);
        let mut head = BaseNetHead::new(6, 6, 16, 8, 15, 0.5, &mut rng).unwrap();
        randomize_params(&mut head.mlp, 0.5, &mut rng);
        let input = Tensor::vector(helpers::random_coords(&mut rng, 12, false));
        let class = (seed as usize * 3) % 15;
        let err =
            gradcheck_mlp(&mut head.mlp, &input, GradcheckLoss::SoftmaxCe(class), seed).unwrap();
        worst_head = worst_head.max(err);
    }

    for seed in 0..5u64 {
        let mut rng = seeded(1000 + seed);
        let mut model = RelationModel::new(8, 12, 8, 10, 0.5, false, &mut rng).unwrap();
        randomize_params(&mut model, 0.5, &mut rng);
        let target = Tensor::vector(helpers::random_coords(&mut rng, 8, false));
        let members: Vec<(String, Tensor)> = (0..4)
            .map(|m| {
                (
                    format!("m{m}"),
                    Tensor::vector(helpers::random_coords(&mut rng, 8, false)),
                )
            })
            .collect();
        let err =
            gradcheck_relation(&mut model, &target, &members, seed % 2 == 0, seed).unwrap();
        worst_rel = worst_rel.max(err);
    }

    let elapsed = started.elapsed().as_secs_f64();
    let ok = worst_head < tolerance && worst_rel < tolerance && elapsed < 60.0;
    conclude(
        1,
        "gradient correctness",
        ok,
        format!(
            "head max rel err {worst_head:.2e}, relation max rel err {worst_rel:.2e}, {elapsed:.1}s"
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. k-NN exactness vs the brute-force oracle on 200 random datasets
//    (up to 10^4 points, 64 dims, 15 classes), element-wise including tie
//    order, under 120 s.
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_knn_exactness() {
    let started = Instant::now();
    let mut rng = seeded(2024);
    let mut comparisons = 0usize;
    let mut max_points = 0usize;

    for round in 0..200u64 {
        use rand::Rng;
        // Log-uniform sizes so large datasets appear without dominating the
        // budget; grid coordinates on even rounds force distance ties.
        let exponent = rng.random_range(0.0..4.0_f64);
        let n = (10.0_f64.powf(exponent).ceil() as usize).clamp(15, 10_000);
        max_points = max_points.max(n);
        let grid = round % 2 == 0;
        let set = helpers::random_embedding_set(round ^ 0x51ce, n, 64, 15, grid);
        let index = KnnIndex::build(&set).unwrap();
        for _ in 0..5 {
            let (target, class, exclude) = helpers::random_query(&set, &mut rng, grid);
            let k = rng.random_range(1..20usize);
            let fast = index.query(&target, class, k, exclude.as_deref());
            let slow = brute_force_oracle(&set, &target, class, k, exclude.as_deref());
            match (fast, slow) {
                (Ok(a), Ok(b)) => {
                    assert_eq!(a, b, "round {round}: fast/oracle disagree");
                    comparisons += 1;
                }
                (Err(_), Err(_)) => {}
                (a, b) => panic!("round {round}: divergent outcomes {a:?} vs {b:?}"),
            }
        }
    }

    let elapsed = started.elapsed().as_secs_f64();
    let ok = elapsed < 120.0 && comparisons > 500;
    conclude(
        2,
        "k-NN exactness",
        ok,
        format!(
            "200 datasets (largest {max_points} points), {comparisons} exact query matches, {elapsed:.1}s"
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Permutation invariance of the relation score over 1000 random
//    (model, target, ref_set) triples, bit-exact, under 30 s.
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_permutation_invariance() {
    let started = Instant::now();
    let mut rng = seeded(3);
    for trial in 0..1000u64 {
        use rand::Rng;
        let dim = rng.random_range(1..8usize);
        let set_size = rng.random_range(1..9usize);
        let model = RelationModel::new(dim, 6, 4, 5, 0.5, false, &mut rng).unwrap();
        let (target, members) = helpers::random_reference_set(&mut rng, set_size, dim);
        let ordered: Vec<(&str, &Tensor)> =
            members.iter().map(|(id, v)| (id.as_str(), v)).collect();
        let base =
            relation_score(&model, &target, &ordered, Mode::Eval, &mut seeded(0)).unwrap();
        let permuted = helpers::shuffled(&ordered, trial ^ 0x9e37);
        let score =
            relation_score(&model, &target, &permuted, Mode::Eval, &mut seeded(0)).unwrap();
        assert_eq!(
            base.to_bits(),
            score.to_bits(),
            "trial {trial}: permutation changed the score"
        );
        assert!(base > 0.0 && base < 1.0);
    }
    let elapsed = started.elapsed().as_secs_f64();
    conclude(
        3,
        "permutation invariance",
        elapsed < 30.0,
        format!("1000 triples bit-exact, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------------------
// 4. Metric oracle: the hand-derived example exactly, plus agreement with an
//    independent re-implementation on 100 random label vectors to 1e-12.
// ---------------------------------------------------------------------------

/// Independent metric computation: straight from the definitions, counting
/// with filters rather than a confusion matrix.
fn reference_metrics(truths: &[usize], preds: &[usize], c: usize) -> (Vec<[f64; 3]>, [f64; 3]) {
    let mut per_class = Vec::with_capacity(c);
    let mut weighted = [0.0; 3];
    let total = truths.len() as f64;
    for class in 0..c {
        let tp = truths
            .iter()
            .zip(preds)
            .filter(|(t, p)| **t == class && **p == class)
            .count() as f64;
        let predicted = preds.iter().filter(|p| **p == class).count() as f64;
        let actual = truths.iter().filter(|t| **t == class).count() as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push([precision, recall, f1]);
        weighted[0] += actual * precision;
        weighted[1] += actual * recall;
        weighted[2] += actual * f1;
    }
    for w in &mut weighted {
        *w /= total;
    }
    (per_class, weighted)
}

#[test]
fn criterion_4_metric_oracle() {
    // Hand-derived example: truths [A,A,B], preds [A,B,B] -> weighted F1 2/3.
    let (_, summary) = compute_metrics(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
    assert_eq!(summary.per_class[0].precision, 1.0);
    assert_eq!(summary.per_class[0].recall, 0.5);
    assert!((summary.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
    assert!((summary.per_class[1].f1 - 2.0 / 3.0).abs() < 1e-15);
    assert!((summary.weighted.f1 - 2.0 / 3.0).abs() < 1e-15);

    let mut rng = seeded(4);
    let mut max_diff = 0.0_f64;
    for _ in 0..100 {
        use rand::Rng;
        let c = rng.random_range(2..15usize);
        let n = rng.random_range(1..200usize);
        let truths: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let (_, summary) = compute_metrics(&truths, &preds, c).unwrap();
        let (ref_per_class, ref_weighted) = reference_metrics(&truths, &preds, c);
        for (mine, reference) in summary.per_class.iter().zip(&ref_per_class) {
            max_diff = max_diff
                .max((mine.precision - reference[0]).abs())
                .max((mine.recall - reference[1]).abs())
                .max((mine.f1 - reference[2]).abs());
        }
        max_diff = max_diff
            .max((summary.weighted.precision - ref_weighted[0]).abs())
            .max((summary.weighted.recall - ref_weighted[1]).abs())
            .max((summary.weighted.f1 - ref_weighted[2]).abs());
    }
    conclude(
        4,
        "metric oracle",
        max_diff < 1e-12,
        format!("hand example exact; 100 random vectors max |diff| {max_diff:.2e}"),
    );
}

// ---------------------------------------------------------------------------
// 5. Table 1 generator fidelity: exact published class counts at the
//    published total, and the 216-group dataset splits 173/43.
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_table1_fidelity() {
    let profile = SkewProfile::table1(15_425).unwrap();
    let ds = synth_generate(&profile, 3, 3, 1.0, 0.5, 42).unwrap();
    let ClassCounts { counts, .. } = class_histogram(&ds);
    let mut mismatches = Vec::new();
    for ((name, expected), actual) in table1_counts().iter().zip(&counts) {
        if actual != expected {
            mismatches.push(format!("{name}: {actual} != {expected}"));
        }
    }

    let groups: std::collections::BTreeSet<&str> =
        ds.records.iter().map(|r| r.group_id.as_str()).collect();
    let (train, test) = group_split(&ds, 0.8, 7).unwrap();
    let train_groups = helpers::group_ids(&train);
    let test_groups = helpers::group_ids(&test);

    let ok = mismatches.is_empty()
        && groups.len() == 216
        && train_groups.len() == 173
        && test_groups.len() == 43;
    conclude(
        5,
        "table 1 generator fidelity",
        ok,
        format!(
            "counts exact ({} classes), {} groups split {}/{}{}",
            counts.len(),
            groups.len(),
            train_groups.len(),
            test_groups.len(),
            if mismatches.is_empty() {
                String::new()
            } else {
                format!("; mismatches: {mismatches:?}")
            }
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. Sampler uniformity on the Table-1-skewed dataset for 20 random seeds.
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_sampler_uniformity() {
    let profile = SkewProfile::table1(15_425).unwrap();
    let ds = synth_generate(&profile, 3, 3, 1.0, 0.5, 6).unwrap();
    let target = 500;
    let mut failures = 0usize;
    for seed in 0..20u64 {
        let items = balanced_epoch(
            &ds,
            &SamplerConfig {
                target_per_class: target,
                jitter_sigma: 0.1,
                seed,
            },
        )
        .unwrap();
        let mut histogram = vec![0usize; ds.n_classes()];
        for (_, class) in &items {
            histogram[*class] += 1;
        }
        if histogram.iter().any(|&c| c != target) {
            failures += 1;
        }
    }
    conclude(
        6,
        "sampler uniformity",
        failures == 0,
        format!("20 seeds x 15 classes at target {target}, {failures} non-uniform epochs"),
    );
}

// ---------------------------------------------------------------------------
// 7. Strategy degeneracy: with k >= max class size and equal seeds,
//    nearest-k and all-to-all give identical pair sets, loss traces, and
//    final weighted F1.
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_strategy_degeneracy() {
    let mut cfg = RunConfig {
        seed: 11,
        d_local: 3,
        d_global: 3,
        base_hidden: 16,
        embedding_dim: 8,
        g_hidden: 8,
        ref_dim: 6,
        f_hidden: 6,
        base_epochs: 2,
        rn_epochs: 2,
        negatives_per_target: Some(2),
        generator: GeneratorConfig {
            profile: ProfileKind::Uniform { classes: 3 },
            total: 120,
            spread: 1.0,
            overlap: 0.4,
            groups: Some(8),
        },
        ..RunConfig::default()
    };

    let ds = synth_dataset(&cfg).unwrap();
    let (train, test) = group_split(&ds, 0.8, cfg.seed).unwrap();
    let (head, _) = train_base_stage(&cfg, &train).unwrap();
    let train_emb = head.embed_dataset(&train).unwrap();
    let test_emb = head.embed_dataset(&test).unwrap();
    let index = KnnIndex::build(&train_emb).unwrap();

    // k at least the largest class size makes nearest-k exhaustive.
    let max_class = (0..index.n_classes())
        .map(|c| index.class_size(c))
        .max()
        .unwrap();
    cfg.k = max_class;

    let negatives = 2;
    let canonical = |strategy: &ReferenceStrategy| {
        let ps = build_training_pairs(&train_emb, &index, strategy, negatives, cfg.seed).unwrap();
        let mut pairs: Vec<(usize, usize, bool, Vec<usize>)> = ps
            .pairs
            .iter()
            .map(|p| {
                let mut members = p.member_indices.clone();
                members.sort_unstable();
                (p.target_index, p.ref_class, p.positive, members)
            })
            .collect();
        pairs.sort();
        pairs
    };
    let pairs_equal = canonical(&ReferenceStrategy::NearestK(cfg.k))
        == canonical(&ReferenceStrategy::AllToAll);

    let mut run = |kind: StrategyKind| {
        let (model, trace, _) = train_rn_stage(&cfg, &train_emb, &index, kind).unwrap();
        let (rows, _) = rn_predictions(&cfg, &model, &index, &test_emb).unwrap();
        let f1 = summarize(&rows, ds.n_classes()).unwrap().weighted.f1;
        (trace, f1)
    };
    let (trace_nn, f1_nn) = run(StrategyKind::Nn);
    let (trace_all, f1_all) = run(StrategyKind::All);

    let ok = pairs_equal && trace_nn == trace_all && f1_nn == f1_all;
    conclude(
        7,
        "strategy degeneracy",
        ok,
        format!(
            "k={max_class}: pair sets equal {pairs_equal}, traces equal {}, F1 {f1_nn:.4} == {f1_all:.4}",
            trace_nn == trace_all
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Qualitative equal-budget comparison on the skewed synthetic profile:
//    at 5 epochs, nearest-k weighted F1 >= all-to-all in >= 7/10 seeds, and
//    its minority-class minimum F1 >= all-to-all's in >= 6/10 seeds, with the
//    head's weighted F1 landing in 0.5..0.8. Under 10 minutes.
// ---------------------------------------------------------------------------

fn comparison_cfg(seed: u64) -> RunConfig {
    RunConfig {
        seed,
        d_local: 6,
        d_global: 6,
        base_hidden: 64,
        embedding_dim: 12,
        g_hidden: 12,
        ref_dim: 8,
        f_hidden: 8,
        k: 5,
        base_epochs: 10,
        rn_epochs: 5,
        jitter_sigma: 0.1,
        negatives_per_target: Some(2),
        generator: GeneratorConfig {
            profile: ProfileKind::Table1,
            total: 5_000,
            spread: 1.0,
            overlap: 1.2,
            groups: None,
        },
        ..RunConfig::default()
    }
}

#[test]
fn criterion_8_qualitative_comparison() {
    let started = Instant::now();
    let seeds: Vec<u64> = (0..10).collect();
    let mut nn_wins_weighted = 0usize;
    let mut nn_wins_minority = 0usize;
    let mut base_f1_sum = 0.0;

    for &seed in &seeds {
        let cfg = comparison_cfg(seed);
        let ds = synth_dataset(&cfg).unwrap();
        let (train, test) = group_split(&ds, 0.8, cfg.seed).unwrap();
        let (head, _) = train_base_stage(&cfg, &train).unwrap();
        let train_emb = head.embed_dataset(&train).unwrap();
        let test_emb = head.embed_dataset(&test).unwrap();
        let index = KnnIndex::build(&train_emb).unwrap();

        let base_summary =
            summarize(&base_predictions(&head, &test).unwrap(), ds.n_classes()).unwrap();
        base_f1_sum += base_summary.weighted.f1;

        let mut outcome = |kind: StrategyKind| {
            let (model, _, _) = train_rn_stage(&cfg, &train_emb, &index, kind).unwrap();
            let (rows, _) = rn_predictions(&cfg, &model, &index, &test_emb).unwrap();
            summarize(&rows, ds.n_classes()).unwrap()
        };
        let all = outcome(StrategyKind::All);
        let nn = outcome(StrategyKind::Nn);

        if nn.weighted.f1 >= all.weighted.f1 {
            nn_wins_weighted += 1;
        }

        // Minority classes: test-set support fraction below 2%.
        let total_support: usize = nn.per_class.iter().map(|m| m.support).sum();
        let minority: Vec<usize> = (0..ds.n_classes())
            .filter(|&c| {
                let s = nn.per_class[c].support;
                s > 0 && (s as f64) < 0.02 * total_support as f64
            })
            .collect();
        let min_f1 = |summary: &relnn::metrics::MetricsSummary| {
            minority
                .iter()
                .map(|&c| summary.per_class[c].f1)
                .fold(f64::INFINITY, f64::min)
        };
        if minority.is_empty() || min_f1(&nn) >= min_f1(&all) {
            nn_wins_minority += 1;
        }
        println!(
            "  seed {seed}: base F1 {:.3}, all {:.3}, nn {:.3}, minority classes {:?}",
            base_summary.weighted.f1, all.weighted.f1, nn.weighted.f1, minority
        );
    }

    let base_mean = base_f1_sum / seeds.len() as f64;
    let elapsed = started.elapsed().as_secs_f64();
    let ok = nn_wins_weighted >= 7
        && nn_wins_minority >= 6
        && (0.5..=0.8).contains(&base_mean)
        && elapsed < 600.0;
    conclude(
        8,
        "qualitative equal-budget comparison",
        ok,
        format!(
            "nn >= all on weighted F1 in {nn_wins_weighted}/10 seeds, on minority min-F1 in \
             {nn_wins_minority}/10; head mean F1 {base_mean:.3}; {elapsed:.0}s"
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. Determinism: the full pipeline run twice under one config produces
//    bit-identical checkpoints, predictions, and reports.
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_pipeline_determinism() {
    let cfg = RunConfig {
        seed: 77,
        d_local: 3,
        d_global: 3,
        base_hidden: 12,
        embedding_dim: 6,
        g_hidden: 8,
        ref_dim: 4,
        f_hidden: 6,
        k: 3,
        base_epochs: 2,
        rn_epochs: 1,
        negatives_per_target: Some(2),
        generator: GeneratorConfig {
            profile: ProfileKind::Table1,
            total: 600,
            spread: 1.0,
            overlap: 0.6,
            groups: Some(12),
        },
        ..RunConfig::default()
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_all(&cfg, dir_a.path()).unwrap();
    run_all(&cfg, dir_b.path()).unwrap();

    let paths_a = Paths::new(dir_a.path());
    let paths_b = Paths::new(dir_b.path());
    let mut compared = 0usize;
    let mut mismatched = Vec::new();
    for (a, b) in [
        (paths_a.dataset(), paths_b.dataset()),
        (paths_a.train(), paths_b.train()),
        (paths_a.test(), paths_b.test()),
        (paths_a.base_ckpt(), paths_b.base_ckpt()),
        (paths_a.rn_g(StrategyKind::All), paths_b.rn_g(StrategyKind::All)),
        (paths_a.rn_f(StrategyKind::All), paths_b.rn_f(StrategyKind::All)),
        (paths_a.rn_g(StrategyKind::Nn), paths_b.rn_g(StrategyKind::Nn)),
        (paths_a.rn_f(StrategyKind::Nn), paths_b.rn_f(StrategyKind::Nn)),
        (paths_a.predictions("base"), paths_b.predictions("base")),
        (paths_a.predictions("rn_all"), paths_b.predictions("rn_all")),
        (paths_a.predictions("rn_nn"), paths_b.predictions("rn_nn")),
        (paths_a.report(), paths_b.report()),
    ] {
        let bytes_a = std::fs::read(&a).unwrap();
        let bytes_b = std::fs::read(&b).unwrap();
        compared += 1;
        if bytes_a != bytes_b {
            mismatched.push(a.file_name().unwrap().to_string_lossy().to_string());
        }
    }
    conclude(
        9,
        "pipeline determinism",
        mismatched.is_empty(),
        format!("{compared} artifacts byte-compared; mismatches: {mismatched:?}"),
    );
}
