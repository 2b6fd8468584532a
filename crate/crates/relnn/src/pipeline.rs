//! Stage orchestration: the functions behind the CLI subcommands, plus the
//! in-memory pipeline used by sweeps and tests.
//!
//! File-based stages share one working directory with conventional names
//! (`dataset.csv`, `train.csv`, `base.ckpt`, ...), so subcommands compose
//! without flag plumbing.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::basenet::{median_class_count, train_basenet, BaseNetHead};
use crate::config::{RunConfig, StrategyKind};
use crate::data::{
    group_split, read_class_manifest, read_dataset_csv, read_embeddings_csv, synth_generate,
    write_checkpoint, write_class_manifest, write_dataset_csv, write_embeddings_csv,
    write_predictions_csv, CheckpointMeta, Dataset, EmbeddingSet, ModelKind, PredictionRow,
    SkewProfile,
};
use crate::error::{Error, Result};
use crate::knn::KnnIndex;
use crate::metrics::{compute_metrics, MetricsSummary, Report, SystemReport, REPORT_SCHEMA_VERSION};
use crate::nn::{derive_rng, gradcheck_mlp, randomize_params, GradcheckLoss};
use crate::parallel::par_map;
use crate::relnet::{
    build_training_pairs, gradcheck_relation, predict_batch, train_rn, ReferenceStrategy,
    RelationModel,
};
use crate::tensor::Tensor;

/// Conventional artifact locations inside one working directory.
#[derive(Debug, Clone)]
pub struct Paths {
    root: PathBuf,
}

impl Paths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Paths { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.csv")
    }

    pub fn classes(&self) -> PathBuf {
        self.root.join("classes.txt")
    }

    pub fn train(&self) -> PathBuf {
        self.root.join("train.csv")
    }

    pub fn test(&self) -> PathBuf {
        self.root.join("test.csv")
    }

    pub fn base_ckpt(&self) -> PathBuf {
        self.root.join("base.ckpt")
    }

    pub fn base_loss(&self) -> PathBuf {
        self.root.join("base_loss.csv")
    }

    pub fn embeddings(&self, split: &str) -> PathBuf {
        self.root.join(format!("{split}_embeddings.csv"))
    }

    pub fn rn_g(&self, kind: StrategyKind) -> PathBuf {
        self.root.join(format!("rn_{}_g.ckpt", kind.name()))
    }

    pub fn rn_f(&self, kind: StrategyKind) -> PathBuf {
        self.root.join(format!("rn_{}_f.ckpt", kind.name()))
    }

    pub fn rn_loss(&self, kind: StrategyKind) -> PathBuf {
        self.root.join(format!("rn_{}_loss.csv", kind.name()))
    }

    pub fn predictions(&self, system: &str) -> PathBuf {
        self.root.join(format!("predictions_{system}.csv"))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn sweep(&self) -> PathBuf {
        self.root.join("sweep.csv")
    }

    fn ensure_root(&self) -> Result<()> {
        std::fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))
    }
}

fn require(path: &Path, produced_by: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "missing artifact {}; run `relnn {produced_by}` first",
            path.display()
        )))
    }
}

pub fn train_strategy(cfg: &RunConfig) -> ReferenceStrategy {
    ReferenceStrategy::from_kind(cfg.strategy, cfg.k)
}

pub fn test_strategy(cfg: &RunConfig) -> ReferenceStrategy {
    ReferenceStrategy::from_kind(cfg.test_strategy.unwrap_or(StrategyKind::Nn), cfg.k)
}

/// Generates the configured synthetic dataset (in memory).
pub fn synth_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let profile = SkewProfile::from_kind(
        &cfg.generator.profile,
        cfg.generator.total,
        cfg.generator.groups,
    )?;
    synth_generate(
        &profile,
        cfg.d_local,
        cfg.d_global,
        cfg.generator.spread,
        cfg.generator.overlap,
        cfg.seed,
    )
}

/// Initializes and trains the head on `train`, returning it with the
/// per-epoch loss trace.
pub fn train_base_stage(cfg: &RunConfig, train: &Dataset) -> Result<(BaseNetHead, Vec<f64>)> {
    let mut init_rng = derive_rng(cfg.seed, "base-init");
    let mut head = BaseNetHead::new(
        cfg.d_local,
        cfg.d_global,
        cfg.base_hidden,
        cfg.embedding_dim,
        train.n_classes(),
        cfg.dropout,
        &mut init_rng,
    )?;
    let target = cfg
        .target_per_class
        .unwrap_or_else(|| median_class_count(train));
    let trace = train_basenet(
        train,
        &mut head,
        target,
        cfg.jitter_sigma,
        cfg.sgd(),
        cfg.base_epochs,
        cfg.seed,
    )?;
    Ok((head, trace))
}

/// Builds pairs under `kind` and trains a fresh relation model on them.
/// Model initialization depends only on the seed, so different strategies
/// start from identical weights.
pub fn train_rn_stage(
    cfg: &RunConfig,
    train_emb: &EmbeddingSet,
    index: &KnnIndex,
    kind: StrategyKind,
) -> Result<(RelationModel, Vec<f64>, usize)> {
    let mut init_rng = derive_rng(cfg.seed, "rn-init");
    let mut model = RelationModel::new(
        cfg.embedding_dim,
        cfg.g_hidden,
        cfg.ref_dim,
        cfg.f_hidden,
        cfg.dropout,
        cfg.concat_target_to_ref,
        &mut init_rng,
    )?;
    let negatives = cfg
        .negatives_per_target
        .unwrap_or_else(|| train_emb.n_classes().saturating_sub(1));
    let pairs = build_training_pairs(
        train_emb,
        index,
        &ReferenceStrategy::from_kind(kind, cfg.k),
        negatives,
        cfg.seed,
    )?;
    let trace = train_rn(
        train_emb,
        &pairs,
        &mut model,
        cfg.sgd(),
        cfg.rn_epochs,
        cfg.positive_weight,
        cfg.seed,
    )?;
    Ok((model, trace, pairs.skipped_singletons))
}

/// Head predictions over raw records, with softmax probabilities as scores.
pub fn base_predictions(head: &BaseNetHead, test: &Dataset) -> Result<Vec<PredictionRow>> {
    let rows: Vec<Result<PredictionRow>> = par_map(&test.records, |rec| {
        let logits = head.logits(rec)?;
        let max = logits
            .data()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.data().iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let scores: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        Ok(PredictionRow {
            id: rec.id.clone(),
            true_class: rec.class,
            pred_class: crate::basenet::argmax(&scores),
            scores,
        })
    });
    rows.into_iter().collect()
}

/// Relation-network predictions for every test embedding. Returns the rows
/// plus the count of empty-class warnings.
pub fn rn_predictions(
    cfg: &RunConfig,
    model: &RelationModel,
    index: &KnnIndex,
    test_emb: &EmbeddingSet,
) -> Result<(Vec<PredictionRow>, usize)> {
    let strategy = test_strategy(cfg);
    let predictions = predict_batch(model, index, test_emb, &strategy, cfg.seed)?;
    let warnings = predictions.iter().map(|p| p.empty_classes).sum();
    let rows = test_emb
        .records
        .iter()
        .zip(predictions)
        .map(|(rec, p)| PredictionRow {
            id: rec.id.clone(),
            true_class: rec.class,
            pred_class: p.predicted,
            scores: p.scores,
        })
        .collect();
    Ok((rows, warnings))
}

pub fn summarize(rows: &[PredictionRow], n_classes: usize) -> Result<MetricsSummary> {
    let truths: Vec<usize> = rows.iter().map(|r| r.true_class).collect();
    let preds: Vec<usize> = rows.iter().map(|r| r.pred_class).collect();
    Ok(compute_metrics(&truths, &preds, n_classes)?.1)
}

// ---------------------------------------------------------------------------
// File-based stages (the CLI subcommands).
// ---------------------------------------------------------------------------

pub fn cmd_synth(cfg: &RunConfig, paths: &Paths) -> Result<Dataset> {
    paths.ensure_root()?;
    let ds = synth_dataset(cfg)?;
    write_dataset_csv(&ds, &paths.dataset())?;
    write_class_manifest(&ds.class_names, &paths.classes())?;
    Ok(ds)
}

pub fn cmd_split(cfg: &RunConfig, paths: &Paths, train_fraction: f64) -> Result<(usize, usize)> {
    require(&paths.dataset(), "synth")?;
    let manifest = read_class_manifest(&paths.classes()).ok();
    let ds = read_dataset_csv(&paths.dataset(), manifest.as_deref())?;
    if manifest.is_none() {
        write_class_manifest(&ds.class_names, &paths.classes())?;
    }
    let (train, test) = group_split(&ds, train_fraction, cfg.seed)?;
    write_dataset_csv(&train, &paths.train())?;
    write_dataset_csv(&test, &paths.test())?;
    Ok((train.records.len(), test.records.len()))
}

fn load_split(paths: &Paths, split: &str) -> Result<Dataset> {
    let path = match split {
        "train" => paths.train(),
        "test" => paths.test(),
        other => return Err(Error::Config(format!("unknown split {other:?}"))),
    };
    require(&path, "split")?;
    require(&paths.classes(), "split")?;
    let manifest = read_class_manifest(&paths.classes())?;
    read_dataset_csv(&path, Some(&manifest))
}

fn write_loss_trace(trace: &[f64], path: &Path) -> Result<()> {
    let mut text = String::from("epoch,mean_loss\n");
    for (epoch, loss) in trace.iter().enumerate() {
        text.push_str(&format!("{epoch},{loss}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_train_base(cfg: &RunConfig, paths: &Paths) -> Result<Vec<f64>> {
    let train = load_split(paths, "train")?;
    let (head, trace) = train_base_stage(cfg, &train)?;
    write_checkpoint(
        &head.mlp,
        ModelKind::Base,
        CheckpointMeta {
            epochs: cfg.base_epochs as u32,
            seed: cfg.seed,
            config_hash: cfg.hash(),
        },
        &paths.base_ckpt(),
    )?;
    write_loss_trace(&trace, &paths.base_loss())?;
    Ok(trace)
}

fn load_head(paths: &Paths) -> Result<BaseNetHead> {
    require(&paths.base_ckpt(), "train-base")?;
    let ckpt = crate::data::read_checkpoint(&paths.base_ckpt())?;
    BaseNetHead::from_mlp(ckpt.expect_kind(ModelKind::Base, &paths.base_ckpt())?)
}

/// Embeds both splits with the trained head.
pub fn cmd_embed(paths: &Paths) -> Result<()> {
    let head = load_head(paths)?;
    for split in ["train", "test"] {
        let ds = load_split(paths, split)?;
        let set = head.embed_dataset(&ds)?;
        write_embeddings_csv(&set, &paths.embeddings(split))?;
    }
    Ok(())
}

fn load_embeddings(paths: &Paths, split: &str) -> Result<EmbeddingSet> {
    let path = paths.embeddings(split);
    require(&path, "embed")?;
    require(&paths.classes(), "split")?;
    let manifest = read_class_manifest(&paths.classes())?;
    read_embeddings_csv(&path, Some(&manifest))
}

pub fn cmd_train_rn(cfg: &RunConfig, paths: &Paths, kinds: &[StrategyKind]) -> Result<()> {
    let train_emb = load_embeddings(paths, "train")?;
    let index = KnnIndex::build(&train_emb)?;
    for &kind in kinds {
        let (model, trace, skipped) = train_rn_stage(cfg, &train_emb, &index, kind)?;
        if skipped > 0 {
            eprintln!(
                "train-rn[{}]: {skipped} singleton-class targets had no positive pair",
                kind.name()
            );
        }
        let meta = CheckpointMeta {
            epochs: cfg.rn_epochs as u32,
            seed: cfg.seed,
            config_hash: cfg.hash(),
        };
        write_checkpoint(&model.g, ModelKind::GNet, meta, &paths.rn_g(kind))?;
        write_checkpoint(&model.f, ModelKind::FNet, meta, &paths.rn_f(kind))?;
        write_loss_trace(&trace, &paths.rn_loss(kind))?;
    }
    Ok(())
}

fn load_rn(cfg: &RunConfig, paths: &Paths, kind: StrategyKind) -> Result<RelationModel> {
    let hint = format!("train-rn --strategy {}", kind.name());
    require(&paths.rn_g(kind), &hint)?;
    require(&paths.rn_f(kind), &hint)?;
    let g = crate::data::read_checkpoint(&paths.rn_g(kind))?
        .expect_kind(ModelKind::GNet, &paths.rn_g(kind))?;
    let f = crate::data::read_checkpoint(&paths.rn_f(kind))?
        .expect_kind(ModelKind::FNet, &paths.rn_f(kind))?;
    RelationModel::from_parts(g, f, cfg.concat_target_to_ref)
}

/// Predicts the test split with the RN trained under `kind`; returns the
/// number of empty-class warnings.
pub fn cmd_predict(cfg: &RunConfig, paths: &Paths, kind: StrategyKind) -> Result<usize> {
    let train_emb = load_embeddings(paths, "train")?;
    let test_emb = load_embeddings(paths, "test")?;
    let index = KnnIndex::build(&train_emb)?;
    let model = load_rn(cfg, paths, kind)?;
    let (rows, warnings) = rn_predictions(cfg, &model, &index, &test_emb)?;
    write_predictions_csv(
        &rows,
        &test_emb.class_names,
        &paths.predictions(&format!("rn_{}", kind.name())),
    )?;
    Ok(warnings)
}

/// Evaluates the three systems (head alone, RN trained all-to-all, RN
/// trained nearest-k), writes their prediction files and the report.
pub fn cmd_eval(cfg: &RunConfig, paths: &Paths) -> Result<Report> {
    let head = load_head(paths)?;
    let test = load_split(paths, "test")?;
    let train_emb = load_embeddings(paths, "train")?;
    let test_emb = load_embeddings(paths, "test")?;
    let index = KnnIndex::build(&train_emb)?;
    let n_classes = test.n_classes();

    let base_rows = base_predictions(&head, &test)?;
    write_predictions_csv(&base_rows, &test.class_names, &paths.predictions("base"))?;
    let mut systems = vec![SystemReport {
        name: "basenet".into(),
        metrics: summarize(&base_rows, n_classes)?,
        empty_class_warnings: 0,
    }];

    for (kind, label) in [(StrategyKind::All, "rn_all"), (StrategyKind::Nn, "rn_nn")] {
        let model = load_rn(cfg, paths, kind)?;
        let (rows, warnings) = rn_predictions(cfg, &model, &index, &test_emb)?;
        write_predictions_csv(&rows, &test.class_names, &paths.predictions(label))?;
        systems.push(SystemReport {
            name: label.into(),
            metrics: summarize(&rows, n_classes)?,
            empty_class_warnings: warnings,
        });
    }

    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        config_hash: cfg.hash_hex(),
        class_names: test.class_names.clone(),
        systems,
    };
    report.save(&paths.report())?;
    Ok(report)
}

/// The whole conventional-directory pipeline in one call: synth, split,
/// train-base, embed, train-rn for both compared strategies, eval.
pub fn run_all(cfg: &RunConfig, out: impl Into<PathBuf>) -> Result<Report> {
    let paths = Paths::new(out);
    cmd_synth(cfg, &paths)?;
    cmd_split(cfg, &paths, 0.8)?;
    cmd_train_base(cfg, &paths)?;
    cmd_embed(&paths)?;
    cmd_train_rn(cfg, &paths, &[StrategyKind::All, StrategyKind::Nn])?;
    cmd_eval(cfg, &paths)
}

// ---------------------------------------------------------------------------
// Gradient-check command.
// ---------------------------------------------------------------------------

/// Runs the finite-difference check on a desk-size head and on the full
/// relation composition, at randomized parameters. Returns the two max
/// relative errors.
pub fn cmd_gradcheck(cfg: &RunConfig, seed: u64) -> Result<(f64, f64)> {
    let mut rng = derive_rng(seed, "gradcheck");
    let mut head = BaseNetHead::new(
        cfg.d_local.min(8),
        cfg.d_global.min(8),
        cfg.base_hidden.min(16),
        cfg.embedding_dim.min(8),
        15,
        cfg.dropout,
        &mut rng,
    )?;
    randomize_params(&mut head.mlp, 0.5, &mut rng);
    let input = Tensor::vector(
        (0..head.mlp.in_dim())
            .map(|i| ((i as f64) * 0.37).sin())
            .collect(),
    );
    let head_err = gradcheck_mlp(&mut head.mlp, &input, GradcheckLoss::SoftmaxCe(0), seed)?;

    let embed = cfg.embedding_dim.min(8);
    let mut model = RelationModel::new(
        embed,
        cfg.g_hidden.min(12),
        cfg.ref_dim.min(8),
        cfg.f_hidden.min(10),
        cfg.dropout,
        cfg.concat_target_to_ref,
        &mut rng,
    )?;
    randomize_params(&mut model, 0.5, &mut rng);
    let target = Tensor::vector((0..embed).map(|i| ((i as f64) * 0.73).cos()).collect());
    let members: Vec<(String, Tensor)> = (0..4)
        .map(|m| {
            (
                format!("m{m}"),
                Tensor::vector(
                    (0..embed)
                        .map(|i| ((m * 7 + i) as f64 * 0.51).sin())
                        .collect(),
                ),
            )
        })
        .collect();
    let rel_err = gradcheck_relation(&mut model, &target, &members, true, seed)?;
    Ok((head_err, rel_err))
}

// ---------------------------------------------------------------------------
// Strategy sweep.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub strategies: Vec<StrategyKind>,
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub strategy: StrategyKind,
    pub k: usize,
    pub seed: u64,
    pub weighted_f1: f64,
    pub wall_secs: f64,
}

/// One full in-memory run (synth through evaluation) under `cfg`. Returns
/// the relation network's metrics and the head's, both on the test split.
pub fn run_single(cfg: &RunConfig) -> Result<(MetricsSummary, MetricsSummary)> {
    let ds = synth_dataset(cfg)?;
    let (train, test) = group_split(&ds, 0.8, cfg.seed)?;
    let (head, _) = train_base_stage(cfg, &train)?;
    let train_emb = head.embed_dataset(&train)?;
    let test_emb = head.embed_dataset(&test)?;
    let index = KnnIndex::build(&train_emb)?;
    let (model, _, _) = train_rn_stage(cfg, &train_emb, &index, cfg.strategy)?;
    let (rn_rows, _) = rn_predictions(cfg, &model, &index, &test_emb)?;
    let base_rows = base_predictions(&head, &test)?;
    Ok((
        summarize(&rn_rows, ds.n_classes())?,
        summarize(&base_rows, ds.n_classes())?,
    ))
}

/// Runs the cartesian sweep. Rows are independent full runs and execute in
/// parallel under the `parallel` feature; the returned order is the
/// deterministic cartesian order (strategy, then k, then seed) regardless of
/// scheduling. Wall time is measured per row.
pub fn run_sweep(cfg: &RunConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let combos: Vec<(StrategyKind, usize, u64)> = spec
        .strategies
        .iter()
        .flat_map(|&s| {
            spec.ks
                .iter()
                .flat_map(move |&k| spec.seeds.iter().map(move |&seed| (s, k, seed)))
        })
        .collect();
    if combos.is_empty() {
        return Err(Error::Config("sweep needs at least one combination".into()));
    }
    let rows: Vec<Result<SweepRow>> = par_map(&combos, |&(strategy, k, seed)| {
        let mut row_cfg = cfg.clone();
        row_cfg.strategy = strategy;
        row_cfg.k = k;
        row_cfg.seed = seed;
        let started = Instant::now();
        let (rn, _) = run_single(&row_cfg)?;
        Ok(SweepRow {
            strategy,
            k,
            seed,
            weighted_f1: rn.weighted.f1,
            wall_secs: started.elapsed().as_secs_f64(),
        })
    });
    rows.into_iter().collect()
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut text = String::from("strategy,k,seed,weighted_f1,wall_secs\n");
    for row in rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            row.strategy.name(),
            row.k,
            row.seed,
            row.weighted_f1,
            row.wall_secs
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
