use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use relnn::config::{ProfileKind, RunConfig, StrategyKind};
use relnn::data::class_histogram;
use relnn::error::{Error, Result};
use relnn::parallel::configure_threads_from_env;
use relnn::pipeline::{
    cmd_embed, cmd_eval, cmd_gradcheck, cmd_predict, cmd_split, cmd_synth, cmd_train_base,
    cmd_train_rn, run_sweep, write_sweep_csv, Paths, SweepSpec,
};

/// Relation-network classification over embedding vectors, with
/// nearest-neighbor reference mining for imbalanced classes.
///
/// Subcommands share one working directory (--out) with conventional file
/// names, so a full run is:
///
///   relnn synth && relnn split && relnn train-base && relnn embed \
///     && relnn train-rn && relnn eval
#[derive(Parser)]
#[command(name = "relnn", version, about, verbatim_doc_comment)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Working directory for all artifacts.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Neighbor-count override.
    #[arg(long, global = true)]
    k: Option<usize>,

    /// Strategy override: all, nn, random, or far.
    #[arg(long, global = true)]
    strategy: Option<String>,

    /// Epoch-budget override (applies to the stage being run).
    #[arg(long, global = true)]
    epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic imbalanced dataset (dataset.csv, classes.txt).
    Synth {
        /// Skew profile: "table1" or "uniform".
        #[arg(long)]
        profile: Option<String>,
        /// Class count for the uniform profile.
        #[arg(long)]
        profile_classes: Option<usize>,
        /// Total record count.
        #[arg(long)]
        total: Option<usize>,
        /// Scan-group count.
        #[arg(long)]
        groups: Option<usize>,
    },
    /// Split dataset.csv into train.csv / test.csv by whole groups.
    Split {
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
    },
    /// Train the fc head on train.csv (base.ckpt, base_loss.csv).
    TrainBase,
    /// Embed both splits with the trained head (*_embeddings.csv).
    Embed,
    /// Train relation networks on the training embeddings. Without
    /// --strategy, trains both the all-to-all baseline and nearest-k.
    TrainRn,
    /// Predict the test split with one trained relation network.
    Predict,
    /// Evaluate head, RN(all-to-all) and RN(nearest-k); write report.json.
    Eval,
    /// Compare strategies/k/seeds; one CSV row per combination (sweep.csv).
    Sweep {
        /// Comma list, e.g. "all,nn".
        #[arg(long, default_value = "all,nn")]
        strategies: String,
        /// Comma list of neighbor counts; defaults to the configured k.
        #[arg(long)]
        ks: Option<String>,
        /// Comma list or range, e.g. "0,1,2" or "0..10".
        #[arg(long, default_value = "0..3")]
        seeds: String,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads_from_env();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(k) = cli.k {
        cfg.k = k;
    }
    if let Some(strategy) = &cli.strategy {
        cfg.strategy = StrategyKind::parse(strategy)?;
    }
    if let Some(epochs) = cli.epochs {
        cfg.base_epochs = epochs;
        cfg.rn_epochs = epochs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad {what} entry {s:?}")))
        })
        .collect()
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad seed range start {lo:?}")))?;
        let hi: u64 = hi
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad seed range end {hi:?}")))?;
        if hi <= lo {
            return Err(Error::Config(format!("empty seed range {text:?}")));
        }
        return Ok((lo..hi).collect());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad seed entry {s:?}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let paths = Paths::new(&cli.out);
    match cli.command {
        Command::Synth {
            profile,
            profile_classes,
            total,
            groups,
        } => {
            if let Some(name) = profile {
                cfg.generator.profile = match name.as_str() {
                    "table1" => ProfileKind::Table1,
                    "uniform" => ProfileKind::Uniform {
                        classes: profile_classes.unwrap_or(15),
                    },
                    other => {
                        return Err(Error::Config(format!(
                            "unknown profile {other:?}; expected table1 or uniform"
                        )))
                    }
                };
            }
            if let Some(total) = total {
                cfg.generator.total = total;
            }
            if groups.is_some() {
                cfg.generator.groups = groups;
            }
            let ds = cmd_synth(&cfg, &paths)?;
            let hist = class_histogram(&ds);
            println!(
                "wrote {} records over {} classes to {}",
                ds.records.len(),
                ds.n_classes(),
                paths.dataset().display()
            );
            for (name, count) in ds.class_names.iter().zip(&hist.counts) {
                println!("  {name}: {count}");
            }
        }
        Command::Split { train_fraction } => {
            let (n_train, n_test) = cmd_split(&cfg, &paths, train_fraction)?;
            println!("split: {n_train} train / {n_test} test records");
        }
        Command::TrainBase => {
            let trace = cmd_train_base(&cfg, &paths)?;
            if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
                println!(
                    "trained head for {} epochs: loss {first:.4} -> {last:.4}",
                    trace.len()
                );
            } else {
                println!("trained head for 0 epochs (checkpoint written unchanged)");
            }
        }
        Command::Embed => {
            cmd_embed(&paths)?;
            println!(
                "wrote {} and {}",
                paths.embeddings("train").display(),
                paths.embeddings("test").display()
            );
        }
        Command::TrainRn => {
            let kinds = match cli.strategy {
                Some(_) => vec![cfg.strategy],
                None => vec![StrategyKind::All, StrategyKind::Nn],
            };
            cmd_train_rn(&cfg, &paths, &kinds)?;
            for kind in kinds {
                println!("trained rn[{}] -> {}", kind.name(), paths.rn_g(kind).display());
            }
        }
        Command::Predict => {
            let warnings = cmd_predict(&cfg, &paths, cfg.strategy)?;
            if warnings > 0 {
                eprintln!("warning: {warnings} class scores defaulted to 0 (no reference members)");
            }
            println!(
                "wrote {}",
                paths
                    .predictions(&format!("rn_{}", cfg.strategy.name()))
                    .display()
            );
        }
        Command::Eval => {
            let report = cmd_eval(&cfg, &paths)?;
            print!("{}", report.render_table(cfg.display_min_support));
            println!("report written to {}", paths.report().display());
        }
        Command::Sweep {
            strategies,
            ks,
            seeds,
        } => {
            let spec = SweepSpec {
                strategies: strategies
                    .split(',')
                    .map(|s| StrategyKind::parse(s.trim()))
                    .collect::<Result<_>>()?,
                ks: match ks {
                    Some(text) => parse_list(&text, "k")?,
                    None => vec![cfg.k],
                },
                seeds: parse_seeds(&seeds)?,
            };
            let rows = run_sweep(&cfg, &spec)?;
            write_sweep_csv(&rows, &paths.sweep())?;
            println!("strategy,k,seed,weighted_f1,wall_secs");
            for row in &rows {
                println!(
                    "{},{},{},{:.4},{:.2}",
                    row.strategy.name(),
                    row.k,
                    row.seed,
                    row.weighted_f1,
                    row.wall_secs
                );
            }
            println!("sweep written to {}", paths.sweep().display());
        }
        Command::Gradcheck => {
            let (head_err, rel_err) = cmd_gradcheck(&cfg, cfg.seed)?;
            println!("head max relative error:     {head_err:.3e}");
            println!("relation max relative error: {rel_err:.3e}");
            if head_err >= 1e-4 || rel_err >= 1e-4 {
                return Err(Error::Contract(
                    "gradient check exceeded the 1e-4 tolerance".into(),
                ));
            }
        }
    }
    Ok(())
}
