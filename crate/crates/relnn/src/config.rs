//! Run configuration: one JSON document drives every stage, and its hash is
//! stamped into every artifact for traceability.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{fnv1a64, SgdConfig};

/// Reference-set selection strategy, without its `k` parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    /// Every class member (the all-to-all baseline).
    All,
    /// The target's k nearest class members.
    Nn,
    /// k uniformly sampled class members (control arm).
    Random,
    /// The k farthest class members (control arm).
    Far,
}

impl StrategyKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(StrategyKind::All),
            "nn" => Ok(StrategyKind::Nn),
            "random" => Ok(StrategyKind::Random),
            "far" => Ok(StrategyKind::Far),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?}; expected all, nn, random, or far"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::All => "all",
            StrategyKind::Nn => "nn",
            StrategyKind::Random => "random",
            StrategyKind::Far => "far",
        }
    }
}

/// Built-in class skew profiles for the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ProfileKind {
    /// The 15-class anatomy skew, with per-class fractions derived from the
    /// published slice counts.
    Table1,
    /// `classes` equally likely classes.
    Uniform { classes: usize },
    /// Explicit class names and fractions (must sum to 1).
    Custom {
        names: Vec<String>,
        fractions: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub profile: ProfileKind,
    pub total: usize,
    /// Standard deviation of each class cluster.
    pub spread: f64,
    /// Ratio of cluster spread to inter-center scale; class centers are drawn
    /// from N(0, (spread/overlap)^2 I), so larger values mean harder overlap.
    pub overlap: f64,
    /// Number of synthetic scan groups; `None` picks total/40, clamped so
    /// groups hold 10-100 records where possible.
    pub groups: Option<usize>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            profile: ProfileKind::Table1,
            total: 15_425,
            spread: 1.0,
            overlap: 0.5,
            groups: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub d_local: usize,
    pub d_global: usize,
    /// Width of the head's first hidden layer.
    pub base_hidden: usize,
    /// Width of the head's second hidden layer, i.e. the embedding size
    /// handed to the relation network.
    pub embedding_dim: usize,
    pub g_hidden: usize,
    /// Output width of the reference-aggregation network g.
    pub ref_dim: usize,
    pub f_hidden: usize,
    /// Neighbor count for the nearest / random / farthest strategies.
    pub k: usize,
    /// Strategy used to build training pairs.
    pub strategy: StrategyKind,
    /// Strategy used at prediction time; `None` means nearest-k regardless of
    /// how the model was trained (neighbors always come from the training
    /// set).
    pub test_strategy: Option<StrategyKind>,
    pub base_epochs: usize,
    pub rn_epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Per-class count every balanced epoch is brought to; `None` uses the
    /// median class count.
    pub target_per_class: Option<usize>,
    /// Gaussian jitter scale for oversampled copies.
    pub jitter_sigma: f64,
    /// Negative relation pairs per target; `None` pairs against every other
    /// class.
    pub negatives_per_target: Option<usize>,
    /// Loss weight on positive relation pairs (1.0 = unweighted).
    pub positive_weight: f64,
    /// Feed concat(target, member) instead of the member alone to g.
    pub concat_target_to_ref: bool,
    /// Per-class rows with test support below this are hidden from printed
    /// tables (reports always carry all classes).
    pub display_min_support: usize,
    pub generator: GeneratorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            d_local: 16,
            d_global: 16,
            base_hidden: 256,
            embedding_dim: 64,
            g_hidden: 128,
            ref_dim: 64,
            f_hidden: 64,
            k: 5,
            strategy: StrategyKind::Nn,
            test_strategy: None,
            base_epochs: 30,
            rn_epochs: 15,
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            dropout: 0.5,
            target_per_class: None,
            jitter_sigma: 0.05,
            negatives_per_target: None,
            positive_weight: 1.0,
            concat_target_to_ref: false,
            display_min_support: 0,
            generator: GeneratorConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.sgd().validate()?;
        if self.d_local == 0 || self.d_global == 0 {
            return Err(Error::Config("context dimensions must be positive".into()));
        }
        for (name, v) in [
            ("base_hidden", self.base_hidden),
            ("embedding_dim", self.embedding_dim),
            ("g_hidden", self.g_hidden),
            ("ref_dim", self.ref_dim),
            ("f_hidden", self.f_hidden),
            ("k", self.k),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0,1), got {}",
                self.dropout
            )));
        }
        if self.jitter_sigma < 0.0 {
            return Err(Error::Config("jitter_sigma must be non-negative".into()));
        }
        if self.positive_weight <= 0.0 {
            return Err(Error::Config("positive_weight must be positive".into()));
        }
        if let ProfileKind::Custom { names, fractions } = &self.generator.profile {
            if names.len() != fractions.len() {
                return Err(Error::Config(
                    "custom profile needs one fraction per class name".into(),
                ));
            }
            let sum: f64 = fractions.iter().sum();
            if fractions.iter().any(|f| *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "custom profile fractions must be non-negative and sum to 1, got {sum}"
                )));
            }
        }
        if self.generator.spread <= 0.0 || self.generator.overlap <= 0.0 {
            return Err(Error::Config(
                "generator spread and overlap must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }

    /// Stable fingerprint of the full configuration, stamped into
    /// checkpoints, predictions and reports.
    pub fn hash(&self) -> u64 {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        fnv1a64(&canonical)
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_match_stated_hyperparameters() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.learning_rate, 1e-3);
        assert_eq!(cfg.momentum, 0.9);
        assert_eq!(cfg.weight_decay, 5e-4);
        assert_eq!(cfg.base_epochs, 30);
        assert_eq!(cfg.rn_epochs, 15);
        assert_eq!(cfg.dropout, 0.5);
        assert_eq!(cfg.k, 5);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.hash(), cfg.hash());
        let mut other = cfg.clone();
        other.seed = 1;
        assert_ne!(cfg.hash(), other.hash());
        assert_eq!(cfg.hash_hex().len(), 16);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 7, "k": 3}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.base_epochs, 30);
    }

    #[test]
    fn bad_custom_profile_rejected() {
        let mut cfg = RunConfig::default();
        cfg.generator.profile = ProfileKind::Custom {
            names: vec!["a".into(), "b".into()],
            fractions: vec![0.7, 0.7],
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn strategy_names_round_trip() {
        for kind in [
            StrategyKind::All,
            StrategyKind::Nn,
            StrategyKind::Random,
            StrategyKind::Far,
        ] {
            assert_eq!(StrategyKind::parse(kind.name()).unwrap(), kind);
        }
        assert!(StrategyKind::parse("bogus").is_err());
    }
}
