//! Per-class and support-weighted precision/recall/F1 over a confusion
//! matrix, plus the report schema emitted by evaluation runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// C x C counts; rows are true classes, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    /// Row-major counts.
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn from_labels(truths: &[usize], predictions: &[usize], n_classes: usize) -> Result<Self> {
        if truths.len() != predictions.len() {
            return Err(Error::shape(
                "metric label sequences",
                truths.len(),
                predictions.len(),
            ));
        }
        let mut counts = vec![0usize; n_classes * n_classes];
        for (&t, &p) in truths.iter().zip(predictions) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::Contract(format!(
                    "label out of range: true {t}, predicted {p}, {n_classes} classes"
                )));
            }
            counts[t * n_classes + p] += 1;
        }
        Ok(ConfusionMatrix { n_classes, counts })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> usize {
        self.counts[true_class * self.n_classes + predicted]
    }

    pub fn true_positives(&self, class: usize) -> usize {
        self.count(class, class)
    }

    pub fn false_positives(&self, class: usize) -> usize {
        (0..self.n_classes)
            .filter(|&t| t != class)
            .map(|t| self.count(t, class))
            .sum()
    }

    pub fn false_negatives(&self, class: usize) -> usize {
        (0..self.n_classes)
            .filter(|&p| p != class)
            .map(|p| self.count(class, p))
            .sum()
    }

    /// True-instance count of a class (its row sum).
    pub fn support(&self, class: usize) -> usize {
        (0..self.n_classes).map(|p| self.count(class, p)).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Precision, recall and F1 for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedMeans {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class metrics plus support-weighted means over all classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub per_class: Vec<ClassMetrics>,
    pub weighted: WeightedMeans,
    /// How many precision/recall denominators were zero (reported as 0.0).
    pub zero_division_events: usize,
}

/// Computes the confusion matrix and per-class / weighted metrics.
///
/// Zero denominators (a class never predicted, or with no true instances)
/// yield 0.0 for the affected metric and are counted in
/// `zero_division_events`. Weighted means are `sum(support_c * metric_c) /
/// sum(support_c)` over all classes; zero-support classes contribute nothing.
pub fn compute_metrics(
    truths: &[usize],
    predictions: &[usize],
    n_classes: usize,
) -> Result<(ConfusionMatrix, MetricsSummary)> {
    let cm = ConfusionMatrix::from_labels(truths, predictions, n_classes)?;
    let mut per_class = Vec::with_capacity(n_classes);
    let mut zero_division_events = 0usize;
    for c in 0..n_classes {
        let tp = cm.true_positives(c) as f64;
        let fp = cm.false_positives(c) as f64;
        let fn_ = cm.false_negatives(c) as f64;
        let precision = if tp + fp > 0.0 {
            tp / (tp + fp)
        } else {
            zero_division_events += 1;
            0.0
        };
        let recall = if tp + fn_ > 0.0 {
            tp / (tp + fn_)
        } else {
            zero_division_events += 1;
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            support: cm.support(c),
        });
    }
    let total_support: usize = per_class.iter().map(|m| m.support).sum();
    let weighted_of = |pick: fn(&ClassMetrics) -> f64| -> f64 {
        if total_support == 0 {
            return 0.0;
        }
        per_class
            .iter()
            .map(|m| m.support as f64 * pick(m))
            .sum::<f64>()
            / total_support as f64
    };
    let summary = MetricsSummary {
        weighted: WeightedMeans {
            precision: weighted_of(|m| m.precision),
            recall: weighted_of(|m| m.recall),
            f1: weighted_of(|m| m.f1),
        },
        per_class,
        zero_division_events,
    };
    Ok((cm, summary))
}

/// Metrics for one evaluated system (head alone, relation network under one
/// strategy, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub name: String,
    pub metrics: MetricsSummary,
    /// Targets for which some class had no reference members and scored 0.
    pub empty_class_warnings: usize,
}

/// The versioned evaluation report: one block per system, every class
/// present, weighted means over all classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub config_hash: String,
    pub class_names: Vec<String>,
    pub systems: Vec<SystemReport>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

impl Report {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Plain-text table in the published layout: metrics as row blocks,
    /// classes as columns (those with support >= `min_support`), weighted
    /// mean last.
    pub fn render_table(&self, min_support: usize) -> String {
        use std::fmt::Write;
        let shown: Vec<usize> = (0..self.class_names.len())
            .filter(|&c| {
                self.systems
                    .iter()
                    .any(|s| s.metrics.per_class[c].support >= min_support)
            })
            .collect();
        let mut out = String::new();
        let _ = write!(out, "{:<12} {:<16}", "metric", "system");
        for &c in &shown {
            let _ = write!(out, " {:>8}", c);
        }
        let _ = writeln!(out, " {:>8}", "mean");
        for (metric_name, pick) in [
            ("precision", (|m: &ClassMetrics| m.precision) as fn(&ClassMetrics) -> f64),
            ("recall", |m| m.recall),
            ("f1", |m| m.f1),
        ] {
            for system in &self.systems {
                let _ = write!(out, "{:<12} {:<16}", metric_name, system.name);
                for &c in &shown {
                    let _ = write!(out, " {:>8.3}", pick(&system.metrics.per_class[c]));
                }
                let mean = match metric_name {
                    "precision" => system.metrics.weighted.precision,
                    "recall" => system.metrics.weighted.recall,
                    _ => system.metrics.weighted.f1,
                };
                let _ = writeln!(out, " {:>8.3}", mean);
            }
        }
        out
    }
}
