//! Confusion-style evaluation: accuracy, support-weighted F1 over leaf ids,
//! and exact-trajectory explanation accuracy.

use serde::{Deserialize, Serialize};

use crate::guideline::DecisionPath;

use super::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub n_cases: usize,
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub explanation_accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
}

impl EvalResult {
    /// One-line CSV form: mode, n, accuracy, weighted F1, explanation.
    pub fn csv_line(&self, mode: &str) -> String {
        format!(
            "{mode},{},{:.4},{:.4},{:.4}",
            self.n_cases, self.accuracy, self.weighted_f1, self.explanation_accuracy
        )
    }
}

/// Per-class precision/recall/F1 over leaf ids with 0/0 defined as 0,
/// weighted F1 by truth support, and explanation accuracy as the fraction of
/// cases whose full (node, branch) step sequence matches exactly.
pub fn compute_metrics(
    pred_leaves: &[String],
    truth_leaves: &[String],
    pred_paths: &[DecisionPath],
    truth_paths: &[DecisionPath],
) -> Result<EvalResult, BenchError> {
    let n = truth_leaves.len();
    for len in [pred_leaves.len(), pred_paths.len(), truth_paths.len()] {
        if len != n {
            return Err(BenchError::LengthMismatch { left: len, right: n });
        }
    }
    if n == 0 {
        return Err(BenchError::EmptyInput);
    }

    let correct = pred_leaves
        .iter()
        .zip(truth_leaves)
        .filter(|(p, t)| p == t)
        .count();
    let accuracy = correct as f64 / n as f64;

    let mut classes: Vec<&String> = truth_leaves.iter().chain(pred_leaves).collect();
    classes.sort();
    classes.dedup();

    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let mut per_class = Vec::with_capacity(classes.len());
    let mut weighted_f1 = 0.0;
    for class in classes {
        let tp = pred_leaves
            .iter()
            .zip(truth_leaves)
            .filter(|(p, t)| *p == class && *t == class)
            .count();
        let pred_count = pred_leaves.iter().filter(|p| *p == class).count();
        let support = truth_leaves.iter().filter(|t| *t == class).count();
        let precision = ratio(tp, pred_count);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        weighted_f1 += support as f64 / n as f64 * f1;
        per_class.push(ClassMetrics {
            class: class.clone(),
            precision,
            recall,
            f1,
            support,
        });
    }

    let explained = pred_paths
        .iter()
        .zip(truth_paths)
        .filter(|(p, t)| p.steps == t.steps && p.leaf_id == t.leaf_id)
        .count();

    Ok(EvalResult {
        n_cases: n,
        accuracy,
        weighted_f1,
        explanation_accuracy: explained as f64 / n as f64,
        per_class,
    })
}
