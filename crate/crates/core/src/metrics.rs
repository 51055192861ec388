//! Coverage and size metrics, per-run records and their summaries.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{LabelVector, PredictionSetBatch};

/// Fraction of batch samples whose label lies in their set. Labels are looked
/// up by sample index, so `labels` may cover the whole dataset.
pub fn coverage(sets: &PredictionSetBatch, labels: &LabelVector) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::invalid("coverage of an empty batch"));
    }
    if labels.n_classes() != sets.n_classes() {
        return Err(Error::DimensionMismatch {
            what: "label classes",
            expected: sets.n_classes(),
            found: labels.n_classes(),
        });
    }
    let mut hits = 0usize;
    for (pos, &i) in sets.indices().iter().enumerate() {
        let y = labels.get(i).ok_or(Error::MissingLabel { index: i })?;
        if sets.contains(pos, y) {
            hits += 1;
        }
    }
    Ok(hits as f64 / sets.len() as f64)
}

pub fn avg_size(sets: &PredictionSetBatch) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::invalid("average size of an empty batch"));
    }
    let total: usize = (0..sets.len()).map(|p| sets.set_size(p)).sum();
    Ok(total as f64 / sets.len() as f64)
}

/// One (method, alpha, seed) outcome of the experiment harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Strategy name (`vfcp`, `efcp`, ...) or the score-layer name of a
    /// single-score baseline.
    pub method: String,
    pub alpha: f64,
    pub seed: u64,
    /// Test coverage.
    pub coverage: f64,
    /// Test average set size.
    pub avg_size: f64,
    /// `S(ŵ)` on the selection set; absent for baselines.
    pub selection_size: Option<f64>,
    /// `min_j S(e_j)` over the grid vertices on the same selection set.
    pub vertex_selection_min: Option<f64>,
    /// Weight used for the test sets.
    pub weight: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub alpha: f64,
    pub coverage_mean: f64,
    pub coverage_std: f64,
    pub size_mean: f64,
    pub size_std: f64,
    pub n_runs: usize,
}

pub(crate) fn record_order(a: &RunRecord, b: &RunRecord) -> Ordering {
    a.method
        .cmp(&b.method)
        .then(a.alpha.total_cmp(&b.alpha))
        .then(a.seed.cmp(&b.seed))
}

/// Mean and sample standard deviation (n − 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n as f64 - 1.0)).sqrt())
}

/// Aggregates records per (method, alpha). The result is sorted by
/// (method, alpha) and does not depend on record order.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| record_order(a, b));
    let mut out = Vec::new();
    for group in sorted.chunk_by(|a, b| a.method == b.method && a.alpha == b.alpha) {
        let cov: Vec<f64> = group.iter().map(|r| r.coverage).collect();
        let size: Vec<f64> = group.iter().map(|r| r.avg_size).collect();
        let (coverage_mean, coverage_std) = mean_std(&cov);
        let (size_mean, size_std) = mean_std(&size);
        out.push(SummaryRow {
            method: group[0].method.clone(),
            alpha: group[0].alpha,
            coverage_mean,
            coverage_std,
            size_mean,
            size_std,
            n_runs: group.len(),
        });
    }
    out
}
