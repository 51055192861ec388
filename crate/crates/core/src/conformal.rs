//! Calibration, evaluation, single-score split conformal prediction, and the
//! weighted-score grid search.
//!
//! # Threshold orientation
//!
//! Scores are "higher is more plausible" and prediction sets are upper level
//! sets `{y : <w, s(x, y)> ≥ Q}`. For the set to cover a fresh exchangeable
//! sample with probability at least `1 − α`, `Q` must be the
//! `k = ⌈(1 + n)(1 − α)⌉`-th *largest* calibration score: at least `k` of the
//! `n + 1` exchangeable scores then sit at or above `Q`. When `k > n` that
//! order statistic does not exist and the threshold degenerates to `−∞`
//! (full prediction sets).

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::splitting::IndexSplit;
use crate::types::{LabelVector, PredictionSetBatch, ScoreTensor, Threshold, WeightVector};

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

/// `⌈(1 + n)(1 − α)⌉`.
///
/// The product is formed in floating point; a relative slack of 1e-12 keeps
/// exact products such as `10 × 0.9` from rounding up to the next integer.
pub fn order_rank(n: usize, alpha: f64) -> usize {
    let x = (n as f64 + 1.0) * (1.0 - alpha);
    (x - x * 1e-12).ceil().max(1.0) as usize
}

/// The `k`-th largest value of `values` as a [`Threshold`] (reorders `values`).
pub fn threshold_from_values(values: &mut [f64], alpha: f64) -> Threshold {
    let n = values.len();
    let rank = order_rank(n, alpha);
    if rank > n || n == 0 {
        return Threshold {
            q: f64::NEG_INFINITY,
            alpha,
            source_size: n,
            rank,
            degenerate: true,
        };
    }
    let (_, q, _) = values.select_nth_unstable_by(rank - 1, |a, b| b.total_cmp(a));
    Threshold {
        q: *q,
        alpha,
        source_size: n,
        rank,
        degenerate: false,
    }
}

/// [`threshold_from_values`] at several levels with shrinking selections.
///
/// The `k`-th largest value sits at ascending position `n − k`. Levels are
/// visited from the highest position down; after each selection everything
/// below that position lies in the prefix, so the next search stays there.
pub(crate) fn thresholds_from_values(values: &mut [f64], levels: &[f64]) -> Vec<Threshold> {
    let n = values.len();
    let ranks: Vec<usize> = levels.iter().map(|&a| order_rank(n, a)).collect();
    let mut out: Vec<Threshold> = levels
        .iter()
        .zip(&ranks)
        .map(|(&alpha, &rank)| Threshold {
            q: f64::NEG_INFINITY,
            alpha,
            source_size: n,
            rank,
            degenerate: true,
        })
        .collect();
    let mut order: Vec<usize> = (0..levels.len()).filter(|&l| ranks[l] <= n).collect();
    order.sort_by_key(|&l| ranks[l]);
    let mut limit = n;
    for l in order {
        let pos = n - ranks[l];
        let (_, q, _) = values[..limit].select_nth_unstable_by(pos, f64::total_cmp);
        out[l].q = *q;
        out[l].degenerate = false;
        limit = pos + 1;
    }
    out
}

/// Weighted label scores `<w, s(x_i, y_i)>` for `i ∈ indices`.
fn label_scores(
    tensor: &ScoreTensor,
    labels: &LabelVector,
    w: &[f64],
    indices: &[usize],
) -> Result<Vec<f64>> {
    let k = tensor.n_classes();
    indices
        .iter()
        .map(|&i| {
            if i >= tensor.n_samples() {
                return Err(Error::invalid(format!("sample index {i} out of range")));
            }
            let y = labels.get(i).ok_or(Error::MissingLabel { index: i })?;
            Ok(tensor.combine_at(w, i * k + y))
        })
        .collect()
}

/// Threshold for weight `w` on calibration set `indices`.
pub fn calibrate(
    tensor: &ScoreTensor,
    labels: &LabelVector,
    w: &WeightVector,
    indices: &[usize],
    alpha: f64,
) -> Result<Threshold> {
    tensor.check_weight(w)?;
    check_alpha(alpha)?;
    if indices.is_empty() {
        return Err(Error::invalid("calibration set is empty"));
    }
    let mut values = label_scores(tensor, labels, w.values(), indices)?;
    Ok(threshold_from_values(&mut values, alpha))
}

/// Prediction sets `{y : <w, s(x_i, y)> ≥ q}` for `i ∈ indices`. Labels are
/// not needed; ties at `q` are included.
pub fn evaluate(
    tensor: &ScoreTensor,
    w: &WeightVector,
    indices: &[usize],
    threshold: &Threshold,
) -> Result<PredictionSetBatch> {
    tensor.check_weight(w)?;
    let k = tensor.n_classes();
    let mut members = Vec::with_capacity(indices.len() * k);
    for &i in indices {
        if i >= tensor.n_samples() {
            return Err(Error::invalid(format!("sample index {i} out of range")));
        }
        for y in 0..k {
            members.push(tensor.combine_at(w.values(), i * k + y) >= threshold.q);
        }
    }
    Ok(PredictionSetBatch::new(
        indices.to_vec(),
        k,
        members,
        *threshold,
        w.clone(),
    ))
}

/// Classic split conformal prediction with a single score function.
pub fn split_conformal(
    tensor: &ScoreTensor,
    labels: &LabelVector,
    calibration: &[usize],
    test: &[usize],
    alpha: f64,
) -> Result<PredictionSetBatch> {
    if tensor.dim() != 1 {
        return Err(Error::invalid(format!(
            "split conformal needs a single score layer, got d = {}",
            tensor.dim()
        )));
    }
    let w = WeightVector::vertex(1, 0)?;
    let q = calibrate(tensor, labels, &w, calibration, alpha)?;
    evaluate(tensor, &w, test, &q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSelectionResult {
    pub w_hat: WeightVector,
    /// Position of `w_hat` among the candidates.
    pub w_hat_index: usize,
    /// `S(w)`, average prediction-set size on I2, per candidate.
    pub sizes: Vec<f64>,
    /// Stage-1 threshold `Q^(1)(w)` on I1, per candidate.
    pub thresholds_stage1: Vec<Threshold>,
    /// Number of candidates attaining the minimum size.
    pub argmin_ties: usize,
}

impl WeightSelectionResult {
    pub fn selected_size(&self) -> f64 {
        self.sizes[self.w_hat_index]
    }

    pub fn selected_threshold(&self) -> &Threshold {
        &self.thresholds_stage1[self.w_hat_index]
    }
}

/// Per-layer copies of the scores a grid search touches, so every candidate
/// streams over contiguous memory.
pub(crate) struct Gathered {
    /// `[layer][t]`: label scores on I1.
    pub(crate) calibration: Vec<Vec<f64>>,
    /// `[layer][t * K + y]`: all scores on the concatenated evaluation parts.
    pub(crate) evaluation: Vec<Vec<f64>>,
    /// Offsets of each part inside an evaluation row, `parts.len() + 1` long.
    pub(crate) part_bounds: Vec<usize>,
}

impl Gathered {
    pub(crate) fn new(
        tensor: &ScoreTensor,
        labels: &LabelVector,
        i1: &[usize],
        parts: &[&[usize]],
    ) -> Result<Self> {
        let k = tensor.n_classes();
        let n = tensor.n_samples();
        let out_of_range = i1
            .iter()
            .chain(parts.iter().flat_map(|p| p.iter()))
            .find(|&&i| i >= n);
        if let Some(bad) = out_of_range {
            return Err(Error::invalid(format!("sample index {bad} out of range")));
        }
        let label_offsets = i1
            .iter()
            .map(|&i| {
                let y = labels.get(i).ok_or(Error::MissingLabel { index: i })?;
                Ok(i * k + y)
            })
            .collect::<Result<Vec<_>>>()?;
        let calibration = tensor
            .layers()
            .iter()
            .map(|layer| label_offsets.iter().map(|&o| layer[o]).collect())
            .collect();
        let mut part_bounds = vec![0];
        for p in parts {
            part_bounds.push(part_bounds.last().unwrap() + p.len() * k);
        }
        let evaluation = tensor
            .layers()
            .iter()
            .map(|layer| {
                let mut out = Vec::with_capacity(*part_bounds.last().unwrap());
                for &i in parts.iter().flat_map(|p| p.iter()) {
                    out.extend_from_slice(&layer[i * k..(i + 1) * k]);
                }
                out
            })
            .collect();
        Ok(Self {
            calibration,
            evaluation,
            part_bounds,
        })
    }
}

/// Fills `out` with `Σ_j w_j layers[j]`, elementwise, in the same
/// accumulation order as [`crate::types::combine`].
pub(crate) fn combine_into(out: &mut [f64], w: &[f64], layers: &[Vec<f64>]) {
    out.fill(0.0);
    for (wj, layer) in w.iter().zip(layers) {
        if *wj != 0.0 {
            for (o, s) in out.iter_mut().zip(layer) {
                *o += wj * s;
            }
        }
    }
}

/// [`combine_into`] over `layers[j][start..start + out.len()]`.
fn combine_range_into(out: &mut [f64], w: &[f64], layers: &[Vec<f64>], start: usize) {
    let end = start + out.len();
    out.fill(0.0);
    for (wj, layer) in w.iter().zip(layers) {
        if *wj != 0.0 {
            for (o, s) in out.iter_mut().zip(&layer[start..end]) {
                *o += wj * s;
            }
        }
    }
}

const SWEEP_CHUNK: usize = 1024;

/// Stage-1 thresholds and raw set-size counts for every candidate weight,
/// at several levels and over several disjoint evaluation parts at once.
///
/// Sizes over a union of parts are sums of per-part counts, so one sweep
/// serves every strategy that shares the same I1.
#[derive(Debug, Clone)]
pub struct CandidateSweep {
    n_levels: usize,
    n_parts: usize,
    part_sizes: Vec<usize>,
    /// `[candidate][level]`
    thresholds: Vec<Threshold>,
    /// `[candidate][level][part]`: number of (sample, class) pairs at or
    /// above the threshold.
    counts: Vec<usize>,
}

impl CandidateSweep {
    pub fn n_candidates(&self) -> usize {
        self.thresholds.len() / self.n_levels
    }

    pub fn threshold(&self, candidate: usize, level: usize) -> &Threshold {
        &self.thresholds[candidate * self.n_levels + level]
    }

    pub fn count(&self, candidate: usize, level: usize, part: usize) -> usize {
        self.counts[(candidate * self.n_levels + level) * self.n_parts + part]
    }

    /// Argmin of the average set size over the union of `parts` at `level`.
    pub fn select(
        &self,
        candidates: &[WeightVector],
        level: usize,
        parts: &[usize],
    ) -> Result<WeightSelectionResult> {
        if candidates.len() != self.n_candidates() {
            return Err(Error::DimensionMismatch {
                what: "sweep candidates",
                expected: self.n_candidates(),
                found: candidates.len(),
            });
        }
        if level >= self.n_levels || parts.iter().any(|&p| p >= self.n_parts) {
            return Err(Error::invalid("sweep level or part out of range"));
        }
        let n_samples: usize = parts.iter().map(|&p| self.part_sizes[p]).sum();
        if n_samples == 0 {
            return Err(Error::invalid("I2 is empty"));
        }
        let totals: Vec<usize> = (0..self.n_candidates())
            .map(|c| parts.iter().map(|&p| self.count(c, level, p)).sum())
            .collect();

        let mut best = 0;
        let mut ties = 1;
        for idx in 1..totals.len() {
            match totals[idx].cmp(&totals[best]) {
                Ordering::Less => {
                    best = idx;
                    ties = 1;
                }
                Ordering::Equal => {
                    ties += 1;
                    if candidates[idx].lex_cmp(&candidates[best]) == Ordering::Less {
                        best = idx;
                    }
                }
                Ordering::Greater => {}
            }
        }

        let denom = n_samples as f64;
        Ok(WeightSelectionResult {
            w_hat: candidates[best].clone(),
            w_hat_index: best,
            sizes: totals.iter().map(|&t| t as f64 / denom).collect(),
            thresholds_stage1: (0..self.n_candidates())
                .map(|c| *self.threshold(c, level))
                .collect(),
            argmin_ties: ties,
        })
    }
}

/// Evaluates every candidate once: thresholds on I1 at each of `levels`,
/// and set-size counts on each of `parts`.
pub fn sweep_candidates(
    tensor: &ScoreTensor,
    labels: &LabelVector,
    candidates: &[WeightVector],
    i1: &[usize],
    parts: &[&[usize]],
    levels: &[f64],
) -> Result<CandidateSweep> {
    if candidates.is_empty() {
        return Err(Error::invalid("weight grid is empty"));
    }
    if i1.is_empty() {
        return Err(Error::invalid("I1 is empty"));
    }
    if levels.is_empty() || parts.is_empty() {
        return Err(Error::invalid(
            "a sweep needs at least one level and one part",
        ));
    }
    for &a in levels {
        check_alpha(a)?;
    }
    for w in candidates {
        tensor.check_weight(w)?;
    }
    let data = Gathered::new(tensor, labels, i1, parts)?;
    let bounds = &data.part_bounds;

    let per_candidate: Vec<(Vec<Threshold>, Vec<usize>)> = candidates
        .par_iter()
        .map_init(
            || (vec![0.0; i1.len()], [0.0; SWEEP_CHUNK]),
            |(cal, buf), w| {
                combine_into(cal, w.values(), &data.calibration);
                let thresholds = thresholds_from_values(cal, levels);
                // combine and count chunk by chunk so the weighted scores stay in L1
                let mut counts = vec![0; levels.len() * parts.len()];
                for p in 0..parts.len() {
                    let mut start = bounds[p];
                    while start < bounds[p + 1] {
                        let end = (start + SWEEP_CHUNK).min(bounds[p + 1]);
                        let chunk = &mut buf[..end - start];
                        combine_range_into(chunk, w.values(), &data.evaluation, start);
                        for (l, t) in thresholds.iter().enumerate() {
                            counts[l * parts.len() + p] +=
                                chunk.iter().map(|&v| (v >= t.q) as usize).sum::<usize>();
                        }
                        start = end;
                    }
                }
                (thresholds, counts)
            },
        )
        .collect();

    let mut thresholds = Vec::with_capacity(candidates.len() * levels.len());
    let mut counts = Vec::with_capacity(candidates.len() * levels.len() * parts.len());
    for (t, c) in per_candidate {
        thresholds.extend(t);
        counts.extend(c);
    }
    Ok(CandidateSweep {
        n_levels: levels.len(),
        n_parts: parts.len(),
        part_sizes: parts.iter().map(|p| p.len()).collect(),
        thresholds,
        counts,
    })
}

/// Stage-1 level: `alpha_prime` when given (it must not exceed `alpha`).
pub fn stage1_level(alpha: f64, alpha_prime: Option<f64>) -> Result<f64> {
    check_alpha(alpha)?;
    match alpha_prime {
        Some(ap) => {
            check_alpha(ap)?;
            if ap > alpha {
                return Err(Error::invalid(format!(
                    "alpha_prime ({ap}) must not exceed alpha ({alpha})"
                )));
            }
            Ok(ap)
        }
        None => Ok(alpha),
    }
}

/// Grid search for the weight minimizing the average set size on I2, with
/// thresholds calibrated on I1 at level `alpha_prime` (default `alpha`).
///
/// Ties go to the lexicographically smallest candidate; the result does not
/// depend on candidate order or on the number of worker threads.
pub fn select_weight(
    tensor: &ScoreTensor,
    labels: &LabelVector,
    candidates: &[WeightVector],
    i1: &[usize],
    i2: &[usize],
    alpha: f64,
    alpha_prime: Option<f64>,
) -> Result<WeightSelectionResult> {
    let level = stage1_level(alpha, alpha_prime)?;
    if i2.is_empty() {
        return Err(Error::invalid("I2 is empty"));
    }
    sweep_candidates(tensor, labels, candidates, i1, &[i2], &[level])?.select(candidates, 0, &[0])
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Prediction sets for the test indices.
    pub sets: PredictionSetBatch,
    pub selection: WeightSelectionResult,
    /// Final threshold `Q^(2)` calibrated on I3.
    pub threshold: Threshold,
    /// `Q^(2)` was taken from stage 1 because `I1 = I3`.
    pub reused_stage1: bool,
}

/// Weight selection on (I1, I2), calibration on I3, prediction on the test set.
/// Test labels are never read.
pub fn run_pipeline(
    tensor: &ScoreTensor,
    labels: &LabelVector,
    split: &IndexSplit,
    candidates: &[WeightVector],
    alpha: f64,
    alpha_prime: Option<f64>,
) -> Result<PipelineOutput> {
    let selection = select_weight(
        tensor,
        labels,
        candidates,
        &split.i1,
        &split.i2,
        alpha,
        alpha_prime,
    )?;
    let reused_stage1 = split.i1 == split.i3 && stage1_level(alpha, alpha_prime)? == alpha;
    let threshold = if reused_stage1 {
        *selection.selected_threshold()
    } else {
        calibrate(tensor, labels, &selection.w_hat, &split.i3, alpha)?
    };
    let sets = evaluate(tensor, &selection.w_hat, &split.test, &threshold)?;
    Ok(PipelineOutput {
        sets,
        selection,
        threshold,
        reused_stage1,
    })
}

/// Calibration on I3 and prediction on the test set for a fixed weight,
/// skipping the grid search.
pub fn predict_with_weight(
    tensor: &ScoreTensor,
    labels: &LabelVector,
    split: &IndexSplit,
    w: &WeightVector,
    alpha: f64,
) -> Result<PredictionSetBatch> {
    let q = calibrate(tensor, labels, w, &split.i3, alpha)?;
    evaluate(tensor, w, &split.test, &q)
}
