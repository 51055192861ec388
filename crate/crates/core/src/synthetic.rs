//! Synthetic classification tasks with a known conditional distribution, and
//! a brute-force sweep for the population-optimal weight.
//!
//! Each sample draws standard-normal base logits `g ∈ R^K`. The true
//! conditional is `softmax(concentration · g)` and the label is drawn from it.
//! The classifier output is `softmax(t · concentration · g)` with a per-row
//! temperature `t = exp(miscalibration · ζ)`, `ζ ~ N(0, 1)`: label rankings
//! stay correct, but confidence levels are wrong by a random row-specific
//! factor, so raw probabilities stop being the best score on their own.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{check_alpha, combine_into, Gathered};
use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::types::{LabelVector, ProbabilityMatrix, ScoreTensor, WeightVector};

/// ChaCha stream used for synthetic draws.
const SYNTHETIC_STREAM: u64 = 3;

/// Default floor on the sample size accepted by [`oracle_weight`].
pub const ORACLE_MIN_SAMPLES: usize = 50_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub n_samples: usize,
    /// Sharpness of the true conditional; larger means closer to one-hot.
    pub concentration: f64,
    /// Spread of the log-temperature distortion; 0 gives a perfectly
    /// calibrated classifier.
    pub miscalibration: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::invalid("a synthetic task needs at least 2 classes"));
        }
        if self.n_samples == 0 {
            return Err(Error::invalid("a synthetic task needs at least 1 sample"));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::invalid(format!(
                "concentration must be positive and finite, got {}",
                self.concentration
            )));
        }
        if !(self.miscalibration >= 0.0 && self.miscalibration.is_finite()) {
            return Err(Error::invalid(format!(
                "miscalibration must be non-negative and finite, got {}",
                self.miscalibration
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// Classifier output.
    pub probs: ProbabilityMatrix,
    pub labels: LabelVector,
    pub true_conditional: ProbabilityMatrix,
}

/// Stable softmax into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(logits) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let k = spec.n_classes;
    let n = spec.n_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(SYNTHETIC_STREAM);

    let mut truth = vec![0.0; n * k];
    let mut probs = vec![0.0; n * k];
    let mut labels = Vec::with_capacity(n);
    let mut logits = vec![0.0; k];
    let mut tilted = vec![0.0; k];
    for i in 0..n {
        for x in logits.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *x = spec.concentration * g;
        }
        let zeta: f64 = rng.sample(StandardNormal);
        let temp = (spec.miscalibration * zeta).exp();
        for (t, &x) in tilted.iter_mut().zip(&logits) {
            *t = temp * x;
        }
        let row = i * k..(i + 1) * k;
        softmax_into(&logits, &mut truth[row.clone()]);
        softmax_into(&tilted, &mut probs[row.clone()]);

        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut label = k - 1;
        for (y, &p) in truth[row].iter().enumerate() {
            acc += p;
            if u < acc {
                label = y;
                break;
            }
        }
        labels.push(label);
    }
    Ok(SyntheticData {
        probs: ProbabilityMatrix::new(probs, n, k)?,
        labels: LabelVector::new(labels, k)?,
        true_conditional: ProbabilityMatrix::new(truth, n, k)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub w_star: WeightVector,
    pub q_star: f64,
    pub expected_size: f64,
    pub achieved_coverage: f64,
    /// Expected size of every grid member, in grid order.
    pub sizes: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Smallest sample accepted as a population proxy.
    pub min_samples: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            min_samples: ORACLE_MIN_SAMPLES,
        }
    }
}

/// `⌈m(1 − α)⌉`, with the same rounding slack as the conformal rank.
fn population_rank(m: usize, alpha: f64) -> usize {
    let x = m as f64 * (1.0 - alpha);
    ((x - x * 1e-12).ceil() as usize).clamp(1, m)
}

/// Largest `q` with empirical `P(<w, s(X, Y)> ≥ q) ≥ 1 − α` on `values`
/// (reorders `values`).
fn population_threshold(values: &mut [f64], alpha: f64) -> f64 {
    let rank = population_rank(values.len(), alpha);
    *values
        .select_nth_unstable_by(rank - 1, |a, b| b.total_cmp(a))
        .1
}

/// Sweeps the grid on a large sample standing in for the population: for each
/// weight the threshold is the largest level with empirical coverage at least
/// `1 − α`, and the expected size is the sample-mean set size at that level.
/// Returns the smallest expected size, ties broken lexicographically.
pub fn oracle_weight(
    grid: &SimplexGrid,
    tensor: &ScoreTensor,
    labels: &LabelVector,
    alpha: f64,
    options: OracleOptions,
) -> Result<OracleResult> {
    check_alpha(alpha)?;
    let m = tensor.n_samples();
    if m < options.min_samples {
        return Err(Error::invalid(format!(
            "oracle sample has {m} rows, fewer than the floor of {}",
            options.min_samples
        )));
    }
    if grid.dim() != tensor.dim() {
        return Err(Error::DimensionMismatch {
            what: "grid dimension",
            expected: tensor.dim(),
            found: grid.dim(),
        });
    }
    let all: Vec<usize> = (0..m).collect();
    let data = Gathered::new(tensor, labels, &all, &[&all])?;
    let n_eval = data.evaluation[0].len();

    // (q, set-size count, covered count)
    let per: Vec<(f64, usize, usize)> = grid
        .members()
        .par_iter()
        .map_init(
            || (vec![0.0; m], vec![0.0; n_eval]),
            |(cal, eval), w| {
                combine_into(cal, w.values(), &data.calibration);
                let q = population_threshold(cal, alpha);
                let covered = cal.iter().filter(|&&v| v >= q).count();
                combine_into(eval, w.values(), &data.evaluation);
                let size = eval.iter().filter(|&&v| v >= q).count();
                (q, size, covered)
            },
        )
        .collect();

    let members = grid.members();
    let mut best = 0;
    for idx in 1..per.len() {
        match per[idx].1.cmp(&per[best].1) {
            Ordering::Less => best = idx,
            Ordering::Equal if members[idx].lex_cmp(&members[best]) == Ordering::Less => best = idx,
            _ => {}
        }
    }
    let mf = m as f64;
    Ok(OracleResult {
        w_star: members[best].clone(),
        q_star: per[best].0,
        expected_size: per[best].1 as f64 / mf,
        achieved_coverage: per[best].2 as f64 / mf,
        sizes: per.iter().map(|p| p.1 as f64 / mf).collect(),
    })
}
