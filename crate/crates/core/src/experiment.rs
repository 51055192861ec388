//! Repeated random-split experiments.
//!
//! The probability model (and hence the score tensor) is fixed; each run
//! permutes the dataset with its own seed, takes the first
//! `round(n · train_test_ratio)` permuted samples as the labeled training pool
//! and the rest as the test pool, and runs every requested method on that
//! split. Run `r` uses seed `plan.seed + r`.
//!
//! Single-score baselines use the VFCP split of the same seed and calibrate on
//! its I3, so they see exactly the calibration data the VFCP threshold sees.

use rayon::prelude::*;

use crate::conformal::{calibrate, evaluate, stage1_level, sweep_candidates, CandidateSweep};
use crate::error::{Error, Result};
use crate::grid::{simplex_grid, SimplexGrid, DEFAULT_EPSILON};
use crate::metrics::{avg_size, coverage, record_order, summarize, RunRecord, SummaryRow};
use crate::splitting::{make_split, permutation, IndexSplit, Strategy};
use crate::types::{LabelVector, ScoreTensor, WeightVector};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub strategies: Vec<Strategy>,
    /// Also run one single-score baseline per tensor layer.
    pub baselines: bool,
    pub alphas: Vec<f64>,
    pub alpha_prime: Option<f64>,
    pub n_runs: usize,
    pub vfcp_ratio: f64,
    pub train_test_ratio: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            strategies: Strategy::ALL.to_vec(),
            baselines: true,
            alphas: vec![0.05],
            alpha_prime: None,
            n_runs: 100,
            vfcp_ratio: 0.5,
            train_test_ratio: 0.8,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::invalid("no alphas given"));
        }
        for &a in &self.alphas {
            stage1_level(a, self.alpha_prime)?;
        }
        if self.n_runs == 0 {
            return Err(Error::invalid("n_runs must be at least 1"));
        }
        if self.strategies.is_empty() && !self.baselines {
            return Err(Error::invalid("no methods selected"));
        }
        for (name, r) in [
            ("vfcp_ratio", self.vfcp_ratio),
            ("train_test_ratio", self.train_test_ratio),
        ] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::invalid(format!(
                    "{name} must lie in (0, 1), got {r}"
                )));
            }
        }
        Ok(())
    }

    /// `(n_train, n_test)` for a dataset of `n` samples.
    pub fn pool_sizes(&self, n: usize) -> (usize, usize) {
        let n_train = ((n as f64) * self.train_test_ratio).round() as usize;
        (n_train.min(n), n - n_train.min(n))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    /// Sorted by (method, alpha, seed).
    pub records: Vec<RunRecord>,
    /// Sorted by (method, alpha).
    pub summaries: Vec<SummaryRow>,
}

pub fn run_experiment(
    tensor: &ScoreTensor,
    labels: &LabelVector,
    plan: &ExperimentPlan,
) -> Result<ExperimentOutput> {
    plan.validate()?;
    let n = tensor.n_samples();
    if labels.len() < n {
        return Err(Error::DimensionMismatch {
            what: "labels (every sample needs one to measure coverage)",
            expected: n,
            found: labels.len(),
        });
    }
    if labels.n_classes() != tensor.n_classes() {
        return Err(Error::DimensionMismatch {
            what: "label classes",
            expected: tensor.n_classes(),
            found: labels.n_classes(),
        });
    }
    let grid = simplex_grid(tensor.dim(), plan.epsilon)?;
    let runs: Vec<Vec<RunRecord>> = (0..plan.n_runs)
        .into_par_iter()
        .map(|r| {
            run_once(
                tensor,
                labels,
                plan,
                &grid,
                plan.seed.wrapping_add(r as u64),
            )
        })
        .collect::<Result<_>>()?;
    let mut records: Vec<RunRecord> = runs.into_iter().flatten().collect();
    records.sort_by(record_order);
    let summaries = summarize(&records);
    Ok(ExperimentOutput { records, summaries })
}

/// The splits of one run, already mapped through the run's permutation.
pub fn run_splits(plan: &ExperimentPlan, n: usize, seed: u64) -> Result<Vec<IndexSplit>> {
    let (n_train, n_test) = plan.pool_sizes(n);
    let perm = permutation(n, seed);
    Strategy::ALL
        .iter()
        .map(|&s| Ok(make_split(s, n_train, n_test, plan.vfcp_ratio, seed)?.remap(&perm)))
        .collect()
}

/// All records for one seed.
pub fn run_once(
    tensor: &ScoreTensor,
    labels: &LabelVector,
    plan: &ExperimentPlan,
    grid: &SimplexGrid,
    seed: u64,
) -> Result<Vec<RunRecord>> {
    let splits = run_splits(plan, tensor.n_samples(), seed)?;
    let split_of = |s: Strategy| &splits[Strategy::ALL.iter().position(|&x| x == s).unwrap()];
    let levels = plan
        .alphas
        .iter()
        .map(|&a| stage1_level(a, plan.alpha_prime))
        .collect::<Result<Vec<_>>>()?;
    let vertex_positions: Vec<usize> = (0..tensor.dim())
        .map(|j| {
            let v = WeightVector::vertex(tensor.dim(), j)?;
            grid.position(&v)
                .ok_or_else(|| Error::Invariant(format!("grid lacks vertex {j}")))
        })
        .collect::<Result<_>>()?;

    // VFCP selects on its own I1 = I2; the other three share I1 = train and
    // differ only in which of (train, test) form I2.
    let vfcp = split_of(Strategy::Vfcp);
    let shared = split_of(Strategy::Efcp);
    let want = |s: Strategy| plan.strategies.contains(&s);
    let vfcp_sweep = if want(Strategy::Vfcp) {
        Some(sweep_candidates(
            tensor,
            labels,
            grid.members(),
            &vfcp.i1,
            &[&vfcp.i2],
            &levels,
        )?)
    } else {
        None
    };
    let shared_sweep = if [Strategy::Efcp, Strategy::Dlcp, Strategy::DlcpPlus]
        .iter()
        .any(|&s| want(s))
    {
        Some(sweep_candidates(
            tensor,
            labels,
            grid.members(),
            &shared.train,
            &[&shared.train, &shared.test],
            &levels,
        )?)
    } else {
        None
    };

    let mut out = Vec::new();
    for &strategy in &plan.strategies {
        let split = split_of(strategy);
        let (sweep, parts): (&CandidateSweep, &[usize]) = match strategy {
            Strategy::Vfcp => (vfcp_sweep.as_ref().unwrap(), &[0]),
            Strategy::Efcp => (shared_sweep.as_ref().unwrap(), &[0]),
            Strategy::Dlcp => (shared_sweep.as_ref().unwrap(), &[1]),
            Strategy::DlcpPlus => (shared_sweep.as_ref().unwrap(), &[0, 1]),
        };
        for (li, (&alpha, &level)) in plan.alphas.iter().zip(&levels).enumerate() {
            let selection = sweep.select(grid.members(), li, parts)?;
            let threshold = if split.i1 == split.i3 && level == alpha {
                *selection.selected_threshold()
            } else {
                calibrate(tensor, labels, &selection.w_hat, &split.i3, alpha)?
            };
            let sets = evaluate(tensor, &selection.w_hat, &split.test, &threshold)?;
            let vertex_min = vertex_positions
                .iter()
                .map(|&p| selection.sizes[p])
                .fold(f64::INFINITY, f64::min);
            out.push(RunRecord {
                method: strategy.name().to_string(),
                alpha,
                seed,
                coverage: coverage(&sets, labels)?,
                avg_size: avg_size(&sets)?,
                selection_size: Some(selection.selected_size()),
                vertex_selection_min: Some(vertex_min),
                weight: selection.w_hat.values().to_vec(),
            });
        }
    }

    if plan.baselines {
        for (j, name) in tensor.names().iter().enumerate() {
            let w = WeightVector::vertex(tensor.dim(), j)?;
            for &alpha in &plan.alphas {
                let q = calibrate(tensor, labels, &w, &vfcp.i3, alpha)?;
                let sets = evaluate(tensor, &w, &vfcp.test, &q)?;
                out.push(RunRecord {
                    method: name.clone(),
                    alpha,
                    seed,
                    coverage: coverage(&sets, labels)?,
                    avg_size: avg_size(&sets)?,
                    selection_size: None,
                    vertex_selection_min: None,
                    weight: w.values().to_vec(),
                });
            }
        }
    }
    Ok(out)
}
