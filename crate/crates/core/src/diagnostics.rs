//! Measured uniform deviations of coverage and set size between a subsample
//! and a large reference sample, with the matching VC-type bound.
//!
//! For a fixed weight the empirical tail `F(q) = #{v ≥ q} / n` is a step
//! function that only changes at observed values, so the supremum of
//! `|F_sub(q) − F_ref(q)|` over real `q` is attained on the union of observed
//! values (plus ±∞, where both tails agree). A merge over both sorted samples
//! visits exactly those points. The supremum over weights is restricted to
//! the simplex grid the search itself uses.

use rayon::prelude::*;
use serde::Serialize;

use crate::conformal::combine_into;
use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::types::{LabelVector, ScoreTensor};

/// `max_q |count_a(≥ q) / na − count_b(≥ q) / nb|` over every
/// observed `q`; both inputs sorted ascending.
fn tail_sup(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut sup: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        // i, j = number of values strictly below v
        let fa = (a.len() - i) as f64 / na;
        let fb = (b.len() - j) as f64 / nb;
        sup = sup.max((fa - fb).abs());
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
    }
    sup
}

/// Which statistic a deviation measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    /// Coverage indicator of the true label.
    Coverage,
    /// Per-sample set size, i.e. all K scores normalized by the sample count.
    Size,
}

struct Side<'a> {
    tensor: &'a ScoreTensor,
    labels: Option<&'a LabelVector>,
}

impl Side<'_> {
    /// Per-layer gathered values for `indices`.
    fn gather(&self, kind: Kind, indices: &[usize]) -> Result<Vec<Vec<f64>>> {
        let k = self.tensor.n_classes();
        let n = self.tensor.n_samples();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!("sample index {bad} out of range")));
        }
        match kind {
            Kind::Coverage => {
                let labels = self
                    .labels
                    .ok_or_else(|| Error::invalid("labels required"))?;
                let offsets = indices
                    .iter()
                    .map(|&i| {
                        let y = labels.get(i).ok_or(Error::MissingLabel { index: i })?;
                        Ok(i * k + y)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(self
                    .tensor
                    .layers()
                    .iter()
                    .map(|l| offsets.iter().map(|&o| l[o]).collect())
                    .collect())
            }
            Kind::Size => Ok(self
                .tensor
                .layers()
                .iter()
                .map(|l| {
                    let mut out = Vec::with_capacity(indices.len() * k);
                    for &i in indices {
                        out.extend_from_slice(&l[i * k..(i + 1) * k]);
                    }
                    out
                })
                .collect()),
        }
    }
}

fn deviation_many(
    kind: Kind,
    sample: Side<'_>,
    subsets: &[&[usize]],
    reference: Side<'_>,
    grid: &SimplexGrid,
) -> Result<Vec<f64>> {
    if subsets.is_empty() {
        return Ok(Vec::new());
    }
    if subsets.iter().any(|s| s.is_empty()) {
        return Err(Error::invalid("deviation over an empty index set"));
    }
    if reference.tensor.n_samples() == 0 {
        return Err(Error::invalid("the reference sample is empty"));
    }
    for t in [sample.tensor, reference.tensor] {
        if t.dim() != grid.dim() {
            return Err(Error::DimensionMismatch {
                what: "grid dimension",
                expected: t.dim(),
                found: grid.dim(),
            });
        }
    }
    if sample.tensor.n_classes() != reference.tensor.n_classes() {
        return Err(Error::DimensionMismatch {
            what: "reference classes",
            expected: sample.tensor.n_classes(),
            found: reference.tensor.n_classes(),
        });
    }
    let m = reference.tensor.n_samples();
    let all_ref: Vec<usize> = (0..m).collect();
    let ref_layers = reference.gather(kind, &all_ref)?;
    let sub_layers = subsets
        .iter()
        .map(|s| sample.gather(kind, s))
        .collect::<Result<Vec<_>>>()?;

    let per_w: Vec<Vec<f64>> = grid
        .members()
        .par_iter()
        .map(|w| {
            let mut r = vec![0.0; ref_layers[0].len()];
            combine_into(&mut r, w.values(), &ref_layers);
            r.sort_unstable_by(f64::total_cmp);
            subsets
                .iter()
                .zip(&sub_layers)
                .map(|(s, layers)| {
                    let mut v = vec![0.0; layers[0].len()];
                    combine_into(&mut v, w.values(), layers);
                    v.sort_unstable_by(f64::total_cmp);
                    tail_sup(&v, s.len() as f64, &r, m as f64)
                })
                .collect()
        })
        .collect();

    Ok((0..subsets.len())
        .map(|s| per_w.iter().map(|d| d[s]).fold(0.0, f64::max))
        .collect())
}

/// Sup over grid weights and thresholds of the gap between label coverage
/// on `indices` and on the reference sample.
pub fn omega_deviation(
    tensor: &ScoreTensor,
    labels: &LabelVector,
    indices: &[usize],
    ref_tensor: &ScoreTensor,
    ref_labels: &LabelVector,
    grid: &SimplexGrid,
) -> Result<f64> {
    Ok(omega_deviation_many(tensor, labels, &[indices], ref_tensor, ref_labels, grid)?[0])
}

/// [`omega_deviation`] for many subsets, sorting the reference once per weight.
pub fn omega_deviation_many(
    tensor: &ScoreTensor,
    labels: &LabelVector,
    subsets: &[&[usize]],
    ref_tensor: &ScoreTensor,
    ref_labels: &LabelVector,
    grid: &SimplexGrid,
) -> Result<Vec<f64>> {
    deviation_many(
        Kind::Coverage,
        Side {
            tensor,
            labels: Some(labels),
        },
        subsets,
        Side {
            tensor: ref_tensor,
            labels: Some(ref_labels),
        },
        grid,
    )
}

/// Sup over grid weights and thresholds of the gap between average set size
/// on `indices` and on the reference sample. Labels are not used.
pub fn gamma_deviation(
    tensor: &ScoreTensor,
    indices: &[usize],
    ref_tensor: &ScoreTensor,
    grid: &SimplexGrid,
) -> Result<f64> {
    Ok(gamma_deviation_many(tensor, &[indices], ref_tensor, grid)?[0])
}

pub fn gamma_deviation_many(
    tensor: &ScoreTensor,
    subsets: &[&[usize]],
    ref_tensor: &ScoreTensor,
    grid: &SimplexGrid,
) -> Result<Vec<f64>> {
    deviation_many(
        Kind::Size,
        Side {
            tensor,
            labels: None,
        },
        subsets,
        Side {
            tensor: ref_tensor,
            labels: None,
        },
        grid,
    )
}

/// `(η, ξ)` with `η = 8√((d + 1) ln(n + 1) / n) + δ` and `ξ = K · η`.
pub fn vc_bound(n: usize, d: usize, delta: f64, n_classes: Option<usize>) -> Result<(f64, f64)> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("vc_bound needs n ≥ 1 and d ≥ 1"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let k = n_classes.unwrap_or(1);
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let nf = n as f64;
    let root = 8.0 * ((d as f64 + 1.0) * (nf + 1.0).ln() / nf).sqrt();
    let kf = k as f64;
    Ok((root + delta, kf * root + kf * delta))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub eta_hat: f64,
    pub xi_hat: f64,
    pub n: usize,
    pub d: usize,
    #[serde(rename = "K")]
    pub n_classes: usize,
    pub reference_size: usize,
    pub delta: f64,
    pub bound_eta: f64,
    pub bound_xi: f64,
    /// The weight set the supremum ranges over.
    pub weight_domain: String,
    pub grid_epsilon: f64,
    pub grid_members: usize,
}

pub fn deviation_report(
    tensor: &ScoreTensor,
    labels: &LabelVector,
    indices: &[usize],
    ref_tensor: &ScoreTensor,
    ref_labels: &LabelVector,
    grid: &SimplexGrid,
    delta: f64,
) -> Result<DeviationReport> {
    let (bound_eta, bound_xi) =
        vc_bound(indices.len(), tensor.dim(), delta, Some(tensor.n_classes()))?;
    Ok(DeviationReport {
        eta_hat: omega_deviation(tensor, labels, indices, ref_tensor, ref_labels, grid)?,
        xi_hat: gamma_deviation(tensor, indices, ref_tensor, grid)?,
        n: indices.len(),
        d: tensor.dim(),
        n_classes: tensor.n_classes(),
        reference_size: ref_tensor.n_samples(),
        delta,
        bound_eta,
        bound_xi,
        weight_domain: "simplex-grid".to_string(),
        grid_epsilon: grid.epsilon(),
        grid_members: grid.len(),
    })
}
