//! ε-grid over the probability simplex.

use crate::error::{Error, Result};
use crate::types::WeightVector;

pub const DEFAULT_EPSILON: f64 = 0.01;

/// All weight vectors `(k_1 ε, …, k_d ε)` with `Σ k_j = ⌊1/ε⌋`, in ascending
/// lexicographic order of `(k_1, …, k_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexGrid {
    epsilon: f64,
    dim: usize,
    resolution: u32,
    members: Vec<WeightVector>,
}

impl SimplexGrid {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `⌊1/ε⌋`, the common denominator of every member.
    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn members(&self) -> &[WeightVector] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Grid position of `w`, if it is a member.
    pub fn position(&self, w: &WeightVector) -> Option<usize> {
        self.members.iter().position(|m| m == w)
    }
}

/// `⌊1/ε⌋`, snapping to the nearest integer when `1/ε` is within rounding
/// noise of one (so that ε = 0.01 gives 100, not 99).
pub fn resolution_for(epsilon: f64) -> Result<u32> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::invalid(format!(
            "grid resolution epsilon must lie in (0, 1], got {epsilon}"
        )));
    }
    let inv = 1.0 / epsilon;
    let nearest = inv.round();
    let n = if (inv - nearest).abs() <= 1e-9 * nearest {
        nearest
    } else {
        inv.floor()
    };
    if n > f64::from(u32::MAX) {
        return Err(Error::invalid(format!("epsilon {epsilon} is too small")));
    }
    Ok(n as u32)
}

pub fn simplex_grid(dim: usize, epsilon: f64) -> Result<SimplexGrid> {
    if dim == 0 {
        return Err(Error::invalid("simplex dimension must be at least 1"));
    }
    let resolution = resolution_for(epsilon)?;
    let capacity = checked_binomial(u64::from(resolution) + dim as u64 - 1, dim as u64 - 1)
        .and_then(|c| usize::try_from(c).ok())
        .unwrap_or(0);
    let mut members = Vec::with_capacity(capacity);
    let mut prefix = Vec::with_capacity(dim);
    enumerate(dim, resolution, resolution, &mut prefix, &mut members);
    Ok(SimplexGrid {
        epsilon,
        dim,
        resolution,
        members,
    })
}

fn enumerate(
    dim: usize,
    resolution: u32,
    remaining: u32,
    prefix: &mut Vec<u32>,
    out: &mut Vec<WeightVector>,
) {
    if prefix.len() + 1 == dim {
        // coordinates sum to `resolution` by construction
        prefix.push(remaining);
        out.push(WeightVector::from_valid_coords(prefix, resolution));
        prefix.pop();
        return;
    }
    for k in 0..=remaining {
        prefix.push(k);
        enumerate(dim, resolution, remaining - k, prefix, out);
        prefix.pop();
    }
}

/// `binomial(n, r)`, or `None` when an intermediate product overflows.
fn checked_binomial(n: u64, r: u64) -> Option<u64> {
    if r > n {
        return Some(0);
    }
    let r = r.min(n - r);
    (0..r).try_fold(1u64, |acc, i| Some(acc.checked_mul(n - i)? / (i + 1)))
}

/// `binomial(n, r)` for the cardinality checks.
pub fn binomial(n: u64, r: u64) -> u64 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    (0..r).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}
