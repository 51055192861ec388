//! Domain types shared by every stage of the pipeline.
//!
//! All types are immutable after construction. Labels are 0-based
//! everywhere; a class count `K` means labels live in `0..K`.

use std::cmp::Ordering;
use std::fmt;

use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Row-sum tolerance for a valid probability row.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Per-sample class-probability estimates, `n_samples × K`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    values: Vec<f64>,
    n_samples: usize,
    n_classes: usize,
}

impl ProbabilityMatrix {
    pub fn new(values: Vec<f64>, n_samples: usize, n_classes: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::invalid(format!(
                "a probability matrix needs at least 2 classes, got {n_classes}"
            )));
        }
        if values.len() != n_samples * n_classes {
            return Err(Error::DimensionMismatch {
                what: "probability matrix values",
                expected: n_samples * n_classes,
                found: values.len(),
            });
        }
        for (i, row) in values.chunks_exact(n_classes).enumerate() {
            if let Some((y, p)) = row
                .iter()
                .enumerate()
                .find(|(_, p)| !p.is_finite() || **p < 0.0 || **p > 1.0)
            {
                return Err(Error::invalid(format!(
                    "probability at sample {i}, class {y} is {p}, outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::invalid(format!(
                    "probability row {i} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self {
            values,
            n_samples,
            n_classes,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_classes = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_classes) {
            return Err(Error::DimensionMismatch {
                what: "probability row length",
                expected: n_classes,
                found: bad.len(),
            });
        }
        Self::new(rows.concat(), rows.len(), n_classes)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_classes)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Keeps only the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.n_classes);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            values,
            n_samples: indices.len(),
            n_classes: self.n_classes,
        }
    }
}

/// Class labels, 0-based.
///
/// A label vector may be shorter than the score tensor it is used with: samples
/// past the end are unlabeled (test rows). Any attempt to calibrate on such a
/// sample fails with [`Error::MissingLabel`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if let Some((i, y)) = labels.iter().enumerate().find(|(_, y)| **y >= n_classes) {
            return Err(Error::invalid(format!(
                "label {y} at sample {i} is out of range for K = {n_classes}"
            )));
        }
        Ok(Self { labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, i: usize) -> Option<usize> {
        self.labels.get(i).copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let labels = indices
            .iter()
            .map(|&i| self.get(i).ok_or(Error::MissingLabel { index: i }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            labels,
            n_classes: self.n_classes,
        })
    }
}

/// `n_samples × K × d` scores, stored layer-major: one contiguous
/// `n_samples × K` block per score function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTensor {
    layers: Vec<Vec<f64>>,
    names: Vec<String>,
    n_samples: usize,
    n_classes: usize,
}

impl ScoreTensor {
    pub fn from_layers(
        names: Vec<String>,
        layers: Vec<Vec<f64>>,
        n_samples: usize,
        n_classes: usize,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a score tensor needs at least one layer"));
        }
        if names.len() != layers.len() {
            return Err(Error::DimensionMismatch {
                what: "score layer names",
                expected: layers.len(),
                found: names.len(),
            });
        }
        for (name, layer) in names.iter().zip(&layers) {
            if layer.len() != n_samples * n_classes {
                return Err(Error::DimensionMismatch {
                    what: "score layer size",
                    expected: n_samples * n_classes,
                    found: layer.len(),
                });
            }
            if layer.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "score layer '{name}' has non-finite entries"
                )));
            }
        }
        Ok(Self {
            layers,
            names,
            n_samples,
            n_classes,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Number of score functions `d`.
    pub fn dim(&self) -> usize {
        self.layers.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn layer(&self, j: usize) -> &[f64] {
        &self.layers[j]
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn value(&self, i: usize, y: usize, j: usize) -> f64 {
        self.layers[j][i * self.n_classes + y]
    }

    /// The d-vector `s(x_i, y)`.
    pub fn score_vector(&self, i: usize, y: usize) -> Vec<f64> {
        let off = i * self.n_classes + y;
        self.layers.iter().map(|l| l[off]).collect()
    }

    /// A d = 1 tensor holding only layer `j`.
    pub fn single_layer(&self, j: usize) -> ScoreTensor {
        ScoreTensor {
            layers: vec![self.layers[j].clone()],
            names: vec![self.names[j].clone()],
            n_samples: self.n_samples,
            n_classes: self.n_classes,
        }
    }

    /// Keeps only the given samples, in the given order.
    pub fn select_samples(&self, indices: &[usize]) -> ScoreTensor {
        let k = self.n_classes;
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let mut out = Vec::with_capacity(indices.len() * k);
                for &i in indices {
                    out.extend_from_slice(&l[i * k..(i + 1) * k]);
                }
                out
            })
            .collect();
        ScoreTensor {
            layers,
            names: self.names.clone(),
            n_samples: indices.len(),
            n_classes: k,
        }
    }

    /// `<w, s>` at flat offset `i * K + y`.
    #[inline]
    pub(crate) fn combine_at(&self, w: &[f64], offset: usize) -> f64 {
        combine(w, self.layers.iter().map(|l| l[offset]))
    }

    pub(crate) fn check_weight(&self, w: &WeightVector) -> Result<()> {
        if w.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "weight vector length",
                expected: self.dim(),
                found: w.dim(),
            });
        }
        Ok(())
    }
}

/// The weighted sum `Σ_j w_j s_j`, accumulated left to right from 0.0.
///
/// Zero weights are skipped; adding `0.0 * s` never changes the accumulator,
/// so the result is bit-identical either way. Every code path that compares a
/// weighted score against a threshold must use this accumulation order.
#[inline]
pub fn combine(w: &[f64], scores: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = 0.0;
    for (wj, s) in w.iter().zip(scores) {
        if *wj != 0.0 {
            acc += wj * s;
        }
    }
    acc
}

/// Weighted score `<w, s(x_i, y)>`.
pub fn weighted_score(tensor: &ScoreTensor, w: &WeightVector, i: usize, y: usize) -> Result<f64> {
    tensor.check_weight(w)?;
    if i >= tensor.n_samples() {
        return Err(Error::invalid(format!(
            "sample index {i} out of range for {} samples",
            tensor.n_samples()
        )));
    }
    if y >= tensor.n_classes() {
        return Err(Error::invalid(format!(
            "label {y} out of range for K = {}",
            tensor.n_classes()
        )));
    }
    Ok(tensor.combine_at(w.values(), i * tensor.n_classes() + y))
}

/// A point of the probability simplex with rational coordinates `k_j / N`.
///
/// The integer coordinates sum to `N` exactly; the float weights are derived
/// from them once, at construction. Up to [`INLINE_DIM`] coordinates are
/// stored without a heap allocation, which keeps large grids cheap.
#[derive(Debug, Clone)]
pub struct WeightVector {
    coords: SmallVec<[u32; INLINE_DIM]>,
    resolution: u32,
    values: SmallVec<[f64; INLINE_DIM]>,
}

/// Dimensions stored inline by [`WeightVector`].
pub const INLINE_DIM: usize = 6;

// Equality and hashing compare the exact rationals k_j / N, so (1, 0) / 1
// equals (100, 0) / 100.
impl PartialEq for WeightVector {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.lex_cmp(other) == Ordering::Equal
    }
}

impl Eq for WeightVector {}

impl std::hash::Hash for WeightVector {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        fn gcd(a: u32, b: u32) -> u32 {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        let g = self.coords.iter().fold(self.resolution, |g, &c| gcd(g, c));
        for c in &self.coords {
            (c / g).hash(state);
        }
        (self.resolution / g).hash(state);
    }
}

impl WeightVector {
    pub fn from_coords(coords: Vec<u32>, resolution: u32) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("weight vector must have at least one entry"));
        }
        if resolution == 0 {
            return Err(Error::invalid("weight resolution must be positive"));
        }
        let total: u64 = coords.iter().map(|&c| u64::from(c)).sum();
        if total != u64::from(resolution) {
            return Err(Error::invalid(format!(
                "weight coordinates sum to {total}, expected {resolution}"
            )));
        }
        Ok(Self::from_valid_coords(&coords, resolution))
    }

    /// [`WeightVector::from_coords`] without the checks, for callers that
    /// build non-empty coordinates summing to a positive `resolution`.
    pub(crate) fn from_valid_coords(coords: &[u32], resolution: u32) -> Self {
        let values = coords
            .iter()
            .map(|&c| f64::from(c) / f64::from(resolution))
            .collect();
        Self {
            coords: SmallVec::from_slice(coords),
            resolution,
            values,
        }
    }

    /// The vertex `e_j` of the d-simplex.
    pub fn vertex(dim: usize, j: usize) -> Result<Self> {
        if j >= dim {
            return Err(Error::invalid(format!(
                "vertex {j} out of range for d = {dim}"
            )));
        }
        let mut coords = vec![0; dim];
        coords[j] = 1;
        Self::from_coords(coords, 1)
    }

    /// Rounds non-negative weights onto the grid of the given resolution
    /// using largest remainders, so the result sums to one exactly.
    pub fn from_weights(weights: &[f64], resolution: u32) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("weights must not all be zero"));
        }
        let scaled: Vec<f64> = weights
            .iter()
            .map(|w| w / total * f64::from(resolution))
            .collect();
        let mut coords: Vec<u32> = scaled.iter().map(|s| s.floor() as u32).collect();
        let assigned: u32 = coords.iter().sum();
        let mut order: Vec<usize> = (0..weights.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = scaled[a] - scaled[a].floor();
            let rb = scaled[b] - scaled[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &j in order.iter().take((resolution - assigned) as usize) {
            coords[j] += 1;
        }
        Self::from_coords(coords, resolution)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[u32] {
        &self.coords
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Lexicographic order on the rational coordinates `k_j / N`.
    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        let lhs = self
            .coords
            .iter()
            .map(|&c| u64::from(c) * u64::from(other.resolution));
        let rhs = other
            .coords
            .iter()
            .map(|&c| u64::from(c) * u64::from(self.resolution));
        lhs.cmp(rhs)
    }
}

impl fmt::Display for WeightVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (j, w) in self.values().iter().enumerate() {
            if j > 0 {
                f.write_str(";")?;
            }
            write!(f, "{w}")?;
        }
        Ok(())
    }
}

/// A conformal threshold `Q` computed from a calibration set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub q: f64,
    pub alpha: f64,
    /// `|I|` of the calibration set.
    pub source_size: usize,
    /// Order-statistic rank `k = ⌈(1 + |I|)(1 − α)⌉` (counted from the top).
    pub rank: usize,
    /// The k-th largest score does not exist; `q = −∞` and every set is full.
    pub degenerate: bool,
}

/// Prediction sets for a batch of samples.
///
/// Invariant: `y ∈ set_i ⇔ <w, s(x_i, y)> ≥ q`, compared exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSetBatch {
    indices: Vec<usize>,
    n_classes: usize,
    members: Vec<bool>,
    threshold: Threshold,
    weight: WeightVector,
}

impl PredictionSetBatch {
    pub(crate) fn new(
        indices: Vec<usize>,
        n_classes: usize,
        members: Vec<bool>,
        threshold: Threshold,
        weight: WeightVector,
    ) -> Self {
        debug_assert_eq!(members.len(), indices.len() * n_classes);
        Self {
            indices,
            n_classes,
            members,
            threshold,
            weight,
        }
    }

    /// Builds a batch from explicit label sets, e.g. for metric tests.
    pub fn from_sets(
        n_classes: usize,
        sets: &[Vec<usize>],
        threshold: Threshold,
        weight: WeightVector,
    ) -> Result<Self> {
        let mut members = vec![false; sets.len() * n_classes];
        for (pos, set) in sets.iter().enumerate() {
            for &y in set {
                if y >= n_classes {
                    return Err(Error::invalid(format!(
                        "label {y} out of range for K = {n_classes}"
                    )));
                }
                members[pos * n_classes + y] = true;
            }
        }
        Ok(Self::new(
            (0..sets.len()).collect(),
            n_classes,
            members,
            threshold,
            weight,
        ))
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Sample index (into the score tensor) of batch position `pos`.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn threshold(&self) -> &Threshold {
        &self.threshold
    }

    pub fn weight(&self) -> &WeightVector {
        &self.weight
    }

    /// Membership row of width K for batch position `pos`.
    pub fn row(&self, pos: usize) -> &[bool] {
        &self.members[pos * self.n_classes..(pos + 1) * self.n_classes]
    }

    pub fn contains(&self, pos: usize, y: usize) -> bool {
        self.members[pos * self.n_classes + y]
    }

    pub fn set_size(&self, pos: usize) -> usize {
        self.row(pos).iter().filter(|m| **m).count()
    }

    pub fn labels(&self, pos: usize) -> Vec<usize> {
        self.row(pos)
            .iter()
            .enumerate()
            .filter_map(|(y, m)| m.then_some(y))
            .collect()
    }
}
