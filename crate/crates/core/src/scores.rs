//! Score functions built from class-probability estimates.
//!
//! Every score here is oriented so that higher means more plausible, and all
//! three preserve the per-sample label order given by the probabilities.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::types::{ProbabilityMatrix, ScoreTensor};

/// One `n_samples × K` score layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    name: String,
    values: Vec<f64>,
    n_samples: usize,
    n_classes: usize,
}

impl ScoreMatrix {
    pub fn new(
        name: impl Into<String>,
        values: Vec<f64>,
        n_samples: usize,
        n_classes: usize,
    ) -> Result<Self> {
        let name = name.into();
        if values.len() != n_samples * n_classes {
            return Err(Error::DimensionMismatch {
                what: "score matrix values",
                expected: n_samples * n_classes,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "score matrix '{name}' has non-finite entries"
            )));
        }
        Ok(Self {
            name,
            values,
            n_samples,
            n_classes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_classes..(i + 1) * self.n_classes]
    }

    /// Affine map of the whole layer onto [0, 1]. A constant layer maps to 0.
    pub fn min_max_rescaled(&self) -> Self {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = hi - lo;
        let values = self
            .values
            .iter()
            .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
            .collect();
        Self {
            name: self.name.clone(),
            values,
            n_samples: self.n_samples,
            n_classes: self.n_classes,
        }
    }
}

/// `s(x, y) = p̂_y(x)`.
pub fn score_thr(probs: &ProbabilityMatrix) -> ScoreMatrix {
    ScoreMatrix {
        name: ScoreKind::Thr.to_string(),
        values: probs.values().to_vec(),
        n_samples: probs.n_samples(),
        n_classes: probs.n_classes(),
    }
}

/// `s(x, y) = Σ_{y'} p̂_{y'}(x) 1{p̂_{y'}(x) ≤ p̂_y(x)}`, summed in label order.
pub fn score_aps(probs: &ProbabilityMatrix) -> ScoreMatrix {
    let mut values = Vec::with_capacity(probs.values().len());
    for row in probs.rows() {
        for &p in row {
            let mut acc = 0.0;
            for &q in row {
                if q <= p {
                    acc += q;
                }
            }
            values.push(acc);
        }
    }
    ScoreMatrix {
        name: ScoreKind::Aps.to_string(),
        values,
        n_samples: probs.n_samples(),
        n_classes: probs.n_classes(),
    }
}

/// Number of classes with strictly smaller probability, divided by `K − 1`
/// when `normalized`.
pub fn score_rank(probs: &ProbabilityMatrix, normalized: bool) -> Result<ScoreMatrix> {
    let k = probs.n_classes();
    if normalized && k < 2 {
        return Err(Error::invalid("normalized RANK needs K >= 2"));
    }
    let denom = if normalized { (k - 1) as f64 } else { 1.0 };
    let mut values = Vec::with_capacity(probs.values().len());
    for row in probs.rows() {
        for &p in row {
            let below = row.iter().filter(|&&q| q < p).count();
            values.push(below as f64 / denom);
        }
    }
    let kind = if normalized {
        ScoreKind::Rank
    } else {
        ScoreKind::RankUnnormalized
    };
    Ok(ScoreMatrix {
        name: kind.to_string(),
        values,
        n_samples: probs.n_samples(),
        n_classes: k,
    })
}

/// Score functions known by name to configs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    Thr,
    Aps,
    Rank,
    RankUnnormalized,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 4] = [
        ScoreKind::Thr,
        ScoreKind::Aps,
        ScoreKind::Rank,
        ScoreKind::RankUnnormalized,
    ];

    /// THR, APS and normalized RANK.
    pub const DEFAULTS: [ScoreKind; 3] = [ScoreKind::Thr, ScoreKind::Aps, ScoreKind::Rank];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Thr => "thr",
            ScoreKind::Aps => "aps",
            ScoreKind::Rank => "rank",
            ScoreKind::RankUnnormalized => "rank_unnorm",
        }
    }

    pub fn compute(self, probs: &ProbabilityMatrix) -> Result<ScoreMatrix> {
        match self {
            ScoreKind::Thr => Ok(score_thr(probs)),
            ScoreKind::Aps => Ok(score_aps(probs)),
            ScoreKind::Rank => score_rank(probs, true),
            ScoreKind::RankUnnormalized => score_rank(probs, false),
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "score function",
                name: s.to_string(),
                known: ScoreKind::ALL
                    .iter()
                    .map(|k| k.name().to_string())
                    .collect(),
            })
    }
}

/// Stacks score matrices along the score axis, keeping order and names.
///
/// The matrices may come from one model under different score functions, or
/// from several models under one score function; the tensor does not care.
pub fn build_score_tensor(matrices: Vec<ScoreMatrix>) -> Result<ScoreTensor> {
    let Some(first) = matrices.first() else {
        return Err(Error::invalid("at least one score matrix is required"));
    };
    let (n, k) = (first.n_samples, first.n_classes);
    for m in &matrices {
        if m.n_samples != n {
            return Err(Error::DimensionMismatch {
                what: "score matrix sample count",
                expected: n,
                found: m.n_samples,
            });
        }
        if m.n_classes != k {
            return Err(Error::DimensionMismatch {
                what: "score matrix class count",
                expected: k,
                found: m.n_classes,
            });
        }
    }
    let (names, layers) = matrices.into_iter().map(|m| (m.name, m.values)).unzip();
    ScoreTensor::from_layers(names, layers, n, k)
}

/// Computes the named score functions on one probability matrix and stacks
/// them, optionally min-max rescaling the layers named in `rescale`.
pub fn score_tensor_from_probs(
    probs: &ProbabilityMatrix,
    kinds: &[ScoreKind],
    rescale: &[ScoreKind],
) -> Result<ScoreTensor> {
    let matrices = kinds
        .iter()
        .map(|&kind| {
            let m = kind.compute(probs)?;
            Ok(if rescale.contains(&kind) {
                m.min_max_rescaled()
            } else {
                m
            })
        })
        .collect::<Result<Vec<_>>>()?;
    build_score_tensor(matrices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(values: &[f64]) -> ProbabilityMatrix {
        ProbabilityMatrix::from_rows(&[values.to_vec()]).unwrap()
    }

    #[test]
    fn thr_is_identity() {
        let p = row(&[0.5, 0.3, 0.2]);
        let s = score_thr(&p);
        assert_eq!(s.values(), &[0.5, 0.3, 0.2]);
        let u = row(&[0.25; 4]);
        assert!(score_thr(&u).values().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn aps_hand_row() {
        // oracle: 0.5 + 0.3 + 0.2, 0.3 + 0.2, 0.2
        let s = score_aps(&row(&[0.5, 0.3, 0.2]));
        assert_eq!(s.values(), &[1.0, 0.5, 0.2]);
    }

    #[test]
    fn aps_all_equal_scores_one() {
        let s = score_aps(&row(&[0.25; 4]));
        assert_eq!(s.values(), &[1.0; 4]);
    }

    #[test]
    fn rank_hand_row() {
        let p = row(&[0.5, 0.3, 0.2]);
        assert_eq!(score_rank(&p, true).unwrap().values(), &[1.0, 0.5, 0.0]);
        assert_eq!(score_rank(&p, false).unwrap().values(), &[2.0, 1.0, 0.0]);
        let u = row(&[0.2; 5]);
        assert!(score_rank(&u, true)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn tensor_slice_for_three_scores() {
        let p = row(&[0.5, 0.3, 0.2]);
        let t = build_score_tensor(vec![
            score_thr(&p),
            score_aps(&p),
            score_rank(&p, true).unwrap(),
        ])
        .unwrap();
        assert_eq!(t.names(), &["thr", "aps", "rank"]);
        let expect = [[0.5, 1.0, 1.0], [0.3, 0.5, 0.5], [0.2, 0.2, 0.0]];
        for (y, e) in expect.iter().enumerate() {
            assert_eq!(t.score_vector(0, y), e.to_vec());
        }
    }

    #[test]
    fn single_thr_tensor_equals_probabilities() {
        let p = ProbabilityMatrix::from_rows(&[vec![0.6, 0.4], vec![0.1, 0.9]]).unwrap();
        let t = build_score_tensor(vec![score_thr(&p)]).unwrap();
        assert_eq!(t.dim(), 1);
        assert_eq!(t.layer(0), p.values());
    }

    #[test]
    fn duplicated_models_give_identical_layers() {
        let p = row(&[0.5, 0.3, 0.2]);
        let t = build_score_tensor(vec![
            score_thr(&p).with_name("thr:m1"),
            score_thr(&p).with_name("thr:m2"),
        ])
        .unwrap();
        assert_eq!(t.layer(0), t.layer(1));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = score_thr(&row(&[0.5, 0.5]));
        let b = score_thr(&row(&[0.2, 0.3, 0.5]));
        assert!(build_score_tensor(vec![a, b]).is_err());
        assert!(build_score_tensor(vec![]).is_err());
    }

    #[test]
    fn registry_names() {
        assert_eq!("aps".parse::<ScoreKind>().unwrap(), ScoreKind::Aps);
        assert_eq!(
            "rank_unnorm".parse::<ScoreKind>().unwrap(),
            ScoreKind::RankUnnormalized
        );
        let err = "raps".parse::<ScoreKind>().unwrap_err().to_string();
        assert!(err.contains("thr, aps, rank, rank_unnorm"), "{err}");
    }

    #[test]
    fn min_max_rescale() {
        let m = ScoreMatrix::new("x", vec![2.0, 4.0, 3.0, 6.0], 2, 2).unwrap();
        assert_eq!(m.min_max_rescaled().values(), &[0.0, 0.5, 0.25, 1.0]);
        let c = ScoreMatrix::new("c", vec![1.0; 4], 2, 2).unwrap();
        assert_eq!(c.min_max_rescaled().values(), &[0.0; 4]);
    }

    fn distinct_row(k: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(1u32..1_000_000, k).prop_filter_map("distinct", |raw| {
            let mut sorted = raw.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != raw.len() {
                return None;
            }
            let total: f64 = raw.iter().map(|&r| f64::from(r)).sum();
            let row: Vec<f64> = raw.iter().map(|&r| f64::from(r) / total).collect();
            let mut check = row.clone();
            check.sort_by(f64::total_cmp);
            check.dedup();
            (check.len() == row.len()).then_some(row)
        })
    }

    fn argsort(v: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        idx
    }

    proptest! {
        #[test]
        fn scores_preserve_label_order(r in distinct_row(8)) {
            let p = row(&r);
            let order = argsort(&r);
            for s in [score_thr(&p), score_aps(&p), score_rank(&p, true).unwrap()] {
                prop_assert_eq!(argsort(s.values()), order.clone(), "{}", s.name());
            }
        }

        #[test]
        fn aps_matches_sorted_cumsum(r in distinct_row(6)) {
            // oracle: ascending sort, running sum
            let p = row(&r);
            let s = score_aps(&p);
            let order = argsort(&r);
            let mut acc = 0.0;
            for &y in &order {
                acc += r[y];
                prop_assert!((s.values()[y] - acc).abs() < 1e-12);
            }
            let top = order[order.len() - 1];
            prop_assert!((s.values()[top] - 1.0).abs() < 1e-12);
        }

        #[test]
        fn normalized_rank_range(r in distinct_row(7)) {
            let s = score_rank(&row(&r), true).unwrap();
            let mut got: Vec<f64> = s.values().to_vec();
            got.sort_by(f64::total_cmp);
            let expect: Vec<f64> = (0..7).map(|c| c as f64 / 6.0).collect();
            prop_assert_eq!(got, expect);
        }
    }
}
