//! Index splits for the four weight-selection strategies.
//!
//! Positions `0..n_train` are the labeled training pool and
//! `n_train..n_train + n_test` the test pool. Use [`IndexSplit::remap`] to
//! carry a split through a random permutation of a dataset.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Name of the generator behind every seeded draw in this crate; recorded in
/// result metadata so reruns can be matched to a stream.
pub const RNG_ALGORITHM: &str = "chacha8-rand0.9-v1";

/// ChaCha stream used for the VFCP partition draw.
const PARTITION_STREAM: u64 = 1;
/// ChaCha stream used for dataset permutations.
const PERMUTATION_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// `I1 = I2 ⊂ Itrain`, `I3 = Itrain \ I1`.
    Vfcp,
    /// `I1 = I2 = I3 = Itrain`.
    Efcp,
    /// `I1 = I3 = Itrain`, `I2 = Itest`.
    Dlcp,
    /// `I1 = I3 = Itrain`, `I2 = Itrain ∪ Itest`.
    DlcpPlus,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Vfcp,
        Strategy::Efcp,
        Strategy::Dlcp,
        Strategy::DlcpPlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Vfcp => "vfcp",
            Strategy::Efcp => "efcp",
            Strategy::Dlcp => "dlcp",
            Strategy::DlcpPlus => "dlcp+",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "strategy",
                name: s.to_string(),
                known: Strategy::ALL.iter().map(|k| k.name().to_string()).collect(),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexSplit {
    pub strategy: Strategy,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Labeled indices used for the stage-1 thresholds.
    pub i1: Vec<usize>,
    /// Indices whose average set size is minimized (labels never read).
    pub i2: Vec<usize>,
    /// Labeled calibration indices for the final threshold.
    pub i3: Vec<usize>,
    pub seed: u64,
    pub vfcp_ratio: f64,
}

impl IndexSplit {
    /// Maps every position `p` to `permutation[p]`.
    pub fn remap(&self, permutation: &[usize]) -> IndexSplit {
        let map = |v: &[usize]| v.iter().map(|&p| permutation[p]).collect::<Vec<_>>();
        IndexSplit {
            strategy: self.strategy,
            train: map(&self.train),
            test: map(&self.test),
            i1: map(&self.i1),
            i2: map(&self.i2),
            i3: map(&self.i3),
            seed: self.seed,
            vfcp_ratio: self.vfcp_ratio,
        }
    }
}

pub fn make_split(
    strategy: Strategy,
    n_train: usize,
    n_test: usize,
    vfcp_ratio: f64,
    seed: u64,
) -> Result<IndexSplit> {
    if n_train == 0 {
        return Err(Error::invalid("the training pool is empty"));
    }
    if n_test == 0 {
        return Err(Error::invalid("the test pool is empty"));
    }
    if !(vfcp_ratio > 0.0 && vfcp_ratio < 1.0) {
        return Err(Error::invalid(format!(
            "vfcp_ratio must lie in (0, 1), got {vfcp_ratio}"
        )));
    }
    let train: Vec<usize> = (0..n_train).collect();
    let test: Vec<usize> = (n_train..n_train + n_test).collect();
    let (i1, i2, i3) = match strategy {
        Strategy::Vfcp => {
            let n1 = (vfcp_ratio * n_train as f64).round() as usize;
            if n1 == 0 || n1 == n_train {
                return Err(Error::invalid(format!(
                    "VFCP with n_train = {n_train} and ratio {vfcp_ratio} leaves a partition empty"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(PARTITION_STREAM);
            let mut shuffled = train.clone();
            shuffled.shuffle(&mut rng);
            let mut i1 = shuffled[..n1].to_vec();
            let mut i3 = shuffled[n1..].to_vec();
            i1.sort_unstable();
            i3.sort_unstable();
            (i1.clone(), i1, i3)
        }
        Strategy::Efcp => (train.clone(), train.clone(), train.clone()),
        Strategy::Dlcp => (train.clone(), test.clone(), train.clone()),
        Strategy::DlcpPlus => {
            let all: Vec<usize> = (0..n_train + n_test).collect();
            (train.clone(), all, train.clone())
        }
    };
    Ok(IndexSplit {
        strategy,
        train,
        test,
        i1,
        i2,
        i3,
        seed,
        vfcp_ratio,
    })
}

/// A uniformly random permutation of `0..n`, drawn from `seed`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PERMUTATION_STREAM);
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng);
    p
}
