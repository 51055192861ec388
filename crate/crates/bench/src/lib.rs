//! Shared fixtures for the benchmarks.

use scoremix_core::scores::score_tensor_from_probs;
use scoremix_core::synthetic::{generate, SyntheticSpec};
use scoremix_core::{LabelVector, ScoreKind, ScoreTensor};

/// A labeled THR/APS/RANK tensor over `n` synthetic samples with 10 classes.
pub fn fixture(n: usize, seed: u64) -> (ScoreTensor, LabelVector) {
    let spec = SyntheticSpec {
        n_classes: 10,
        n_samples: n,
        concentration: 3.0,
        miscalibration: 0.5,
        seed,
    };
    let data = generate(&spec).expect("valid synthetic spec");
    let tensor = score_tensor_from_probs(&data.probs, &ScoreKind::DEFAULTS, &[ScoreKind::Rank])
        .expect("scores of a valid matrix");
    (tensor, data.labels)
}
