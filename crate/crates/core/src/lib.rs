//! Split conformal prediction with data-driven weighted combinations of
//! score functions.
//!
//! A [`ScoreTensor`] stacks `d` score functions evaluated on every
//! (sample, class) pair. [`conformal::select_weight`] searches an ε-grid of
//! the simplex for the weight that minimizes average prediction-set size,
//! and [`conformal::run_pipeline`] recalibrates that weight on a held-out
//! split (or reuses the same data, depending on the [`Strategy`]).

pub mod conformal;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod scores;
pub mod splitting;
pub mod synthetic;
pub mod types;

pub use conformal::{
    calibrate, evaluate, run_pipeline, select_weight, split_conformal, sweep_candidates,
    CandidateSweep, PipelineOutput, WeightSelectionResult,
};
pub use diagnostics::{
    deviation_report, gamma_deviation, omega_deviation, vc_bound, DeviationReport,
};
pub use error::{Error, ErrorClass, Result};
pub use experiment::{run_experiment, ExperimentOutput, ExperimentPlan};
pub use grid::{simplex_grid, SimplexGrid};
pub use metrics::{avg_size, coverage, summarize, RunRecord, SummaryRow};
pub use scores::{build_score_tensor, ScoreKind, ScoreMatrix};
pub use splitting::{make_split, IndexSplit, Strategy};
pub use synthetic::{generate, oracle_weight, OracleResult, SyntheticSpec};
pub use types::{
    combine, weighted_score, LabelVector, PredictionSetBatch, ProbabilityMatrix, ScoreTensor,
    Threshold, WeightVector,
};
