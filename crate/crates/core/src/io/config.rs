//! JSON configuration for experiments and diagnostics. Unknown keys are
//! rejected so that typos fail loudly. Relative paths resolve against the
//! directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::ExperimentPlan;
use crate::grid::DEFAULT_EPSILON;
use crate::io::dataset::{load_dataset, load_labels, LoadedDataset};
use crate::scores::{build_score_tensor, ScoreKind, ScoreMatrix};
use crate::splitting::Strategy;
use crate::types::{LabelVector, ScoreTensor};

fn default_scores() -> Vec<String> {
    ScoreKind::DEFAULTS
        .iter()
        .map(|k| k.name().to_string())
        .collect()
}

fn default_strategies() -> Vec<String> {
    Strategy::ALL.iter().map(|s| s.name().to_string()).collect()
}

fn default_true() -> bool {
    true
}

fn default_alphas() -> Vec<f64> {
    vec![0.05]
}

fn default_n_runs() -> usize {
    100
}

fn default_vfcp_ratio() -> f64 {
    0.5
}

fn default_train_test_ratio() -> f64 {
    0.8
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Probability sources. More than one switches to model weighting: each
    /// (score, model) pair becomes its own layer.
    pub datasets: Vec<PathBuf>,
    /// Label file, used when the datasets carry no label column.
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default = "default_scores")]
    pub scores: Vec<String>,
    /// Scores to min-max rescale before combining.
    #[serde(default)]
    pub rescale: Vec<String>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    #[serde(default = "default_true")]
    pub baselines: bool,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub alpha_prime: Option<f64>,
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    #[serde(default = "default_vfcp_ratio")]
    pub vfcp_ratio: f64,
    #[serde(default = "default_train_test_ratio")]
    pub train_test_ratio: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Unlabeled test sources for `predict`, one per entry of `datasets`.
    #[serde(default)]
    pub test_datasets: Vec<PathBuf>,
    /// Worker threads; absent means all available cores.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    /// A config over `datasets` with every other key at its default.
    pub fn new(datasets: Vec<PathBuf>) -> Self {
        Self {
            datasets,
            labels: None,
            scores: default_scores(),
            rescale: Vec::new(),
            strategies: default_strategies(),
            baselines: true,
            alphas: default_alphas(),
            alpha_prime: None,
            n_runs: default_n_runs(),
            vfcp_ratio: default_vfcp_ratio(),
            train_test_ratio: default_train_test_ratio(),
            epsilon: default_epsilon(),
            seed: 0,
            output_dir: default_output_dir(),
            test_datasets: Vec::new(),
            workers: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads and parses a config file, resolving relative paths against its
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.datasets.iter_mut().for_each(fix);
        self.test_datasets.iter_mut().for_each(fix);
        if let Some(l) = self.labels.as_mut() {
            fix(l);
        }
        fix(&mut self.output_dir);
    }

    pub fn score_kinds(&self) -> Result<Vec<ScoreKind>> {
        if self.scores.is_empty() {
            return Err(Error::Config("no score functions listed".into()));
        }
        self.scores.iter().map(|s| s.parse()).collect()
    }

    pub fn rescale_kinds(&self) -> Result<Vec<ScoreKind>> {
        self.rescale.iter().map(|s| s.parse()).collect()
    }

    pub fn strategy_list(&self) -> Result<Vec<Strategy>> {
        self.strategies.iter().map(|s| s.parse()).collect()
    }

    /// Checks names and numeric ranges without touching the file system.
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("no datasets listed".into()));
        }
        self.score_kinds()?;
        self.rescale_kinds()?;
        self.plan()?.validate()?;
        if let Some(0) = self.workers {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn plan(&self) -> Result<ExperimentPlan> {
        Ok(ExperimentPlan {
            strategies: self.strategy_list()?,
            baselines: self.baselines,
            alphas: self.alphas.clone(),
            alpha_prime: self.alpha_prime,
            n_runs: self.n_runs,
            vfcp_ratio: self.vfcp_ratio,
            train_test_ratio: self.train_test_ratio,
            epsilon: self.epsilon,
            seed: self.seed,
        })
    }
}

/// Score tensor and labels assembled from one or more dataset files.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub tensor: ScoreTensor,
    pub labels: Option<LabelVector>,
    pub warnings: Vec<String>,
}

/// Stacks scores from the loaded files. With one file the layers are named
/// by score (`thr`); with several, by score and model (`thr:resnet`).
pub fn assemble_inputs(
    loaded: &[LoadedDataset],
    kinds: &[ScoreKind],
    rescale: &[ScoreKind],
) -> Result<Inputs> {
    let first = loaded
        .first()
        .ok_or_else(|| Error::Config("no datasets listed".into()))?;
    let (n, k) = (first.probs.n_samples(), first.probs.n_classes());
    for d in &loaded[1..] {
        if d.probs.n_samples() != n || d.probs.n_classes() != k {
            return Err(Error::invalid(format!(
                "inconsistent dataset shapes: {} is {}x{}, {} is {}x{}",
                first.path.display(),
                n,
                k,
                d.path.display(),
                d.probs.n_samples(),
                d.probs.n_classes()
            )));
        }
        if d.labels.is_some() && first.labels.is_some() && d.labels != first.labels {
            return Err(Error::invalid(format!(
                "label columns of {} and {} disagree",
                first.path.display(),
                d.path.display()
            )));
        }
    }
    let multi = loaded.len() > 1;
    let mut matrices: Vec<ScoreMatrix> = Vec::new();
    for &kind in kinds {
        for d in loaded {
            let mut m = kind.compute(&d.probs)?;
            if rescale.contains(&kind) {
                m = m.min_max_rescaled();
            }
            let name = if multi {
                format!("{}:{}", kind.name(), d.model_name())
            } else {
                kind.name().to_string()
            };
            matrices.push(m.with_name(name));
        }
    }
    Ok(Inputs {
        tensor: build_score_tensor(matrices)?,
        labels: loaded.iter().find_map(|d| d.labels.clone()),
        warnings: loaded.iter().flat_map(|d| d.warnings.clone()).collect(),
    })
}

/// Loads `config.datasets` (and the label file, if any) into a score tensor.
pub fn load_inputs(config: &ExperimentConfig) -> Result<Inputs> {
    let kinds = config.score_kinds()?;
    let rescale = config.rescale_kinds()?;
    let loaded = config
        .datasets
        .iter()
        .map(load_dataset)
        .collect::<Result<Vec<_>>>()?;
    let mut inputs = assemble_inputs(&loaded, &kinds, &rescale)?;
    if let Some(p) = &config.labels {
        inputs.labels = Some(load_labels(p, inputs.tensor.n_classes())?);
    }
    Ok(inputs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

fn default_delta() -> f64 {
    0.05
}

fn default_format() -> ReportFormat {
    ReportFormat::Json
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Sample whose deviation is measured (all rows form the index set).
    pub dataset: PathBuf,
    /// Large independent sample standing in for the population.
    pub reference: PathBuf,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub reference_labels: Option<PathBuf>,
    #[serde(default = "default_scores")]
    pub scores: Vec<String>,
    #[serde(default)]
    pub rescale: Vec<String>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_format")]
    pub format: ReportFormat,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl DiagnoseConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            Some(&mut cfg.dataset),
            Some(&mut cfg.reference),
            cfg.labels.as_mut(),
            cfg.reference_labels.as_mut(),
            cfg.output.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}
