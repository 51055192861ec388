//! `scoremix` command-line interface.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 data error,
//! 3 internal invariant violation.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use scoremix_core::conformal::{predict_with_weight, run_pipeline};
use scoremix_core::diagnostics::deviation_report;
use scoremix_core::grid::{resolution_for, simplex_grid};
use scoremix_core::io::{
    assemble_inputs, load_dataset, load_inputs, load_labels, write_dataset, write_results,
    DatasetHeader, DiagnoseConfig, ExperimentConfig, LoadedDataset, ReportFormat,
};
use scoremix_core::scores::{score_tensor_from_probs, ScoreKind};
use scoremix_core::splitting::make_split;
use scoremix_core::synthetic::{generate, SyntheticSpec};
use scoremix_core::{
    run_experiment, Error, ErrorClass, LabelVector, PredictionSetBatch, ProbabilityMatrix, Result,
    SummaryRow, WeightVector,
};

const DATASET_FORMAT_HELP: &str = "\
DATASET FORMAT
  Line 1 is a JSON header behind '#':
    # {\"n\":3,\"K\":3,\"kind\":\"probabilities\",\"model_name\":\"resnet\"}
  Then n CSV rows of K reals, each optionally followed by an integer label
  in 0..K. Labeled rows come first; an unlabeled tail is a test pool.
  kind is \"probabilities\" (rows summing to 1; off-sum rows are renormalized
  with a warning, negative entries are rejected) or \"logits\" (converted with
  a softmax on load). Extra header keys such as dataset, split or
  source_kind are kept. Labels may also come from a one-per-line file.

EXIT CODES
  0 success, 1 configuration error, 2 data error, 3 internal error";

#[derive(Debug, Parser)]
#[command(
    name = "scoremix",
    version,
    about = "Split conformal prediction with weighted score combinations"
)]
#[command(after_long_help = DATASET_FORMAT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Repeated random-split experiment; writes records.csv, summary.csv and long.csv.
    #[command(after_long_help = DATASET_FORMAT_HELP)]
    Run(ConfigArgs),
    /// Prediction sets for the unlabeled test rows.
    #[command(after_long_help = DATASET_FORMAT_HELP)]
    Predict(PredictArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Measure coverage and size deviations against a reference sample.
    Diagnose(DiagnoseArgs),
    /// Print the size and extremes of a simplex grid.
    GridInfo(GridInfoArgs),
}

/// Experiment config keys; each flag overrides the key of the same name.
#[derive(Debug, Args, Default)]
struct ConfigArgs {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    datasets: Vec<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Score functions: thr, aps, rank, rank_unnorm.
    #[arg(long, value_delimiter = ',')]
    scores: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    rescale: Vec<String>,
    /// Strategies: vfcp, efcp, dlcp, dlcp+.
    #[arg(long, value_delimiter = ',')]
    strategies: Vec<String>,
    #[arg(long)]
    baselines: Option<bool>,
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    #[arg(long)]
    alpha_prime: Option<f64>,
    #[arg(long)]
    n_runs: Option<usize>,
    #[arg(long)]
    vfcp_ratio: Option<f64>,
    #[arg(long)]
    train_test_ratio: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    test_datasets: Vec<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Fixed weight, e.g. 1,0,0; skips the weight search.
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 3.0)]
    concentration: f64,
    #[arg(long, default_value_t = 0.5)]
    miscalibration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write the true conditional probabilities here.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct GridInfoArgs {
    /// Number of score functions.
    dim: usize,
    epsilon: f64,
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Config => 1,
        ErrorClass::Data => 2,
        ErrorClass::Internal => 3,
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(a) => {
            let cfg = build_config(&a)?;
            with_workers(cfg.workers, || cmd_run(&cfg))
        }
        Command::Predict(a) => {
            let cfg = build_config(&a.config)?;
            with_workers(cfg.workers, || {
                cmd_predict(&cfg, &a.weights, a.out.as_deref())
            })
        }
        Command::Synth(a) => cmd_synth(&a),
        Command::Diagnose(a) => {
            let mut cfg = DiagnoseConfig::load(&a.config)?;
            if let Some(e) = a.epsilon {
                cfg.epsilon = e;
            }
            if let Some(d) = a.delta {
                cfg.delta = d;
            }
            if let Some(f) = a.format {
                cfg.format = match f {
                    FormatArg::Json => ReportFormat::Json,
                    FormatArg::Csv => ReportFormat::Csv,
                };
            }
            if a.output.is_some() {
                cfg.output = a.output.clone();
            }
            if a.workers.is_some() {
                cfg.workers = a.workers;
            }
            with_workers(cfg.workers, || cmd_diagnose(&cfg))
        }
        Command::GridInfo(a) => cmd_grid_info(a.dim, a.epsilon),
    }
}

fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    match workers {
        None => f(),
        Some(0) => Err(Error::Config("workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn build_config(a: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if !a.datasets.is_empty() => ExperimentConfig::new(Vec::new()),
        None => return Err(Error::Config("give --config or --datasets".into())),
    };
    if !a.datasets.is_empty() {
        cfg.datasets = a.datasets.clone();
    }
    if a.labels.is_some() {
        cfg.labels = a.labels.clone();
    }
    if !a.scores.is_empty() {
        cfg.scores = a.scores.clone();
    }
    if !a.rescale.is_empty() {
        cfg.rescale = a.rescale.clone();
    }
    if !a.strategies.is_empty() {
        cfg.strategies = a.strategies.clone();
    }
    if let Some(b) = a.baselines {
        cfg.baselines = b;
    }
    if !a.alphas.is_empty() {
        cfg.alphas = a.alphas.clone();
    }
    if a.alpha_prime.is_some() {
        cfg.alpha_prime = a.alpha_prime;
    }
    if let Some(v) = a.n_runs {
        cfg.n_runs = v;
    }
    if let Some(v) = a.vfcp_ratio {
        cfg.vfcp_ratio = v;
    }
    if let Some(v) = a.train_test_ratio {
        cfg.train_test_ratio = v;
    }
    if let Some(v) = a.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = &a.output_dir {
        cfg.output_dir = v.clone();
    }
    if !a.test_datasets.is_empty() {
        cfg.test_datasets = a.test_datasets.clone();
    }
    if a.workers.is_some() {
        cfg.workers = a.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(cfg: &ExperimentConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let labels = inputs
        .labels
        .ok_or_else(|| Error::invalid("the experiment needs labels for every sample"))?;
    let plan = cfg.plan()?;
    eprintln!(
        "running {} runs over {} samples, d = {}",
        plan.n_runs,
        inputs.tensor.n_samples(),
        inputs.tensor.dim()
    );
    let out = run_experiment(&inputs.tensor, &labels, &plan)?;
    let paths = write_results(&out.records, &out.summaries, &cfg.output_dir)?;
    eprintln!("wrote {}", paths.summary.display());
    print_summary(&out.summaries);
    Ok(())
}

fn print_summary(rows: &[SummaryRow]) {
    println!(
        "{:<14} {:>7} {:>17} {:>17} {:>6}",
        "method", "alpha", "coverage", "size", "runs"
    );
    for r in rows {
        println!(
            "{:<14} {:>7} {:>8.4} ({:.4}) {:>8.3} ({:.3}) {:>6}",
            r.method, r.alpha, r.coverage_mean, r.coverage_std, r.size_mean, r.size_std, r.n_runs
        );
    }
}

/// Stacks `a` on top of `b` row-wise.
fn concat(a: &ProbabilityMatrix, b: &ProbabilityMatrix) -> Result<ProbabilityMatrix> {
    if a.n_classes() != b.n_classes() {
        return Err(Error::DimensionMismatch {
            what: "test dataset classes",
            expected: a.n_classes(),
            found: b.n_classes(),
        });
    }
    let mut v = a.values().to_vec();
    v.extend_from_slice(b.values());
    ProbabilityMatrix::new(v, a.n_samples() + b.n_samples(), a.n_classes())
}

fn cmd_predict(cfg: &ExperimentConfig, weights: &[f64], out: Option<&Path>) -> Result<()> {
    let strategies = cfg.strategy_list()?;
    let strategy = strategies[0];
    let alpha = cfg.alphas[0];
    if strategies.len() > 1 || cfg.alphas.len() > 1 {
        log::warn!("predict uses the first strategy ({strategy}) and alpha ({alpha})");
    }
    let kinds = cfg.score_kinds()?;
    let rescale = cfg.rescale_kinds()?;
    let train = cfg
        .datasets
        .iter()
        .map(load_dataset)
        .collect::<Result<Vec<_>>>()?;
    let k = train[0].probs.n_classes();
    let file_labels = cfg.labels.as_ref().map(|p| load_labels(p, k)).transpose()?;

    // (labeled pool, test pool) per model, then stacked so the test rows follow
    let (combined, n_train, labels) = if cfg.test_datasets.is_empty() {
        let labels = file_labels
            .or_else(|| train[0].labels.clone())
            .ok_or_else(|| Error::invalid("no labeled rows for calibration"))?;
        let n_train = labels.len();
        if n_train >= train[0].probs.n_samples() {
            return Err(Error::invalid(
                "no unlabeled rows to predict; add an unlabeled tail or test_datasets",
            ));
        }
        (train, n_train, labels)
    } else {
        if cfg.test_datasets.len() != cfg.datasets.len() {
            return Err(Error::Config(
                "test_datasets needs one entry per dataset".into(),
            ));
        }
        let labels = file_labels
            .or_else(|| train[0].labels.clone())
            .ok_or_else(|| Error::invalid("no labeled rows for calibration"))?;
        let n_train = train[0].probs.n_samples();
        let mut combined = Vec::new();
        for (tr, tp) in train.into_iter().zip(&cfg.test_datasets) {
            let te = load_dataset(tp)?;
            combined.push(LoadedDataset {
                probs: concat(&tr.probs, &te.probs)?,
                labels: None,
                ..tr
            });
        }
        (combined, n_train, labels)
    };
    let inputs = assemble_inputs(&combined, &kinds, &rescale)?;
    // test labels are never passed on
    let labels = LabelVector::new(
        labels.as_slice()[..labels.len().min(n_train)].to_vec(),
        labels.n_classes(),
    )?;
    let n_test = inputs.tensor.n_samples() - n_train;
    let split = make_split(strategy, n_train, n_test, cfg.vfcp_ratio, cfg.seed)?;
    let sets = if weights.is_empty() {
        let grid = simplex_grid(inputs.tensor.dim(), cfg.epsilon)?;
        let out = run_pipeline(
            &inputs.tensor,
            &labels,
            &split,
            grid.members(),
            alpha,
            cfg.alpha_prime,
        )?;
        eprintln!("selected weight {}", out.selection.w_hat);
        out.sets
    } else {
        if weights.len() != inputs.tensor.dim() {
            return Err(Error::Config(format!(
                "--weights has {} entries but there are {} score layers ({})",
                weights.len(),
                inputs.tensor.dim(),
                inputs.tensor.names().join(", ")
            )));
        }
        let w = WeightVector::from_weights(weights, resolution_for(cfg.epsilon)?)?;
        predict_with_weight(&inputs.tensor, &labels, &split, &w, alpha)?
    };
    write_predictions(&sets, n_train, out)
}

fn write_predictions(sets: &PredictionSetBatch, offset: usize, out: Option<&Path>) -> Result<()> {
    let (mut w, name): (Box<dyn Write>, PathBuf) = match out {
        Some(p) => (
            Box::new(BufWriter::new(
                File::create(p).map_err(|e| Error::io(p, e))?,
            )),
            p.to_path_buf(),
        ),
        None => (
            Box::new(BufWriter::new(io::stdout().lock())),
            PathBuf::from("<stdout>"),
        ),
    };
    let io_err = |e| Error::io(&name, e);
    writeln!(w, "index,threshold,size,labels").map_err(io_err)?;
    let q = sets.threshold().q;
    for pos in 0..sets.len() {
        let labels: Vec<String> = sets.labels(pos).iter().map(|y| y.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{}",
            sets.indices()[pos] - offset,
            q,
            sets.set_size(pos),
            labels.join(";")
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_classes: a.classes,
        n_samples: a.samples,
        concentration: a.concentration,
        miscalibration: a.miscalibration,
        seed: a.seed,
    };
    let data = generate(&spec)?;
    let mut header = DatasetHeader::probabilities(a.samples, a.classes);
    header.model_name = Some("synthetic".into());
    header.dataset = Some(format!(
        "synthetic-c{}-m{}-s{}",
        a.concentration, a.miscalibration, a.seed
    ));
    header.split = Some("all".into());
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_dataset(&a.out, &header, &data.probs, Some(&data.labels))?;
    if let Some(t) = &a.truth {
        let mut h = header.clone();
        h.model_name = Some("truth".into());
        write_dataset(t, &h, &data.true_conditional, Some(&data.labels))?;
    }
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_diagnose(cfg: &DiagnoseConfig) -> Result<()> {
    let kinds = cfg
        .scores
        .iter()
        .map(|s| s.parse())
        .collect::<Result<Vec<ScoreKind>>>()?;
    let rescale = cfg
        .rescale
        .iter()
        .map(|s| s.parse())
        .collect::<Result<Vec<ScoreKind>>>()?;
    let sample = load_dataset(&cfg.dataset)?;
    let reference = load_dataset(&cfg.reference)?;
    let k = sample.probs.n_classes();
    let labels_of = |d: &LoadedDataset, file: &Option<PathBuf>| -> Result<LabelVector> {
        match file {
            Some(p) => load_labels(p, k),
            None => d
                .labels
                .clone()
                .ok_or_else(|| Error::invalid(format!("{} has no labels", d.path.display()))),
        }
    };
    let labels = labels_of(&sample, &cfg.labels)?;
    let ref_labels = labels_of(&reference, &cfg.reference_labels)?;
    let t = score_tensor_from_probs(&sample.probs, &kinds, &rescale)?;
    let rt = score_tensor_from_probs(&reference.probs, &kinds, &rescale)?;
    let grid = simplex_grid(t.dim(), cfg.epsilon)?;
    let all: Vec<usize> = (0..labels.len().min(t.n_samples())).collect();
    let report = deviation_report(&t, &labels, &all, &rt, &ref_labels, &grid, cfg.delta)?;
    let text = match cfg.format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(&report).map_err(|e| Error::Invariant(e.to_string()))?
                + "\n"
        }
        ReportFormat::Csv => {
            let value =
                serde_json::to_value(&report).map_err(|e| Error::Invariant(e.to_string()))?;
            let obj = value.as_object().expect("report serializes to an object");
            let keys: Vec<&str> = obj.keys().map(String::as_str).collect();
            let vals: Vec<String> = obj
                .values()
                .map(|v| match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            format!("{}\n{}\n", keys.join(","), vals.join(","))
        }
    };
    match &cfg.output {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_grid_info(dim: usize, epsilon: f64) -> Result<()> {
    let grid = simplex_grid(dim, epsilon)?;
    println!("dimension {dim}");
    println!("epsilon {epsilon}");
    println!("resolution {}", grid.resolution());
    println!("members {}", grid.len());
    println!("first {}", grid.members()[0]);
    println!("last {}", grid.members()[grid.len() - 1]);
    Ok(())
}
