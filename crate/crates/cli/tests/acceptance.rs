//! Acceptance suite. Prints one PASS/FAIL line per criterion with the measured
//! quantities and wall time, and exits non-zero if any criterion fails or
//! overruns its time budget.
//!
//! `ACCEPTANCE_ONLY=4,7` runs a subset.

use std::panic;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scoremix_core::diagnostics::{gamma_deviation_many, omega_deviation_many};
use scoremix_core::scores::score_tensor_from_probs;
use scoremix_core::synthetic::OracleOptions;
use scoremix_core::{
    avg_size, calibrate, evaluate, generate, make_split, oracle_weight, run_experiment,
    run_pipeline, simplex_grid, split_conformal, vc_bound, ExperimentPlan, LabelVector,
    ProbabilityMatrix, RunRecord, ScoreKind, ScoreTensor, Strategy, SummaryRow, SyntheticSpec,
    WeightVector,
};

struct Outcome {
    pass: bool,
    detail: String,
}

struct Criterion {
    id: u32,
    name: &'static str,
    /// Wall-time budget in seconds.
    budget: Option<f64>,
    check: fn() -> Outcome,
}

const CRITERIA: [Criterion; 10] = [
    Criterion {
        id: 1,
        name: "grid cardinality",
        budget: Some(1.0),
        check: grid_cardinality,
    },
    Criterion {
        id: 2,
        name: "calibration matches sort oracle",
        budget: Some(5.0),
        check: calibration_oracle,
    },
    Criterion {
        id: 3,
        name: "score formulas",
        budget: None,
        check: score_formulas,
    },
    Criterion {
        id: 4,
        name: "VFCP marginal coverage",
        budget: Some(120.0),
        check: vfcp_coverage,
    },
    Criterion {
        id: 5,
        name: "EFCP/DLCP/DLCP+ near-validity",
        budget: Some(300.0),
        check: near_validity,
    },
    Criterion {
        id: 6,
        name: "efficiency against single scores",
        budget: None,
        check: efficiency,
    },
    Criterion {
        id: 7,
        name: "EFCP oracle inequality",
        budget: None,
        check: oracle_inequality,
    },
    Criterion {
        id: 8,
        name: "coverage deviation diagnostics",
        budget: Some(300.0),
        check: diagnostics_sanity,
    },
    Criterion {
        id: 9,
        name: "end-to-end determinism",
        budget: None,
        check: golden_summary,
    },
    Criterion {
        id: 10,
        name: "degenerate sets and nesting",
        budget: None,
        check: degenerate_and_nesting,
    },
];

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    let mut ran = 0;
    for c in &CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&c.id)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = panic::catch_unwind(c.check);
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let in_budget = c.budget.is_none_or(|b| secs < b);
        let budget = match c.budget {
            Some(b) if in_budget => format!(" (budget {b} s)"),
            Some(b) => format!(" (OVER budget {b} s)"),
            None => String::new(),
        };
        let ok = pass && in_budget;
        println!(
            "criterion {:>2} {} {}: {detail}; {secs:.2} s{budget}",
            c.id,
            if ok { "PASS" } else { "FAIL" },
            c.name
        );
        if !ok {
            failed.push(c.id);
        }
    }
    println!(
        "acceptance: {} of {ran} criteria passed{}",
        ran - failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed {failed:?}")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// shared data

const CLASSES: usize = 10;
const CONCENTRATION: f64 = 3.0;
const MISCALIBRATION: f64 = 0.8;
const REFERENCE_SIZE: usize = 50_000;

fn task_probs(n: usize, seed: u64) -> (ProbabilityMatrix, LabelVector) {
    let data = generate(&SyntheticSpec {
        n_classes: CLASSES,
        n_samples: n,
        concentration: CONCENTRATION,
        miscalibration: MISCALIBRATION,
        seed,
    })
    .expect("valid synthetic spec");
    (data.probs, data.labels)
}

/// THR/APS/RANK scores; no data-dependent rescaling, so separately
/// generated samples share one score map.
fn scores(probs: &ProbabilityMatrix) -> ScoreTensor {
    score_tensor_from_probs(probs, &ScoreKind::DEFAULTS, &[]).expect("scores")
}

fn task(n: usize, seed: u64) -> (ScoreTensor, LabelVector) {
    let (p, l) = task_probs(n, seed);
    (scores(&p), l)
}

/// Large sample standing in for the population.
fn reference() -> &'static (ProbabilityMatrix, ScoreTensor, LabelVector) {
    static REF: OnceLock<(ProbabilityMatrix, ScoreTensor, LabelVector)> = OnceLock::new();
    REF.get_or_init(|| {
        let (p, l) = task_probs(REFERENCE_SIZE, 71);
        let t = scores(&p);
        (p, t, l)
    })
}

fn plan(
    strategies: Vec<Strategy>,
    baselines: bool,
    alphas: Vec<f64>,
    runs: usize,
) -> ExperimentPlan {
    ExperimentPlan {
        strategies,
        baselines,
        alphas,
        n_runs: runs,
        ..ExperimentPlan::default()
    }
}

/// Random tensor; `tied` draws every entry from five levels.
fn random_instance(
    rng: &mut ChaCha8Rng,
    tied: bool,
    max_n: usize,
) -> (Vec<Vec<f64>>, ScoreTensor, LabelVector) {
    let d = rng.random_range(1..=4);
    let k = rng.random_range(2..=5);
    let n = rng.random_range(1..=max_n);
    let layers: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            (0..n * k)
                .map(|_| {
                    if tied {
                        rng.random_range(0..5) as f64 * 0.25
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect()
        })
        .collect();
    let names = (0..d).map(|j| format!("s{j}")).collect();
    let tensor = ScoreTensor::from_layers(names, layers.clone(), n, k).expect("tensor");
    let labels =
        LabelVector::new((0..n).map(|_| rng.random_range(0..k)).collect(), k).expect("labels");
    (layers, tensor, labels)
}

fn random_weight(rng: &mut ChaCha8Rng, d: usize) -> WeightVector {
    let grid = simplex_grid(d, [0.5, 0.25, 0.1][rng.random_range(0..3)]).expect("grid");
    grid.members()[rng.random_range(0..grid.len())].clone()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------------------
// criteria

fn choose(n: u64, r: u64) -> u128 {
    (0..r).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn grid_cardinality() -> Outcome {
    let members = simplex_grid(3, 0.01).unwrap().len();
    let mut mismatches = Vec::new();
    let mut pairs = 0;
    for d in 1..=5usize {
        for big_n in 1..=50u64 {
            let got = simplex_grid(d, 1.0 / big_n as f64).unwrap().len() as u128;
            let want = choose(big_n + d as u64 - 1, d as u64 - 1);
            pairs += 1;
            if got != want {
                mismatches.push((d, big_n, got, want));
            }
        }
    }
    Outcome {
        pass: members == 5151 && mismatches.is_empty(),
        detail: format!(
            "simplex_grid(3, 0.01) has {members} members (want 5151); {} of {pairs} (d, 1/eps) pairs match the binomial count{}",
            pairs - mismatches.len(),
            if mismatches.is_empty() { String::new() } else { format!(", mismatches {mismatches:?}") }
        ),
    }
}

fn calibration_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut bad_threshold, mut bad_sets, mut with_ties, mut degenerate) = (0, 0, 0, 0);
    let instances = 1000;
    for inst in 0..instances {
        // three of every four instances draw from five levels only
        let (layers, tensor, labels) = random_instance(&mut rng, inst % 4 != 3, 60);
        let (n, k) = (tensor.n_samples(), tensor.n_classes());
        let w = random_weight(&mut rng, tensor.dim());
        let a: usize = rng.random_range(1..=99);
        let alpha = a as f64 / 100.0;
        let m = rng.random_range(1..=n);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        idx.truncate(m);

        let score = |i: usize, y: usize| {
            (0..layers.len()).fold(0.0, |acc, j| acc + w.values()[j] * layers[j][i * k + y])
        };
        let mut cal: Vec<f64> = idx
            .iter()
            .map(|&i| score(i, labels.get(i).unwrap()))
            .collect();
        cal.sort_by(|x, y| y.total_cmp(x));
        if cal.windows(2).any(|p| p[0] == p[1]) {
            with_ties += 1;
        }
        // ⌈(m + 1)(100 − a) / 100⌉ in integers
        let rank = ((m + 1) * (100 - a)).div_ceil(100);
        let (q, deg) = if rank > m {
            (f64::NEG_INFINITY, true)
        } else {
            (cal[rank - 1], false)
        };
        degenerate += deg as usize;

        let th = calibrate(&tensor, &labels, &w, &idx, alpha).unwrap();
        if th.rank != rank || th.degenerate != deg || th.q.to_bits() != q.to_bits() {
            bad_threshold += 1;
        }
        let all: Vec<usize> = (0..n).collect();
        let sets = evaluate(&tensor, &w, &all, &th).unwrap();
        if (0..n).any(|i| (0..k).any(|y| sets.contains(i, y) != (score(i, y) >= q))) {
            bad_sets += 1;
        }
    }
    Outcome {
        pass: bad_threshold == 0 && bad_sets == 0,
        detail: format!(
            "{instances} instances ({with_ties} with tied calibration scores, {degenerate} degenerate): \
             {bad_threshold} threshold mismatches, {bad_sets} set mismatches"
        ),
    }
}

fn score_formulas() -> Outcome {
    let row = ProbabilityMatrix::from_rows(&[vec![0.5, 0.3, 0.2]]).unwrap();
    let expected = [
        (ScoreKind::Thr, [0.5, 0.3, 0.2]),
        (ScoreKind::Aps, [1.0, 0.5, 0.2]),
        (ScoreKind::Rank, [1.0, 0.5, 0.0]),
    ];
    let mut wrong = Vec::new();
    for (kind, want) in expected {
        let got = kind.compute(&row).unwrap().values().to_vec();
        if got != want {
            wrong.push(format!("{} gave {got:?}", kind.name()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows = 500;
    let mut violations = 0;
    let mut pairs = 0;
    for _ in 0..rows {
        let k = rng.random_range(2..=12);
        let p = loop {
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let mut sorted = p.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).all(|w| w[0] < w[1]) {
                break p;
            }
        };
        let m = ProbabilityMatrix::from_rows(std::slice::from_ref(&p)).unwrap();
        for kind in ScoreKind::ALL {
            let s = kind.compute(&m).unwrap();
            let s = s.values();
            for i in 0..k {
                for j in 0..k {
                    if p[i] > p[j] {
                        pairs += 1;
                        if s[i] <= s[j] {
                            violations += 1;
                        }
                    }
                }
            }
        }
    }
    Outcome {
        pass: wrong.is_empty() && violations == 0,
        detail: format!(
            "hand row {}; order preserved on {rows} distinct-entry rows for all {} score kinds \
             ({violations} violations in {pairs} ordered pairs)",
            if wrong.is_empty() {
                "exact".to_string()
            } else {
                wrong.join(", ")
            },
            ScoreKind::ALL.len()
        ),
    }
}

/// `(method, alpha) -> mean coverage` lines and the worst shortfall.
fn coverage_check(summaries: &[SummaryRow], slack: f64) -> (bool, String) {
    let mut pass = !summaries.is_empty();
    let mut parts = Vec::new();
    for s in summaries {
        let floor = 1.0 - s.alpha - slack;
        let ok = s.coverage_mean >= floor;
        pass &= ok;
        parts.push(format!(
            "{} a={} cov {:.4} (floor {:.2}{})",
            s.method,
            s.alpha,
            s.coverage_mean,
            floor,
            if ok { "" } else { ", BELOW" }
        ));
    }
    (pass, parts.join("; "))
}

fn vfcp_coverage() -> Outcome {
    let (tensor, labels) = task(3000, 41);
    let mut p = plan(vec![Strategy::Vfcp], false, vec![0.05, 0.1], 200);
    p.train_test_ratio = 2.0 / 3.0;
    p.seed = 4000;
    assert_eq!(p.pool_sizes(3000), (2000, 1000));
    let out = run_experiment(&tensor, &labels, &p).unwrap();
    let (pass, detail) = coverage_check(&out.summaries, 0.01);
    Outcome {
        pass,
        detail: format!("n_train 2000, n_test 1000, 200 runs: {detail}"),
    }
}

fn near_validity() -> Outcome {
    let (tensor, labels) = task(6000, 51);
    let mut p = plan(
        vec![Strategy::Efcp, Strategy::Dlcp, Strategy::DlcpPlus],
        false,
        vec![0.05, 0.1],
        200,
    );
    p.train_test_ratio = 5.0 / 6.0;
    p.seed = 5000;
    assert_eq!(p.pool_sizes(6000), (5000, 1000));
    let out = run_experiment(&tensor, &labels, &p).unwrap();
    let (pass, detail) = coverage_check(&out.summaries, 0.03);
    Outcome {
        pass,
        detail: format!("n_train 5000, n_test 1000, 200 runs: {detail}"),
    }
}

fn efficiency() -> Outcome {
    let (tensor, labels) = task(3000, 61);
    let mut p = plan(Strategy::ALL.to_vec(), true, vec![0.05], 100);
    p.train_test_ratio = 2.0 / 3.0;
    p.seed = 6000;
    let out = run_experiment(&tensor, &labels, &p).unwrap();
    let by = |method: &str| -> Vec<&RunRecord> {
        out.records.iter().filter(|r| r.method == method).collect()
    };
    let baselines: Vec<Vec<&RunRecord>> = ["thr", "aps", "rank"].iter().map(|m| by(m)).collect();
    let best: Vec<f64> = (0..p.n_runs)
        .map(|r| {
            baselines
                .iter()
                .map(|b| {
                    assert_eq!(b[r].seed, by("vfcp")[r].seed);
                    b[r].avg_size
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let gap = |method: &str| {
        let diffs: Vec<f64> = by(method)
            .iter()
            .zip(&best)
            .map(|(r, b)| r.avg_size - b)
            .collect();
        mean(&diffs)
    };
    let vfcp_gap = gap("vfcp");
    let with_selection: Vec<&RunRecord> = out
        .records
        .iter()
        .filter(|r| r.selection_size.is_some())
        .collect();
    let selection_violations = with_selection
        .iter()
        .filter(|r| r.selection_size.unwrap() > r.vertex_selection_min.unwrap())
        .count();
    let baseline_means: Vec<String> = ["thr", "aps", "rank"]
        .iter()
        .map(|m| {
            format!(
                "{m} {:.3}",
                mean(&by(m).iter().map(|r| r.avg_size).collect::<Vec<_>>())
            )
        })
        .collect();
    Outcome {
        pass: vfcp_gap <= 0.1 && selection_violations == 0,
        detail: format!(
            "alpha 0.05, 100 runs: mean(VFCP size - best single-score size) = {vfcp_gap:.4} (limit 0.1); \
             others: efcp {:.3}, dlcp {:.3}, dlcp+ {:.3}; single-score sizes {}; \
             S(w_hat) <= min vertex S on I2 in {} of {} selections",
            gap("efcp"),
            gap("dlcp"),
            gap("dlcp+"),
            baseline_means.join(", "),
            with_selection.len() - selection_violations,
            with_selection.len()
        ),
    }
}

fn stack(a: &ProbabilityMatrix, b: &ProbabilityMatrix) -> ProbabilityMatrix {
    let mut v = a.values().to_vec();
    v.extend_from_slice(b.values());
    ProbabilityMatrix::new(v, a.n_samples() + b.n_samples(), a.n_classes()).unwrap()
}

fn oracle_inequality() -> Outcome {
    let (runs, n, alpha) = (20, 2000, 0.1);
    let (ref_probs, ref_tensor, ref_labels) = reference();
    let grid = simplex_grid(3, 0.05).unwrap();
    let (train_probs, train_labels) = task_probs(runs * n, 72);
    let train_tensor = scores(&train_probs);
    let blocks: Vec<Vec<usize>> = (0..runs).map(|r| (r * n..(r + 1) * n).collect()).collect();
    let subsets: Vec<&[usize]> = blocks.iter().map(Vec::as_slice).collect();
    let eta = omega_deviation_many(
        &train_tensor,
        &train_labels,
        &subsets,
        ref_tensor,
        ref_labels,
        &grid,
    )
    .unwrap();
    let xi = gamma_deviation_many(&train_tensor, &subsets, ref_tensor, &grid).unwrap();

    // training runs first, the reference sample is every run's test pool
    let combined = scores(&stack(&train_probs, ref_probs));
    let mut all_labels = train_labels.as_slice().to_vec();
    all_labels.extend_from_slice(ref_labels.as_slice());
    let combined_labels = LabelVector::new(all_labels, CLASSES).unwrap();
    let ref_offset = runs * n;

    let mut held = 0;
    let mut worst_margin = f64::INFINITY;
    let mut lines = Vec::new();
    for r in 0..runs {
        let mut perm = blocks[r].clone();
        perm.extend(ref_offset..ref_offset + REFERENCE_SIZE);
        let split = make_split(Strategy::Efcp, n, REFERENCE_SIZE, 0.5, r as u64)
            .unwrap()
            .remap(&perm);
        let out = run_pipeline(
            &combined,
            &combined_labels,
            &split,
            grid.members(),
            alpha,
            None,
        )
        .unwrap();
        let size = avg_size(&out.sets).unwrap();
        let level = out.threshold.rank as f64 / n as f64 + eta[r];
        // a level of 1 or more asks for full coverage of the reference sample
        let alpha1 = (1.0 - level).max(1e-9);
        let oracle = oracle_weight(
            &grid,
            ref_tensor,
            ref_labels,
            alpha1,
            OracleOptions::default(),
        )
        .unwrap();
        let bound = oracle.expected_size + 2.0 * xi[r];
        let margin = bound - size;
        worst_margin = worst_margin.min(margin);
        if size <= bound {
            held += 1;
        }
        if r < 3 {
            lines.push(format!(
                "run {r}: E|C| {size:.3} <= {:.3} + 2*{:.3} (alpha1 {alpha1:.4}, eta {:.4})",
                oracle.expected_size, xi[r], eta[r]
            ));
        }
    }
    Outcome {
        pass: held == runs,
        detail: format!(
            "n_train {n}, alpha {alpha}, grid eps 0.05, reference {REFERENCE_SIZE}: held in {held} of {runs} runs, \
             smallest margin {worst_margin:.4}; {}",
            lines.join("; ")
        ),
    }
}

fn diagnostics_sanity() -> Outcome {
    let (trials, n, delta) = (40, 5000, 0.05);
    let bound = 8.0 * (4.0 * 5001f64.ln() / 5000.0).sqrt() + 0.05;
    let (library_bound, _) = vc_bound(n, 3, delta, None).unwrap();
    let (_, ref_tensor, ref_labels) = reference();
    let grid = simplex_grid(3, 0.05).unwrap();
    let (probs, labels) = task_probs(trials * n, 81);
    let tensor = scores(&probs);
    let sizes = [200, 800, 3200, n];
    let subsets: Vec<Vec<usize>> = sizes
        .iter()
        .flat_map(|&m| (0..trials).map(move |t| (t * n..t * n + m).collect()))
        .collect();
    let refs: Vec<&[usize]> = subsets.iter().map(Vec::as_slice).collect();
    let eta = omega_deviation_many(&tensor, &labels, &refs, ref_tensor, ref_labels, &grid).unwrap();
    let full = &eta[3 * trials..];
    let within = full.iter().filter(|&&e| e <= bound).count();
    let medians: Vec<f64> = (0..3)
        .map(|s| median(eta[s * trials..(s + 1) * trials].to_vec()))
        .collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    Outcome {
        pass: within >= 38 && decreasing && (library_bound - bound).abs() < 1e-12,
        detail: format!(
            "bound {bound:.4} (library {library_bound:.4}); eta_hat within bound in {within} of {trials} trials \
             (max {:.4}); medians at |I| = 200/800/3200: {:.4} / {:.4} / {:.4}{}",
            full.iter().cloned().fold(0.0, f64::max),
            medians[0],
            medians[1],
            medians[2],
            if decreasing { "" } else { " (NOT decreasing)" }
        ),
    }
}

fn golden_summary() -> Outcome {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden");
    let out = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_scoremix"))
        .arg("run")
        .arg("--config")
        .arg(fixture.join("config.json"))
        .arg("--output-dir")
        .arg(out.path())
        .output()
        .unwrap();
    if !status.status.success() {
        return Outcome {
            pass: false,
            detail: format!("run failed: {}", String::from_utf8_lossy(&status.stderr)),
        };
    }
    let got = std::fs::read(out.path().join("summary.csv")).unwrap();
    let want = std::fs::read(fixture.join("expected_summary.csv")).unwrap();
    let first_diff = got.iter().zip(&want).position(|(a, b)| a != b);
    Outcome {
        pass: got == want,
        detail: format!(
            "summary.csv {} bytes vs committed {} bytes, {}",
            got.len(),
            want.len(),
            match (got == want, first_diff) {
                (true, _) => "identical".to_string(),
                (false, Some(i)) => format!("first difference at byte {i}"),
                (false, None) => "one is a prefix of the other".to_string(),
            }
        ),
    }
}

fn degenerate_and_nesting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let instances = 100;

    // (n + 1)(1 − α) = n + 0.1, so k = n + 1 > n
    let mut not_full = 0;
    for _ in 0..instances {
        let (_, tensor, labels) = random_instance(&mut rng, true, 30);
        let n = tensor.n_samples();
        let alpha = 0.9 / (n as f64 + 1.0);
        let w = random_weight(&mut rng, tensor.dim());
        let all: Vec<usize> = (0..n).collect();
        let th = calibrate(&tensor, &labels, &w, &all, alpha).unwrap();
        let sets = evaluate(&tensor, &w, &all, &th).unwrap();
        let single = split_conformal(&tensor.single_layer(0), &labels, &all, &all, alpha).unwrap();
        let k = tensor.n_classes();
        if !th.degenerate || (0..n).any(|i| sets.set_size(i) != k || single.set_size(i) != k) {
            not_full += 1;
        }
    }

    let mut violations = 0;
    let mut comparisons = 0;
    for inst in 0..instances {
        let (_, tensor, labels) = random_instance(&mut rng, inst % 2 == 0, 80);
        let n = tensor.n_samples();
        let w = random_weight(&mut rng, tensor.dim());
        let mut alphas: Vec<usize> = (1..100).collect();
        alphas.shuffle(&mut rng);
        alphas.truncate(6);
        alphas.sort_unstable();
        let m = rng.random_range(1..=n);
        let mut cal: Vec<usize> = (0..n).collect();
        cal.shuffle(&mut rng);
        cal.truncate(m);
        let all: Vec<usize> = (0..n).collect();
        let sets: Vec<_> = alphas
            .iter()
            .map(|&a| {
                let th = calibrate(&tensor, &labels, &w, &cal, a as f64 / 100.0).unwrap();
                evaluate(&tensor, &w, &all, &th).unwrap()
            })
            .collect();
        for pair in sets.windows(2) {
            // pair[0] has the smaller alpha and must contain pair[1]
            comparisons += 1;
            if (0..n).any(|i| {
                (0..tensor.n_classes()).any(|y| pair[1].contains(i, y) && !pair[0].contains(i, y))
            }) {
                violations += 1;
            }
        }
    }
    Outcome {
        pass: not_full == 0 && violations == 0,
        detail: format!(
            "k > |I| gave full sets in {} of {instances} instances; nesting held in {} of {comparisons} alpha pairs over {instances} instances",
            instances - not_full,
            comparisons - violations
        ),
    }
}
