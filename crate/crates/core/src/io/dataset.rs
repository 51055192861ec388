//! Dataset files: a one-line JSON header comment followed by CSV rows.
//!
//! ```text
//! # {"n":2,"K":3,"kind":"probabilities","model_name":"resnet"}
//! 0.7,0.2,0.1,0
//! 0.1,0.1,0.8,2
//! ```
//!
//! Each row holds K reals and an optional trailing integer label. Labeled
//! rows must come first; once a row omits its label every later row must too
//! (the unlabeled tail is a test pool). `kind` is `probabilities` or `logits`;
//! logits go through a max-shifted softmax on load. Rows of a probability
//! file that do not sum to one are renormalized with a warning, but a
//! negative entry is always an error. Row numbers in messages are 1-based
//! file lines, counting the header as line 1.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthetic::softmax_into;
use crate::types::{LabelVector, ProbabilityMatrix, ROW_SUM_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Probabilities,
    Logits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub n: usize,
    #[serde(rename = "K")]
    pub n_classes: usize,
    pub kind: DataKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    /// Set when the values were converted on the way in (logits written back
    /// out as probabilities).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_kind: Option<DataKind>,
}

impl DatasetHeader {
    pub fn probabilities(n: usize, n_classes: usize) -> Self {
        Self {
            n,
            n_classes,
            kind: DataKind::Probabilities,
            model_name: None,
            dataset: None,
            split: None,
            source_kind: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub path: PathBuf,
    pub header: DatasetHeader,
    pub probs: ProbabilityMatrix,
    /// Labels of the leading labeled rows; `None` when no row has one.
    pub labels: Option<LabelVector>,
    /// Non-fatal issues, e.g. renormalized rows.
    pub warnings: Vec<String>,
}

impl LoadedDataset {
    /// `model_name` from the header, else the file stem.
    pub fn model_name(&self) -> String {
        self.header.model_name.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".to_string())
        })
    }
}

fn parse_err(path: &Path, row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: path.to_path_buf(),
        row,
        column,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LoadedDataset> {
    let path = path.as_ref();
    let mut reader = open(path)?;
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    let json = first
        .trim_end()
        .strip_prefix('#')
        .ok_or_else(|| parse_err(path, 1, 1, "expected a '# {...}' JSON header line"))?;
    let header: DatasetHeader = serde_json::from_str(json.trim())
        .map_err(|e| parse_err(path, 1, e.column().max(1), format!("bad header: {e}")))?;
    let k = header.n_classes;
    if k < 2 {
        return Err(parse_err(
            path,
            1,
            1,
            format!("K must be at least 2, got {k}"),
        ));
    }

    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::with_capacity(header.n * k);
    let mut labels = Vec::new();
    let mut warnings = Vec::new();
    let mut unlabeled_from: Option<usize> = None;
    let mut rows = 0usize;
    let mut logits = vec![0.0; k];
    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize + 1);
            parse_err(path, line, 1, e.to_string())
        })?;
        // csv counts lines from the first line it saw, which is line 2
        let line = record.position().map_or(0, |p| p.line() as usize + 1);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        rows += 1;
        if rows > header.n {
            return Err(parse_err(
                path,
                line,
                1,
                format!("more data rows than the declared n = {}", header.n),
            ));
        }
        if record.len() != k && record.len() != k + 1 {
            return Err(parse_err(
                path,
                line,
                record.len().min(k + 1) + 1,
                format!(
                    "expected {k} values (+ optional label), found {} fields",
                    record.len()
                ),
            ));
        }
        for (c, field) in record.iter().take(k).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, c + 1, format!("'{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    file: path.to_path_buf(),
                    row: line,
                    column: c + 1,
                });
            }
            logits[c] = v;
        }
        let start = values.len();
        match header.kind {
            DataKind::Logits => {
                values.resize(start + k, 0.0);
                softmax_into(&logits, &mut values[start..]);
            }
            DataKind::Probabilities => {
                if let Some(c) = logits.iter().position(|&v| v < 0.0) {
                    return Err(Error::NegativeProbability {
                        file: path.to_path_buf(),
                        row: line,
                        column: c + 1,
                        value: logits[c],
                    });
                }
                let sum: f64 = logits.iter().sum();
                if sum <= 0.0 {
                    return Err(parse_err(path, line, 1, "probability row sums to zero"));
                }
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    let msg = format!(
                        "{}: row {line}: probabilities sum to {sum}, renormalized",
                        path.display()
                    );
                    log::warn!("{msg}");
                    warnings.push(msg);
                    values.extend(logits.iter().map(|v| v / sum));
                } else {
                    values.extend_from_slice(&logits);
                }
            }
        }
        if record.len() == k + 1 {
            if let Some(first_unlabeled) = unlabeled_from {
                return Err(parse_err(
                    path,
                    line,
                    k + 1,
                    format!("labeled row after the unlabeled row at line {first_unlabeled}"),
                ));
            }
            let field = &record[k];
            let label: i64 = field.parse().map_err(|_| {
                parse_err(
                    path,
                    line,
                    k + 1,
                    format!("label '{field}' is not an integer"),
                )
            })?;
            if label < 0 || label as usize >= k {
                return Err(Error::LabelOutOfRange {
                    file: path.to_path_buf(),
                    row: line,
                    column: k + 1,
                    label,
                    classes: k,
                });
            }
            labels.push(label as usize);
        } else if unlabeled_from.is_none() {
            unlabeled_from = Some(line);
        }
    }
    if rows != header.n {
        return Err(parse_err(
            path,
            rows + 2,
            1,
            format!("declared n = {} but found {rows} data rows", header.n),
        ));
    }
    let probs = ProbabilityMatrix::new(values, rows, k)?;
    let labels = if labels.is_empty() {
        None
    } else {
        Some(LabelVector::new(labels, k)?)
    };
    Ok(LoadedDataset {
        path: path.to_path_buf(),
        header,
        probs,
        labels,
        warnings,
    })
}

/// Writes probabilities (and labels for the leading rows) in the dataset
/// format. The header's `n`, `K` and `kind` are taken from the data; a
/// `logits` header is recorded as `source_kind`.
pub fn write_dataset(
    path: impl AsRef<Path>,
    header: &DatasetHeader,
    probs: &ProbabilityMatrix,
    labels: Option<&LabelVector>,
) -> Result<()> {
    let path = path.as_ref();
    if let Some(l) = labels {
        if l.len() > probs.n_samples() || l.n_classes() != probs.n_classes() {
            return Err(Error::invalid("labels do not fit the probability matrix"));
        }
    }
    let mut header = header.clone();
    if header.kind == DataKind::Logits {
        header.source_kind = Some(DataKind::Logits);
    }
    header.kind = DataKind::Probabilities;
    header.n = probs.n_samples();
    header.n_classes = probs.n_classes();

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let json = serde_json::to_string(&header).map_err(|e| Error::Invariant(e.to_string()))?;
    writeln!(out, "# {json}").map_err(io)?;
    let mut line = String::new();
    for (i, row) in probs.rows().enumerate() {
        line.clear();
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        if let Some(y) = labels.and_then(|l| l.get(i)) {
            line.push(',');
            line.push_str(&y.to_string());
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// A single-column label file; blank lines and `#` comments are skipped.
pub fn load_labels(path: impl AsRef<Path>, n_classes: usize) -> Result<LabelVector> {
    let path = path.as_ref();
    let reader = open(path)?;
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let field = line.trim();
        if field.is_empty() || field.starts_with('#') {
            continue;
        }
        let label: i64 = field
            .parse()
            .map_err(|_| parse_err(path, i + 1, 1, format!("label '{field}' is not an integer")))?;
        if label < 0 || label as usize >= n_classes {
            return Err(Error::LabelOutOfRange {
                file: path.to_path_buf(),
                row: i + 1,
                column: 1,
                label,
                classes: n_classes,
            });
        }
        labels.push(label as usize);
    }
    LabelVector::new(labels, n_classes)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &LabelVector) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for y in labels.as_slice() {
        writeln!(out, "{y}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
