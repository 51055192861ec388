//! Result CSVs: per-run records, per-(method, alpha) summaries, and a long
//! `method,alpha,metric,value` table for plotting.
//!
//! Every float is written at 6 significant digits, in the shortest decimal
//! form that reads back to the rounded value.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::{RunRecord, SummaryRow};

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const LONG_FILE: &str = "long.csv";

pub const RECORD_COLUMNS: [&str; 8] = [
    "method",
    "alpha",
    "seed",
    "coverage",
    "avg_size",
    "selection_size",
    "vertex_selection_min",
    "weight",
];
pub const SUMMARY_COLUMNS: [&str; 7] = [
    "method",
    "alpha",
    "coverage_mean",
    "coverage_std",
    "size_mean",
    "size_std",
    "n_runs",
];
pub const LONG_COLUMNS: [&str; 4] = ["method", "alpha", "metric", "value"];

/// `x` rounded to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

pub fn fmt_sig6(x: f64) -> String {
    round_sig6(x).to_string()
}

fn fmt_weight(w: &[f64]) -> String {
    w.iter().map(|v| fmt_sig6(*v)).collect::<Vec<_>>().join(";")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig6).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            file: path.to_path_buf(),
            row: 0,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

pub fn write_records(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(RECORD_COLUMNS)
        .map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record([
            r.method.clone(),
            fmt_sig6(r.alpha),
            r.seed.to_string(),
            fmt_sig6(r.coverage),
            fmt_sig6(r.avg_size),
            fmt_opt(r.selection_size),
            fmt_opt(r.vertex_selection_min),
            fmt_weight(&r.weight),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summaries(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(SUMMARY_COLUMNS)
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            fmt_sig6(r.alpha),
            fmt_sig6(r.coverage_mean),
            fmt_sig6(r.coverage_std),
            fmt_sig6(r.size_mean),
            fmt_sig6(r.size_std),
            r.n_runs.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per record and metric (`coverage`, `avg_size`).
pub fn write_long(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(LONG_COLUMNS).map_err(|e| csv_err(path, e))?;
    for r in records {
        for (metric, value) in [("coverage", r.coverage), ("avg_size", r.avg_size)] {
            w.write_record([
                r.method.as_str(),
                &fmt_sig6(r.alpha),
                metric,
                &fmt_sig6(value),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultPaths {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub long: PathBuf,
}

/// Writes the three result files into `dir`, creating it if needed.
pub fn write_results(
    records: &[RunRecord],
    summaries: &[SummaryRow],
    dir: impl AsRef<Path>,
) -> Result<ResultPaths> {
    let dir = dir.as_ref();
    if records.is_empty() {
        return Err(Error::invalid("no records to write"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = ResultPaths {
        records: dir.join(RECORDS_FILE),
        summary: dir.join(SUMMARY_FILE),
        long: dir.join(LONG_FILE),
    };
    write_records(&paths.records, records)?;
    write_summaries(&paths.summary, summaries)?;
    write_long(&paths.long, records)?;
    Ok(paths)
}

fn reader(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let head = r.headers().map_err(|e| csv_err(path, e))?;
    if head.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            file: path.to_path_buf(),
            row: 1,
            column: 1,
            message: format!("expected columns {}", expected.join(",")),
        });
    }
    Ok(r)
}

struct Fields<'a> {
    path: &'a Path,
    row: usize,
    rec: &'a csv::StringRecord,
}

impl Fields<'_> {
    fn get<T: std::str::FromStr>(&self, c: usize) -> Result<T> {
        let s = self.rec.get(c).unwrap_or("");
        s.parse().map_err(|_| Error::Parse {
            file: self.path.to_path_buf(),
            row: self.row,
            column: c + 1,
            message: format!("cannot parse '{s}'"),
        })
    }

    fn opt(&self, c: usize) -> Result<Option<f64>> {
        match self.rec.get(c) {
            Some("") | None => Ok(None),
            Some(_) => self.get(c).map(Some),
        }
    }
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    let mut r = reader(path, &RECORD_COLUMNS)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let f = Fields {
            path,
            row: i + 2,
            rec: &rec,
        };
        let weight = rec
            .get(7)
            .unwrap_or("")
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|_| Error::Parse {
                    file: path.to_path_buf(),
                    row: i + 2,
                    column: 8,
                    message: format!("cannot parse weight '{s}'"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(RunRecord {
            method: f.get(0)?,
            alpha: f.get(1)?,
            seed: f.get(2)?,
            coverage: f.get(3)?,
            avg_size: f.get(4)?,
            selection_size: f.opt(5)?,
            vertex_selection_min: f.opt(6)?,
            weight,
        });
    }
    Ok(out)
}

pub fn read_summaries(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    let mut r = reader(path, &SUMMARY_COLUMNS)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let f = Fields {
            path,
            row: i + 2,
            rec: &rec,
        };
        out.push(SummaryRow {
            method: f.get(0)?,
            alpha: f.get(1)?,
            coverage_mean: f.get(2)?,
            coverage_std: f.get(3)?,
            size_mean: f.get(4)?,
            size_std: f.get(5)?,
            n_runs: f.get(6)?,
        });
    }
    Ok(out)
}
