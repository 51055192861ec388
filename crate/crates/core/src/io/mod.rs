//! File formats: datasets, label files, result tables and JSON configs.

pub mod config;
pub mod dataset;
pub mod results;

pub use config::{
    assemble_inputs, load_inputs, DiagnoseConfig, ExperimentConfig, Inputs, ReportFormat,
};
pub use dataset::{
    load_dataset, load_labels, write_dataset, write_labels, DataKind, DatasetHeader, LoadedDataset,
};
pub use results::{read_records, read_summaries, write_results, ResultPaths};
