//! Dataset ingestion, synthetic instances and the experiment runner.

pub mod dataset;
pub mod experiment;
pub mod generate;

pub use dataset::{add_synthetic_outliers, ingest_csv, ingest_reader, CsvOptions, Dataset};
pub use experiment::{
    parse_seeds, parse_values, run_experiment, summary_json, write_means_csv, write_rows_csv, Algorithm,
    ExperimentResult, ExperimentSpec, MeanRow, ResultRow, Sweep, Vary,
};
pub use generate::{gaussian_mixture, planted_kcenter, PlantedInstance};
