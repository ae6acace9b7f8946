//! Seeded Monte Carlo experiments.
//!
//! Each replication draws a design and an error path from seeds derived
//! from `(base_seed, n, rep)`, fits the exact-GLS, FGLS and least-squares
//! arms, selects weights over `H_N`, and scores them against the infimum of
//! the GSE loss. Results are written as `records.csv` and `summary.json`.

pub mod check;
pub mod config;
pub mod dataset;
pub mod experiment;
pub mod output;
pub mod record;
pub mod seeding;

pub use config::{AnalysisConfig, CandidateRule, CovarianceMode, ExperimentConfig, Resolved};
pub use dataset::{average_dataset, estimate_dataset, AverageReport, Dataset};
pub use experiment::{
    exact_precision, run_experiment, run_replication, run_replication_in, summarize, ExperimentResult,
    ExperimentSummary, Quartiles, SampleContext,
};
pub use output::{records_csv_string, write_outputs, write_records_csv};
pub use record::{Failure, Method, MethodOutcome, ReplicationRecord, Stage};
