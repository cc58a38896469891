//! End-to-end experiments: expert training, proxy scoring, optional oracle
//! training, and the registry that makes every step resumable.

pub mod config;
mod experiment;
pub mod registry;
pub mod report;

pub use config::{CandidateSpec, ExperimentConfig, SuiteSpec};
pub use experiment::{
    run_cross_budget, run_dmo_via_merging, run_probe, run_project, run_regress_compare, train_experts, train_oracle,
    Accounting, CorrelationSummary, DmoOutcome, Experiment, ProjectionSummary, RunOptions, Trainings,
};
pub use registry::{Entry, Registry, RunKind};
pub use report::{report, ReportOutcome, ReportQuery};
