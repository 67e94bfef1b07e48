//! Metrics, experiment protocols and report output.

pub mod harness;
pub mod metrics;
pub mod report;

pub use harness::{
    kfold_run, mean_std, repeated_runs, run_once, run_split, sweep, EvalReport, FoldRun,
    KfoldResult, Method, Outcome, RunArtifacts, RunConfig, RunRecord, SweepAxis, SweepPoint,
    SweepResult,
};
pub use metrics::{accuracy, average_precision, confusion, map_score, ConfusionMatrix, MapResult};
pub use report::{write_atomic, OutputDir};
