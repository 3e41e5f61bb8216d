//! Experiment orchestration for quantum reservoir embeddings: config
//! handling, the end-to-end regression workflow and the median-cut
//! classification task.

pub mod config;
pub mod pipeline;
pub mod table1;

pub use config::{derive_seed, ExperimentConfig, Mode};
pub use pipeline::{
    aggregate, run_candidate_tournament, run_pipeline, EvaluationReport, PipelineTrace, ReportRow, Stage, StageError,
};
pub use table1::{run_table1_task, Table1Report};

/// Environment variable overriding the configured worker count.
pub const WORKERS_ENV: &str = "QRC_WORKERS";

/// `QRC_WORKERS` when set and valid, else the configured count.
pub fn effective_workers(config: &ExperimentConfig) -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(config.workers)
}
