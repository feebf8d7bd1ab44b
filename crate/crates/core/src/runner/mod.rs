//! Experiment runner: declarative grid expansion, cached execution, and
//! prediction-file persistence.

mod config;
mod execute;

pub use config::{
    expand_grid, CorpusPaths, ExperimentConfig, GridConfig, GridModel, Pipeline, DEFAULT_KB_BUDGET,
    DEFAULT_SEEDS, DEFAULT_THRESHOLD, DEFAULT_TOP_K, DEFAULT_TOTAL_BUDGET,
};
pub use execute::{run_and_persist, run_experiment, Retrieval, RunRecord};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("failed to read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Context(#[from] crate::context::ContextError),
    #[error(transparent)]
    Knowledge(#[from] crate::knowledge::KnowledgeError),
    #[error(transparent)]
    ModelIo(#[from] crate::modelio::ModelIoError),
    #[error(transparent)]
    Eval(#[from] crate::evaluation::EvalError),
    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
}
