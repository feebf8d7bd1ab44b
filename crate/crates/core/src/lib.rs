//! valuelab: an experiment harness for sentence-level multi-label human
//! value detection.
//!
//! The harness covers the full loop of a context/retrieval study on the
//! 19-value taxonomy: corpus ingestion and label collapsing, construction
//! of sentence/window/document inputs, retrieval from a curated moral
//! knowledge base over an exact flat vector index, prompt rendering and
//! backend dispatch, robust parsing of model output, multi-label
//! evaluation with paired significance tests, and regeneration of analysis
//! tables from saved prediction files.

pub mod analysis;
pub mod context;
pub mod corpus;
pub mod evaluation;
pub mod knowledge;
pub mod modelio;
pub mod runner;

pub use analysis::{RagMode, ResultsStore, RunKey, RunReport};
pub use context::{
    assemble_budgeted_input, build_document_context, build_sentence_context, build_window_context,
    ContextCondition, ContextInput, ContextKind, TokenCounter, WhitespaceCounter,
};
pub use corpus::{
    collapse_labels, group_documents, load_sentences, split_statistics, CorpusFormat, Document,
    LabelSet, SentenceRecord, Split, SplitStats, ValueLabel,
};
pub use evaluation::{
    compute_metrics, paired_bootstrap, paired_permutation, select_threshold, MetricSelector,
    MetricsReport, PairedTestResult, PredictionRecord,
};
pub use knowledge::{
    build_index, load_kb, make_query, retrieve, EmbeddingProvider, HashEmbedding, KbChunk, KbIndex,
    QueryFamily, RemoteEmbedding,
};
pub use modelio::{
    complete, parse_llm_output, render_prompt, score_encoder, threshold_predictions, BackendFamily,
    BackendSpec, DecodeParams, ProbabilityVector, PromptRendering,
};
pub use runner::{expand_grid, run_experiment, ExperimentConfig, GridConfig, RunRecord};
