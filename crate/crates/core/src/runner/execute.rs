//! End-to-end run execution: context construction, retrieval, backend
//! calls, and prediction-file persistence with config-hash caching.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{cache_lookup, file_digest, RagMode, ResultsStore, RunKey};
use crate::context::{
    assemble_budgeted_input, build_document_context, build_sentence_context, build_window_context,
    ContextInput, ContextKind, TokenCounter, WhitespaceCounter,
};
use crate::corpus::{group_documents, Document, SentenceRecord};
use crate::evaluation::{write_predictions, PredictionRecord};
use crate::knowledge::{
    kb_digest, make_query, retrieve, EmbeddingProvider, KbChunk, KbIndex, QueryFamily,
};
use crate::modelio::{
    mock_completion, mock_probabilities, parse_llm_output, render_prompt, threshold_predictions,
    HttpBackendClient, RetryPolicy,
};

use super::config::{ExperimentConfig, Pipeline};
use super::RunError;

/// Bookkeeping for one executed run. Timestamps live here, never in the
/// prediction file, so prediction files stay byte-reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub key: RunKey,
    pub config_hash: String,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub sentences: usize,
    pub parse_failures: usize,
    pub retries: u64,
}

/// Retrieval sources for a run: the index, the provider that embeds
/// queries, and a per-(query, top_k) cache. Sharing one handle across the
/// runs of a grid reuses lookups between encoder and completion runs over
/// the same split; the KB digest is part of every config hash, so a cache
/// never outlives a KB edit.
pub struct Retrieval<'a> {
    index: &'a KbIndex,
    provider: &'a dyn EmbeddingProvider,
    cache: RetrievalCache,
}

impl<'a> Retrieval<'a> {
    pub fn new(index: &'a KbIndex, provider: &'a dyn EmbeddingProvider) -> Retrieval<'a> {
        Retrieval { index, provider, cache: RetrievalCache::default() }
    }

    fn lookup(&self, query: &str, k: usize) -> Result<Vec<(&'a KbChunk, f64)>, RunError> {
        if let Some(cached) =
            self.cache.hits.lock().expect("cache lock").get(&(query.to_string(), k))
        {
            return Ok(cached.iter().map(|(i, d)| (&self.index.chunks()[*i], *d)).collect());
        }
        let hits = retrieve(self.index, query, self.provider, k)?;
        let by_index: Vec<(usize, f64)> = hits
            .iter()
            .map(|(chunk, d)| {
                let i = self
                    .index
                    .chunks()
                    .iter()
                    .position(|c| c.chunk_id == chunk.chunk_id)
                    .expect("retrieved chunk comes from the index");
                (i, *d)
            })
            .collect();
        self.cache.hits.lock().expect("cache lock").insert((query.to_string(), k), by_index);
        Ok(hits)
    }
}

enum BackendHandle {
    Builtin { model: String },
    Http { client: HttpBackendClient, endpoint: String },
}

impl BackendHandle {
    fn for_config(config: &ExperimentConfig) -> BackendHandle {
        if config.backend.is_builtin() {
            BackendHandle::Builtin { model: config.backend.model.clone() }
        } else {
            BackendHandle::Http {
                client: HttpBackendClient::new(RetryPolicy::default()),
                endpoint: config.backend.endpoint.clone(),
            }
        }
    }

    fn retries(&self) -> u64 {
        match self {
            BackendHandle::Builtin { .. } => 0,
            BackendHandle::Http { client, .. } => client.retries(),
        }
    }
}

/// Cached hits keyed by (query, top_k), as (chunk index, distance) pairs.
type CachedHits = HashMap<(String, usize), Vec<(usize, f64)>>;

#[derive(Default)]
struct RetrievalCache {
    hits: Mutex<CachedHits>,
}

fn build_context(
    doc: &Document,
    position: usize,
    config: &ExperimentConfig,
) -> Result<ContextInput, RunError> {
    Ok(match config.context.kind {
        ContextKind::Sentence => build_sentence_context(doc, position)?,
        ContextKind::Window => build_window_context(doc, position, config.context.window_radius)?,
        ContextKind::Document => build_document_context(doc, position)?,
    })
}

fn predict_sentence(
    doc: &Document,
    position: usize,
    config: &ExperimentConfig,
    pipeline: Pipeline,
    backend: &BackendHandle,
    retrieval: Option<&Retrieval<'_>>,
    counter: &dyn TokenCounter,
) -> Result<PredictionRecord, RunError> {
    let ctx = build_context(doc, position, config)?;

    let retrieved: Vec<(&KbChunk, f64)> = match (config.rag, retrieval) {
        (RagMode::Early, Some(retrieval)) => {
            let family = match pipeline {
                Pipeline::Scoring => QueryFamily::Encoder,
                Pipeline::Completion => QueryFamily::Llm,
            };
            let query = make_query(family, &ctx);
            retrieval.lookup(&query, config.top_k)?
        }
        (RagMode::Early, None) => {
            return Err(RunError::Invalid("rag=early requires a KB index".into()))
        }
        (RagMode::None, _) => Vec::new(),
    };
    let kb_texts: Vec<String> = retrieved.iter().map(|(c, _)| c.text.clone()).collect();

    let assembled =
        assemble_budgeted_input(&ctx, &kb_texts, counter, config.total_budget, config.kb_budget)?;

    let target = &doc.sentences[position];
    match pipeline {
        Pipeline::Scoring => {
            let input = assembled.fused_text();
            let probs = match backend {
                BackendHandle::Builtin { model } => mock_probabilities(model, &input),
                BackendHandle::Http { client, endpoint } => client.score(endpoint, &input)?,
            };
            let threshold = config.threshold.expect("validated scoring config");
            let labels = threshold_predictions(&probs, threshold)?;
            Ok(PredictionRecord {
                text_id: target.text_id.clone(),
                sent_id: target.sent_id,
                labels,
                probs: Some(probs),
                raw_output: None,
                parse_failed: false,
            })
        }
        Pipeline::Completion => {
            let chunks: Vec<KbChunk> = retrieved.iter().map(|(c, _)| (*c).clone()).collect();
            let rendering =
                render_prompt(&assembled, (!chunks.is_empty()).then_some(chunks.as_slice()))?;
            let params = config.decode.expect("validated completion config");
            let raw = match backend {
                BackendHandle::Builtin { model } => mock_completion(model, &rendering.text),
                BackendHandle::Http { client, endpoint } => {
                    client.complete(endpoint, &rendering.text, &params)?
                }
            };
            let parsed = parse_llm_output(&raw);
            Ok(PredictionRecord {
                text_id: target.text_id.clone(),
                sent_id: target.sent_id,
                labels: parsed.labels,
                probs: None,
                raw_output: Some(raw),
                parse_failed: parsed.parse_failed,
            })
        }
    }
}

/// Execute one run over every sentence of the corpus. Sentences are
/// processed in parallel and joined by `(text_id, sent_id)`, so the output
/// is order-independent; any sentence failure aborts the run (a prediction
/// file is complete or absent, never partial).
pub fn run_experiment(
    config: &ExperimentConfig,
    corpus: &[SentenceRecord],
    retrieval: Option<&Retrieval<'_>>,
) -> Result<(Vec<PredictionRecord>, RunRecord), RunError> {
    config.validate()?;
    let pipeline = config.pipeline()?;
    if config.rag == RagMode::Early && retrieval.is_none() {
        return Err(RunError::Invalid("rag=early requires a KB index".into()));
    }

    let started = Utc::now();
    let documents = group_documents(corpus)?;
    let backend = BackendHandle::for_config(config);
    let counter = WhitespaceCounter;

    let work: Vec<(usize, usize)> = documents
        .iter()
        .enumerate()
        .flat_map(|(d, doc)| (0..doc.sentences.len()).map(move |p| (d, p)))
        .collect();

    let mut records: Vec<PredictionRecord> = work
        .par_iter()
        .map(|&(d, p)| {
            predict_sentence(&documents[d], p, config, pipeline, &backend, retrieval, &counter)
        })
        .collect::<Result<_, _>>()?;
    records.sort_by(|a, b| (&a.text_id, a.sent_id).cmp(&(&b.text_id, b.sent_id)));

    let parse_failures = records.iter().filter(|r| r.parse_failed).count();
    let record = RunRecord {
        key: config.run_key(),
        config_hash: config.digest(kb_digest_for(config)?.as_deref()),
        started,
        finished: Utc::now(),
        sentences: records.len(),
        parse_failures,
        retries: backend.retries(),
    };
    Ok((records, record))
}

fn kb_digest_for(config: &ExperimentConfig) -> Result<Option<String>, RunError> {
    match (&config.rag, &config.kb_path) {
        (RagMode::Early, Some(path)) => Ok(Some(kb_digest(path)?)),
        _ => Ok(None),
    }
}

/// Run one config and persist its prediction file into the store, unless a
/// cached file with the same config hash already passes its integrity
/// check (then the backend is not called at all). Returns the prediction
/// file path and whether it was a cache hit.
pub fn run_and_persist(
    config: &ExperimentConfig,
    corpus: &[SentenceRecord],
    retrieval: Option<&Retrieval<'_>>,
    store: &mut ResultsStore,
    force: bool,
) -> Result<(PathBuf, bool), RunError> {
    config.validate()?;
    let hash = config.digest(kb_digest_for(config)?.as_deref());
    if !force {
        if let Some(path) = cache_lookup(&hash, store) {
            return Ok((path, true));
        }
    }

    let (records, mut record) = run_experiment(config, corpus, retrieval)?;
    record.config_hash = hash.clone();

    let key = config.run_key();
    let path = store.root().join(format!("{}.jsonl", key.file_stem()));
    write_predictions(&path, &records)?;
    let digest = file_digest(&path)?;
    store.record_run(&key, config.split, &path, &hash, &digest)?;

    let record_path = store.root().join(format!("{}.run.json", key.file_stem()));
    std::fs::write(&record_path, serde_json::to_string_pretty(&record).expect("record serializes"))
        .map_err(|e| RunError::Io { path: record_path.display().to_string(), source: e })?;

    Ok((path, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabelSet, ValueLabel};
    use crate::knowledge::{build_index, bundled_kb, HashEmbedding};
    use crate::modelio::{BackendSpec, DecodeParams};
    use crate::runner::config::DEFAULT_THRESHOLD;
    use crate::{ContextCondition, Split};

    pub(crate) fn fixture_corpus(docs: usize, sentences_per_doc: usize) -> Vec<SentenceRecord> {
        let mut records = Vec::new();
        for d in 0..docs {
            for s in 0..sentences_per_doc {
                let gold: LabelSet = ValueLabel::ALL
                    .into_iter()
                    .filter(|l| (d * 31 + s * 7 + l.index()) % 17 == 0)
                    .collect();
                records.push(SentenceRecord {
                    text_id: format!("D{d:03}"),
                    sent_id: s as u32,
                    text: format!("document {d} sentence {s} talks about topic {}", (d + s) % 5),
                    gold: Some(gold),
                });
            }
        }
        records
    }

    fn mock_config(rag: RagMode) -> ExperimentConfig {
        let mut config = ExperimentConfig::new(
            BackendSpec::mock("mock-encoder"),
            ContextCondition::document(),
            rag,
            Split::Test,
        );
        config.threshold = Some(DEFAULT_THRESHOLD);
        config
    }

    #[test]
    fn mock_run_covers_every_sentence() {
        let corpus = fixture_corpus(2, 5);
        let config = mock_config(RagMode::None);
        let (records, record) = run_experiment(&config, &corpus, None).unwrap();
        assert_eq!(records.len(), 10);
        assert_eq!(record.sentences, 10);
        assert_eq!(record.parse_failures, 0);
        assert!(records.iter().all(|r| r.probs.is_some()));
    }

    #[test]
    fn deterministic_backend_reproduces_identical_records() {
        let corpus = fixture_corpus(2, 4);
        let index = build_index(bundled_kb(), &HashEmbedding::new(64, 0)).unwrap();
        let provider = HashEmbedding::new(64, 0);
        let retrieval = Retrieval::new(&index, &provider);

        let mut config = mock_config(RagMode::Early);
        config.kb_path = Some(PathBuf::from("assets/moral_kb.jsonl"));
        // The digest needs a readable KB file; point at the bundled one.
        let dir = tempfile::tempdir().unwrap();
        let kb_path = dir.path().join("kb.jsonl");
        std::fs::write(&kb_path, crate::knowledge::BUNDLED_KB).unwrap();
        config.kb_path = Some(kb_path);

        let (a, _) = run_experiment(&config, &corpus, Some(&retrieval)).unwrap();
        let (b, _) = run_experiment(&config, &corpus, Some(&retrieval)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn llm_pipeline_records_raw_output() {
        let corpus = fixture_corpus(1, 4);
        let mut config = ExperimentConfig::new(
            BackendSpec { family: crate::BackendFamily::Llm, endpoint: "builtin".into(), model: "mock-llm".into() },
            ContextCondition::sentence(),
            RagMode::None,
            Split::Test,
        );
        config.decode = Some(DecodeParams::default());
        let (records, _) = run_experiment(&config, &corpus, None).unwrap();
        assert!(records.iter().all(|r| r.raw_output.is_some()));
        assert!(records.iter().all(|r| r.probs.is_none()));
    }

    #[test]
    fn rag_without_index_is_rejected() {
        let corpus = fixture_corpus(1, 2);
        let mut config = mock_config(RagMode::Early);
        config.kb_path = Some(PathBuf::from("missing.jsonl"));
        assert!(run_experiment(&config, &corpus, None).is_err());
    }

    #[test]
    fn cache_reuses_identical_config_and_misses_on_seed_change() {
        let corpus = fixture_corpus(2, 3);
        let dir = tempfile::tempdir().unwrap();
        let mut store = ResultsStore::open(dir.path()).unwrap();

        let config = mock_config(RagMode::None);
        let (path1, hit1) = run_and_persist(&config, &corpus, None, &mut store, false).unwrap();
        assert!(!hit1);
        let (path2, hit2) = run_and_persist(&config, &corpus, None, &mut store, false).unwrap();
        assert!(hit2);
        assert_eq!(path1, path2);

        let mut reseeded = config.clone();
        reseeded.seed = Some(99);
        let (_, hit3) = run_and_persist(&reseeded, &corpus, None, &mut store, false).unwrap();
        assert!(!hit3, "a config differing only in seed is a cache miss");
    }
}
