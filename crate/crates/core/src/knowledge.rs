//! Moral knowledge base: loading, embedding, and exact top-k retrieval.
//!
//! The KB is a small set of curated chunks (value definitions, annotation
//! guidelines, theory contrasts). Chunks are embedded, L2-normalized, and
//! searched with an exhaustive flat scan: exactness is the contract.
//! Retrieval is label-agnostic; chunk value tags are metadata for logging,
//! never a retrieval filter.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::context::ContextInput;
use crate::corpus::ValueLabel;

/// Reconstructed KB shipped with the harness: 19 definition chunks (one per
/// value), 25 guideline chunks, 14 theory chunks.
pub const BUNDLED_KB: &str = include_str!("../assets/moral_kb.jsonl");

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("record {record}: unknown source_type {value:?} (expected definition, guidelines, or theory)")]
    UnknownSourceType { record: String, value: String },
    #[error("duplicate chunk id {id:?}")]
    DuplicateId { id: String },
    #[error("record {record}: empty text")]
    EmptyText { record: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("failed to read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot index an empty chunk list")]
    EmptyKb,
    #[error("embedding failed for {record}: {reason}")]
    EmbeddingFailed { record: String, reason: String },
    #[error("cannot normalize a zero-length or zero-norm vector")]
    ZeroNorm,
    #[error("dimension mismatch: index has {index}, vector has {vector}")]
    DimensionMismatch { index: usize, vector: usize },
    #[error("embedding service error: {0}")]
    Service(String),
}

/// Source category of a KB chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceType {
    Definition,
    Guidelines,
    Theory,
}

impl SourceType {
    pub const fn as_str(self) -> &'static str {
        match self {
            SourceType::Definition => "definition",
            SourceType::Guidelines => "guidelines",
            SourceType::Theory => "theory",
        }
    }
}

/// One moral-knowledge snippet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbChunk {
    #[serde(rename = "id")]
    pub chunk_id: String,
    pub source_type: SourceType,
    pub text: String,
    #[serde(rename = "values", default, skip_serializing_if = "Option::is_none")]
    pub value_tags: Option<Vec<ValueLabel>>,
}

/// A fixed-dimension real vector with L2 norm helpers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    components: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> EmbeddingVector {
        EmbeddingVector { components }
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Scale to unit norm.
    pub fn normalized(&self) -> Result<EmbeddingVector, KnowledgeError> {
        let norm = self.norm();
        if self.components.is_empty() || norm == 0.0 || !norm.is_finite() {
            return Err(KnowledgeError::ZeroNorm);
        }
        Ok(EmbeddingVector {
            components: self.components.iter().map(|x| x / norm).collect(),
        })
    }

    /// Euclidean distance (unsquared).
    pub fn distance(&self, other: &[f64]) -> f64 {
        self.components
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Deterministic text embedding: same text, same vector.
pub trait EmbeddingProvider: Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, KnowledgeError>;
}

/// Offline stand-in for a sentence-embedding model: hashes the text into a
/// seeded pseudo-random unit vector. Deterministic, so retrieval over it is
/// fully reproducible without any embedding service.
#[derive(Debug, Clone)]
pub struct HashEmbedding {
    dimension: usize,
    seed: u64,
}

impl HashEmbedding {
    pub fn new(dimension: usize, seed: u64) -> HashEmbedding {
        HashEmbedding { dimension, seed }
    }
}

impl Default for HashEmbedding {
    fn default() -> HashEmbedding {
        HashEmbedding::new(384, 0)
    }
}

impl EmbeddingProvider for HashEmbedding {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, KnowledgeError> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(text.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        let mut components: Vec<f64> =
            (0..self.dimension).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        if components.iter().all(|x| *x == 0.0) {
            components[0] = 1.0;
        }
        EmbeddingVector::new(components).normalized()
    }
}

/// Client for a JSON-over-HTTP embedding service. The dimension is
/// advertised at handshake (`GET {endpoint}/dimension` returning
/// `{"dimension": d}`); texts embed via `POST {endpoint}/embed` with
/// `{"text": ...}` returning `{"vector": [d floats]}`.
pub struct RemoteEmbedding {
    endpoint: String,
    dimension: usize,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedding {
    /// Connect and perform the dimension handshake.
    pub fn connect(endpoint: &str) -> Result<RemoteEmbedding, KnowledgeError> {
        #[derive(Deserialize)]
        struct Handshake {
            dimension: usize,
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(60))
            .build()
            .map_err(|e| KnowledgeError::Service(e.to_string()))?;
        let endpoint = endpoint.trim_end_matches('/').to_string();
        let handshake: Handshake = client
            .get(format!("{endpoint}/dimension"))
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| KnowledgeError::Service(e.to_string()))?
            .json()
            .map_err(|e| KnowledgeError::Service(e.to_string()))?;
        Ok(RemoteEmbedding { endpoint, dimension: handshake.dimension, client })
    }
}

impl EmbeddingProvider for RemoteEmbedding {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, KnowledgeError> {
        #[derive(Serialize)]
        struct Request<'a> {
            text: &'a str,
        }
        #[derive(Deserialize)]
        struct Response {
            vector: Vec<f64>,
        }
        let response: Response = self
            .client
            .post(format!("{}/embed", self.endpoint))
            .json(&Request { text })
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| KnowledgeError::Service(e.to_string()))?
            .json()
            .map_err(|e| KnowledgeError::Service(e.to_string()))?;
        if response.vector.len() != self.dimension {
            return Err(KnowledgeError::DimensionMismatch {
                index: self.dimension,
                vector: response.vector.len(),
            });
        }
        Ok(EmbeddingVector::new(response.vector))
    }
}

/// Exact flat index over normalized chunk embeddings. Row `i` of `vectors`
/// corresponds to `chunks[i]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KbIndex {
    chunks: Vec<KbChunk>,
    vectors: Vec<Vec<f64>>,
    dimension: usize,
}

impl KbIndex {
    /// Build an index from pre-computed vectors; rows are normalized here.
    pub fn from_parts(chunks: Vec<KbChunk>, vectors: Vec<Vec<f64>>) -> Result<KbIndex, KnowledgeError> {
        if chunks.is_empty() {
            return Err(KnowledgeError::EmptyKb);
        }
        assert_eq!(chunks.len(), vectors.len(), "one vector per chunk");
        let dimension = vectors[0].len();
        let normalized = vectors
            .into_iter()
            .map(|v| {
                if v.len() != dimension {
                    return Err(KnowledgeError::DimensionMismatch { index: dimension, vector: v.len() });
                }
                Ok(EmbeddingVector::new(v).normalized()?.components)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(KbIndex { chunks, vectors: normalized, dimension })
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn chunks(&self) -> &[KbChunk] {
        &self.chunks
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Exhaustive scan: the `k` chunks nearest to `query` by Euclidean
    /// distance, ascending; ties break by ascending chunk id. If `k`
    /// exceeds the KB size, every chunk is returned, sorted.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<(usize, f64)>, KnowledgeError> {
        if query.dimension() != self.dimension {
            return Err(KnowledgeError::DimensionMismatch {
                index: self.dimension,
                vector: query.dimension(),
            });
        }
        let mut scored: Vec<(usize, f64)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, row)| (i, query.distance(row)))
            .collect();
        scored.sort_by(|(i, a), (j, b)| {
            a.total_cmp(b).then_with(|| self.chunks[*i].chunk_id.cmp(&self.chunks[*j].chunk_id))
        });
        scored.truncate(k);
        Ok(scored)
    }
}

fn parse_kb_lines(lines: impl Iterator<Item = (usize, String)>) -> Result<Vec<KbChunk>, KnowledgeError> {
    #[derive(Deserialize)]
    struct RawChunk {
        id: String,
        source_type: String,
        text: String,
        #[serde(default)]
        values: Option<Vec<ValueLabel>>,
    }

    let mut chunks = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawChunk = serde_json::from_str(&line)
            .map_err(|e| KnowledgeError::Parse { line: line_no, reason: e.to_string() })?;
        let source_type = match raw.source_type.as_str() {
            "definition" => SourceType::Definition,
            "guidelines" => SourceType::Guidelines,
            "theory" => SourceType::Theory,
            other => {
                return Err(KnowledgeError::UnknownSourceType {
                    record: raw.id,
                    value: other.to_string(),
                })
            }
        };
        if raw.text.trim().is_empty() {
            return Err(KnowledgeError::EmptyText { record: raw.id });
        }
        if !seen.insert(raw.id.clone()) {
            return Err(KnowledgeError::DuplicateId { id: raw.id });
        }
        chunks.push(KbChunk {
            chunk_id: raw.id,
            source_type,
            text: raw.text,
            value_tags: raw.values,
        });
    }
    Ok(chunks)
}

/// Load KB chunks from a JSON-lines file, in file order.
pub fn load_kb(path: &Path) -> Result<Vec<KbChunk>, KnowledgeError> {
    let file = File::open(path)
        .map_err(|e| KnowledgeError::Io { path: path.display().to_string(), source: e })?;
    let lines = BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.unwrap_or_default()));
    parse_kb_lines(lines)
}

/// Parse the KB bundled into the crate.
pub fn bundled_kb() -> Vec<KbChunk> {
    parse_kb_lines(BUNDLED_KB.lines().enumerate().map(|(i, l)| (i + 1, l.to_string())))
        .expect("bundled KB is well-formed")
}

/// Embed and normalize every chunk; no partial index is ever produced.
pub fn build_index(
    chunks: Vec<KbChunk>,
    provider: &dyn EmbeddingProvider,
) -> Result<KbIndex, KnowledgeError> {
    if chunks.is_empty() {
        return Err(KnowledgeError::EmptyKb);
    }
    let mut vectors = Vec::with_capacity(chunks.len());
    for chunk in &chunks {
        let vector = provider.embed(&chunk.text).map_err(|e| KnowledgeError::EmbeddingFailed {
            record: chunk.chunk_id.clone(),
            reason: e.to_string(),
        })?;
        vectors.push(vector.normalized()?.components);
    }
    let dimension = provider.dimension();
    for v in &vectors {
        if v.len() != dimension {
            return Err(KnowledgeError::DimensionMismatch { index: dimension, vector: v.len() });
        }
    }
    Ok(KbIndex { chunks, vectors, dimension })
}

/// Which model family a retrieval query is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryFamily {
    /// Scoring encoders query with the whole constructed input.
    Encoder,
    /// Zero-shot LLMs query with the target sentence alone.
    Llm,
}

/// Construct the retrieval query for a context input.
pub fn make_query(family: QueryFamily, ctx: &ContextInput) -> String {
    match family {
        QueryFamily::Encoder => ctx.context_text(),
        QueryFamily::Llm => ctx.target.text.clone(),
    }
}

/// Top-k retrieval over the index for a text query.
pub fn retrieve<'a>(
    index: &'a KbIndex,
    query: &str,
    provider: &dyn EmbeddingProvider,
    k: usize,
) -> Result<Vec<(&'a KbChunk, f64)>, KnowledgeError> {
    let query_vec = provider.embed(query)?.normalized()?;
    let hits = index.search(&query_vec, k)?;
    Ok(hits.into_iter().map(|(i, d)| (&index.chunks[i], d)).collect())
}

/// SHA-256 digest of a KB file's bytes, for config hashing.
pub fn kb_digest(path: &Path) -> Result<String, KnowledgeError> {
    let bytes = std::fs::read(path)
        .map_err(|e| KnowledgeError::Io { path: path.display().to_string(), source: e })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
