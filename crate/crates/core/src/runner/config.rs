//! Experiment configuration: single runs and declarative grids.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{RagMode, RunKey};
use crate::context::{ContextCondition, ContextKind, DEFAULT_WINDOW_RADIUS};
use crate::corpus::Split;
use crate::modelio::{BackendFamily, BackendSpec, DecodeParams, PROMPT_HEADER};

use super::RunError;

pub const DEFAULT_TOP_K: usize = 2;
pub const DEFAULT_KB_BUDGET: usize = 200;
pub const DEFAULT_TOTAL_BUDGET: usize = 1024;
pub const DEFAULT_THRESHOLD: f64 = 0.18;
/// Default seeds for supervised (encoder-family) runs.
pub const DEFAULT_SEEDS: [u64; 3] = [7, 42, 1701];

/// Everything one run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub backend: BackendSpec,
    pub context: ContextCondition,
    pub rag: RagMode,
    pub top_k: usize,
    pub kb_budget: usize,
    pub total_budget: usize,
    /// Decision threshold; required for scoring pipelines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Decoding parameters; required for completion pipelines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decode: Option<DecodeParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kb_path: Option<PathBuf>,
}

/// Which per-sentence pipeline a config drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    /// Score 19 probabilities, then threshold.
    Scoring,
    /// Render a prompt, complete, then parse.
    Completion,
}

impl ExperimentConfig {
    pub fn new(backend: BackendSpec, context: ContextCondition, rag: RagMode, split: Split) -> ExperimentConfig {
        let (threshold, decode) = match backend.family {
            BackendFamily::Encoder => (Some(DEFAULT_THRESHOLD), None),
            BackendFamily::Llm => (None, Some(DecodeParams::default())),
            BackendFamily::Mock => (Some(DEFAULT_THRESHOLD), None),
        };
        ExperimentConfig {
            backend,
            context,
            rag,
            top_k: DEFAULT_TOP_K,
            kb_budget: DEFAULT_KB_BUDGET,
            total_budget: DEFAULT_TOTAL_BUDGET,
            threshold,
            decode,
            seed: None,
            split,
            kb_path: None,
        }
    }

    /// The pipeline this config drives. Encoder backends score; llm
    /// backends complete; the mock family follows whichever parameters the
    /// config carries (threshold means scoring).
    pub fn pipeline(&self) -> Result<Pipeline, RunError> {
        match self.backend.family {
            BackendFamily::Encoder => Ok(Pipeline::Scoring),
            BackendFamily::Llm => Ok(Pipeline::Completion),
            BackendFamily::Mock => {
                if self.threshold.is_some() {
                    Ok(Pipeline::Scoring)
                } else if self.decode.is_some() {
                    Ok(Pipeline::Completion)
                } else {
                    Err(RunError::Invalid(
                        "mock backend needs a threshold (scoring) or decode params (completion)"
                            .into(),
                    ))
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.rag == RagMode::Early && self.kb_path.is_none() {
            return Err(RunError::Invalid("rag=early requires a KB path".into()));
        }
        match self.pipeline()? {
            Pipeline::Scoring if self.threshold.is_none() => {
                Err(RunError::Invalid("scoring configs carry a threshold".into()))
            }
            Pipeline::Completion if self.decode.is_none() => {
                Err(RunError::Invalid("completion configs carry decode params".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn run_key(&self) -> RunKey {
        RunKey::new(&self.backend.model, self.context.kind, self.rag, self.seed)
    }

    /// Digest of every config field plus the KB file digest (when
    /// retrieval is on) and the prompt template digest, so silent KB or
    /// template edits invalidate caches.
    pub fn digest(&self, kb_digest: Option<&str>) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_string(self).expect("config serializes"));
        hasher.update([0]);
        hasher.update(kb_digest.unwrap_or(""));
        hasher.update([0]);
        hasher.update(PROMPT_HEADER.as_bytes());
        hex::encode(hasher.finalize())
    }
}

/// One model line in a grid file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridModel {
    pub name: String,
    pub family: BackendFamily,
    /// Service address, or "builtin" for the mock backend.
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    /// Seeds for this model; encoders default to 7/42/1701, other
    /// families to a single unseeded run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
}

fn default_endpoint() -> String {
    crate::modelio::BUILTIN_ENDPOINT.to_string()
}

fn default_contexts() -> Vec<ContextKind> {
    vec![ContextKind::Sentence, ContextKind::Window, ContextKind::Document]
}

fn default_rag() -> Vec<RagMode> {
    vec![RagMode::None]
}

fn default_split() -> Split {
    Split::Test
}

/// Declarative model x context x rag (x seed) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub models: Vec<GridModel>,
    #[serde(default = "default_contexts")]
    pub contexts: Vec<ContextKind>,
    #[serde(default = "default_rag")]
    pub rag: Vec<RagMode>,
    #[serde(default = "default_split")]
    pub split: Split,
    #[serde(default = "default_window_radius")]
    pub window_radius: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_kb_budget")]
    pub kb_budget: usize,
    #[serde(default = "default_total_budget")]
    pub total_budget: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub decode: Option<DecodeParams>,
    /// KB file path; required when any rag setting is `early`.
    #[serde(default)]
    pub kb: Option<PathBuf>,
    /// Corpus file per split.
    #[serde(default)]
    pub corpus: Option<CorpusPaths>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub validation: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
}

impl CorpusPaths {
    pub fn for_split(&self, split: Split) -> Option<&PathBuf> {
        match split {
            Split::Train => self.train.as_ref(),
            Split::Validation => self.validation.as_ref(),
            Split::Test => self.test.as_ref(),
        }
    }
}

fn default_window_radius() -> usize {
    DEFAULT_WINDOW_RADIUS
}
fn default_top_k() -> usize {
    DEFAULT_TOP_K
}
fn default_kb_budget() -> usize {
    DEFAULT_KB_BUDGET
}
fn default_total_budget() -> usize {
    DEFAULT_TOTAL_BUDGET
}
fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

impl GridConfig {
    /// Parse a TOML grid file. Unknown fields are errors naming the field.
    pub fn from_path(path: &Path) -> Result<GridConfig, RunError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| RunError::Io { path: path.display().to_string(), source: e })?;
        toml::from_str(&raw).map_err(|e| RunError::Invalid(e.to_string()))
    }
}

/// Cartesian expansion of the grid: models x contexts x rag x seeds, in
/// file order. Deterministic and duplicate-free.
pub fn expand_grid(grid: &GridConfig) -> Result<Vec<ExperimentConfig>, RunError> {
    if grid.models.is_empty() {
        return Err(RunError::Invalid("grid lists no models".into()));
    }
    if grid.contexts.is_empty() {
        return Err(RunError::Invalid("grid lists no contexts".into()));
    }
    if grid.rag.is_empty() {
        return Err(RunError::Invalid("grid lists no rag settings".into()));
    }
    if grid.rag.contains(&RagMode::Early) && grid.kb.is_none() {
        return Err(RunError::Invalid("grid uses rag=early but names no kb file".into()));
    }

    let mut configs = Vec::new();
    for model in &grid.models {
        let seeds: Vec<Option<u64>> = match (&model.seeds, model.family) {
            (Some(listed), _) => listed.iter().copied().map(Some).collect(),
            (None, BackendFamily::Encoder) => DEFAULT_SEEDS.iter().copied().map(Some).collect(),
            (None, _) => vec![None],
        };
        for &context in &grid.contexts {
            let condition = ContextCondition { kind: context, window_radius: grid.window_radius };
            for &rag in &grid.rag {
                for &seed in &seeds {
                    let backend = BackendSpec {
                        family: model.family,
                        endpoint: model.endpoint.clone(),
                        model: model.name.clone(),
                    };
                    let (threshold, decode) = match model.family {
                        BackendFamily::Llm => {
                            (None, Some(grid.decode.unwrap_or_default()))
                        }
                        _ => (Some(grid.threshold), None),
                    };
                    let config = ExperimentConfig {
                        backend,
                        context: condition,
                        rag,
                        top_k: grid.top_k,
                        kb_budget: grid.kb_budget,
                        total_budget: grid.total_budget,
                        threshold,
                        decode,
                        seed,
                        split: grid.split,
                        kb_path: if rag == RagMode::Early { grid.kb.clone() } else { None },
                    };
                    config.validate()?;
                    configs.push(config);
                }
            }
        }
    }
    Ok(configs)
}
