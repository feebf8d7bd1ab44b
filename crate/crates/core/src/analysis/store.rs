//! The results store: a directory of prediction files and metrics reports
//! plus a JSON manifest mapping run keys to file paths. No database, so
//! artifacts stay diffable and auditable.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Split;
use crate::evaluation::{read_predictions, MetricsReport, PredictionRecord};

use super::{AnalysisError, RunKey};

/// A stored metrics report together with the run it evaluates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub key: RunKey,
    pub split: Split,
    pub metrics: MetricsReport,
}

/// One run in the manifest. Paths are relative to the store root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub key: RunKey,
    pub split: Split,
    pub predictions: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    /// SHA-256 of the prediction file bytes, for integrity checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub runs: Vec<ManifestEntry>,
}

const MANIFEST_NAME: &str = "manifest.json";

/// Directory-backed store of runs.
#[derive(Debug)]
pub struct ResultsStore {
    root: PathBuf,
    manifest: Manifest,
}

impl ResultsStore {
    /// Open (or initialize) a store rooted at `root`.
    pub fn open(root: &Path) -> Result<ResultsStore, AnalysisError> {
        fs::create_dir_all(root).map_err(|e| AnalysisError::Io {
            path: root.display().to_string(),
            source: e,
        })?;
        let manifest_path = root.join(MANIFEST_NAME);
        let manifest = if manifest_path.exists() {
            let raw = fs::read_to_string(&manifest_path).map_err(|e| AnalysisError::Io {
                path: manifest_path.display().to_string(),
                source: e,
            })?;
            serde_json::from_str(&raw).map_err(|e| AnalysisError::Format {
                path: manifest_path.display().to_string(),
                reason: e.to_string(),
            })?
        } else {
            Manifest::default()
        };
        Ok(ResultsStore { root: root.to_path_buf(), manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.manifest.runs
    }

    /// Exact key lookup.
    pub fn find(&self, key: &RunKey) -> Option<&ManifestEntry> {
        self.manifest.runs.iter().find(|e| &e.key == key)
    }

    /// All entries in the same (model, context, rag) group; a key with a
    /// seed narrows the match to that run.
    pub fn matching(&self, key: &RunKey) -> Vec<&ManifestEntry> {
        self.manifest
            .runs
            .iter()
            .filter(|e| {
                e.key.same_group(key) && (key.seed.is_none() || e.key.seed == key.seed)
            })
            .collect()
    }

    fn save_manifest(&self) -> Result<(), AnalysisError> {
        let path = self.root.join(MANIFEST_NAME);
        let raw = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&path, raw).map_err(|e| AnalysisError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned()
    }

    /// Register (or replace) a run's prediction file.
    pub fn record_run(
        &mut self,
        key: &RunKey,
        split: Split,
        predictions: &Path,
        config_hash: &str,
        sha256: &str,
    ) -> Result<(), AnalysisError> {
        let entry = ManifestEntry {
            key: key.clone(),
            split,
            predictions: self.relative(predictions),
            report: None,
            config_hash: Some(config_hash.to_string()),
            sha256: Some(sha256.to_string()),
        };
        self.manifest.runs.retain(|e| &e.key != key);
        self.manifest.runs.push(entry);
        self.save_manifest()
    }

    /// Write a metrics report next to the predictions and point the
    /// manifest at it.
    pub fn save_report(&mut self, key: &RunKey, report: &RunReport) -> Result<(), AnalysisError> {
        let entry_pos = self
            .manifest
            .runs
            .iter()
            .position(|e| &e.key == key)
            .ok_or_else(|| AnalysisError::MissingRun(key.to_string()))?;
        let name = format!("{}.report.json", key.file_stem());
        let path = self.root.join(&name);
        let raw = serde_json::to_string_pretty(report).expect("report serializes");
        fs::write(&path, raw).map_err(|e| AnalysisError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        self.manifest.runs[entry_pos].report = Some(name);
        self.save_manifest()
    }

    pub fn predictions_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.predictions)
    }

    pub fn load_predictions(&self, entry: &ManifestEntry) -> Result<Vec<PredictionRecord>, AnalysisError> {
        Ok(read_predictions(&self.predictions_path(entry))?)
    }

    pub fn load_report(&self, entry: &ManifestEntry) -> Result<RunReport, AnalysisError> {
        let name = entry
            .report
            .as_ref()
            .ok_or_else(|| AnalysisError::MissingReport(entry.key.to_string()))?;
        let path = self.root.join(name);
        let raw = fs::read_to_string(&path).map_err(|e| AnalysisError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&raw).map_err(|e| AnalysisError::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// SHA-256 of a file's bytes, hex-encoded.
pub fn file_digest(path: &Path) -> Result<String, AnalysisError> {
    let bytes = fs::read(path).map_err(|e| AnalysisError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Look up a cached prediction file by config hash. Returns the path only
/// when the hash matches and the file passes its integrity check; a corrupt
/// artifact is treated as a miss with a warning.
pub fn cache_lookup(config_hash: &str, store: &ResultsStore) -> Option<PathBuf> {
    let entry = store
        .entries()
        .iter()
        .find(|e| e.config_hash.as_deref() == Some(config_hash))?;
    let path = store.predictions_path(entry);
    let expected = entry.sha256.as_deref()?;
    match file_digest(&path) {
        Ok(actual) if actual == expected => Some(path),
        Ok(_) => {
            log::warn!("cache entry {} failed its integrity check; treating as miss", entry.key);
            None
        }
        Err(e) => {
            log::warn!("cache entry {} is unreadable ({e}); treating as miss", entry.key);
            None
        }
    }
}
