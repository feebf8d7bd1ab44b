//! Multi-label evaluation: per-value and aggregate metrics, threshold
//! selection, and paired significance tests over prediction files.

mod metrics;
mod significance;

pub use metrics::{
    compute_metrics, default_threshold_grid, select_threshold, LabelPerformance, MetricsReport,
    ScoredSentence,
};
pub use significance::{
    paired_bootstrap, paired_permutation, MetricSelector, PairedTestResult,
    DEFAULT_BOOTSTRAP_ITERATIONS, DEFAULT_PERMUTATION_ITERATIONS,
};

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{LabelSet, SentenceRecord, LABEL_COUNT};
use crate::modelio::ProbabilityVector;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction coverage mismatch: {0}")]
    Coverage(String),
    #[error("gold sentence ({text_id}, {sent_id}) has no labels")]
    MissingGold { text_id: String, sent_id: u32 },
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error(transparent)]
    Threshold(#[from] crate::modelio::ModelIoError),
    #[error("failed to read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// One sentence's prediction, as stored in prediction files (JSON lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub text_id: String,
    pub sent_id: u32,
    pub labels: LabelSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<ProbabilityVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub parse_failed: bool,
}

impl PredictionRecord {
    pub fn key(&self) -> (String, u32) {
        (self.text_id.clone(), self.sent_id)
    }
}

/// Read a prediction file (one JSON object per line).
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, EvalError> {
    let file = File::open(path)
        .map_err(|e| EvalError::Io { path: path.display().to_string(), source: e })?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| EvalError::Io { path: path.display().to_string(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord = serde_json::from_str(&line)
            .map_err(|e| EvalError::Parse { line: i + 1, reason: e.to_string() })?;
        records.push(record);
    }
    Ok(records)
}

/// Write a prediction file sorted by `(text_id, sent_id)`, one JSON object
/// per line. The sort makes files deterministic however the records were
/// produced.
pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<(), EvalError> {
    let mut sorted: Vec<&PredictionRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.text_id, a.sent_id).cmp(&(&b.text_id, b.sent_id)));
    let mut out = Vec::new();
    for record in sorted {
        serde_json::to_writer(&mut out, record)
            .map_err(|e| EvalError::Parse { line: 0, reason: e.to_string() })?;
        out.push(b'\n');
    }
    let mut file = File::create(path)
        .map_err(|e| EvalError::Io { path: path.display().to_string(), source: e })?;
    file.write_all(&out)
        .map_err(|e| EvalError::Io { path: path.display().to_string(), source: e })
}

/// Pair predictions with gold label sets by `(text_id, sent_id)`, requiring
/// an exact bijection. Returns pairs in gold order.
pub(crate) fn align_to_gold(
    preds: &[PredictionRecord],
    gold: &[SentenceRecord],
) -> Result<Vec<(LabelSet, LabelSet)>, EvalError> {
    use std::collections::HashMap;

    let mut by_key: HashMap<(&str, u32), &PredictionRecord> = HashMap::new();
    let mut duplicates: Vec<String> = Vec::new();
    for pred in preds {
        if by_key.insert((pred.text_id.as_str(), pred.sent_id), pred).is_some() {
            duplicates.push(format!("({}, {})", pred.text_id, pred.sent_id));
        }
    }
    if !duplicates.is_empty() {
        return Err(EvalError::Coverage(format!("duplicate predictions: {}", list(&duplicates))));
    }

    let mut pairs = Vec::with_capacity(gold.len());
    let mut missing: Vec<String> = Vec::new();
    for sentence in gold {
        let gold_labels = sentence.gold.ok_or_else(|| EvalError::MissingGold {
            text_id: sentence.text_id.clone(),
            sent_id: sentence.sent_id,
        })?;
        match by_key.remove(&(sentence.text_id.as_str(), sentence.sent_id)) {
            Some(pred) => pairs.push((pred.labels, gold_labels)),
            None => missing.push(format!("({}, {})", sentence.text_id, sentence.sent_id)),
        }
    }
    let extra: Vec<String> =
        by_key.keys().map(|(t, s)| format!("({t}, {s})")).collect();

    if !missing.is_empty() || !extra.is_empty() {
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!("missing predictions for {}", list(&missing)));
        }
        if !extra.is_empty() {
            parts.push(format!("extra predictions for {}", list(&extra)));
        }
        return Err(EvalError::Coverage(parts.join("; ")));
    }
    Ok(pairs)
}

fn list(items: &[String]) -> String {
    const SHOW: usize = 5;
    let mut sorted = items.to_vec();
    sorted.sort();
    if sorted.len() <= SHOW {
        sorted.join(", ")
    } else {
        format!("{}, and {} more", sorted[..SHOW].join(", "), sorted.len() - SHOW)
    }
}

/// Per-label confusion counts over (predicted, gold) pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

pub(crate) fn confusion_counts<'a>(
    pairs: impl Iterator<Item = &'a (LabelSet, LabelSet)>,
) -> [LabelCounts; LABEL_COUNT] {
    let mut counts = [LabelCounts::default(); LABEL_COUNT];
    for (pred, gold) in pairs {
        let tp = pred.intersection(*gold);
        for (i, slot) in counts.iter_mut().enumerate() {
            let bit = 1u32 << i;
            if tp.bits() & bit != 0 {
                slot.tp += 1;
            } else if pred.bits() & bit != 0 {
                slot.fp += 1;
            } else if gold.bits() & bit != 0 {
                slot.fn_ += 1;
            }
        }
    }
    counts
}

/// Precision, recall, F1 with the zero-division rule: an undefined ratio
/// (zero denominator) scores 0.
pub(crate) fn prf(c: &LabelCounts) -> (f64, f64, f64) {
    let precision = if c.tp + c.fp == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fp) as f64 };
    let recall = if c.tp + c.fn_ == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fn_) as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    (precision, recall, f1)
}

pub(crate) fn macro_f1(counts: &[LabelCounts; LABEL_COUNT]) -> f64 {
    counts.iter().map(|c| prf(c).2).sum::<f64>() / LABEL_COUNT as f64
}

pub(crate) fn micro_f1(counts: &[LabelCounts; LABEL_COUNT]) -> f64 {
    let pooled = counts.iter().fold(LabelCounts::default(), |acc, c| LabelCounts {
        tp: acc.tp + c.tp,
        fp: acc.fp + c.fp,
        fn_: acc.fn_ + c.fn_,
    });
    prf(&pooled).2
}
