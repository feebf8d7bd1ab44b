//! Analysis over saved prediction files: aggregate tables, context and
//! per-value deltas, prediction-change rates, and qualitative bundles.
//!
//! Every artifact here is a pure function of prediction files plus gold, so
//! re-running analysis on unchanged files is byte-identical.

mod store;
mod tables;

pub use store::{cache_lookup, file_digest, Manifest, ManifestEntry, ResultsStore, RunReport};
pub use tables::{DeltaRow, DeltaTable, Table};

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::ContextKind;
use crate::corpus::{LabelSet, SentenceRecord, Split, ValueLabel};
use crate::evaluation::PredictionRecord;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no run found for key {0}")]
    MissingRun(String),
    #[error("run {0} has no metrics report (run `evaluate` first)")]
    MissingReport(String),
    #[error("baseline and comparison use different rag settings ({baseline} vs {comparison})")]
    MismatchedRag { baseline: RagMode, comparison: RagMode },
    #[error("baseline and comparison keys use different models ({baseline} vs {comparison})")]
    MismatchedModel { baseline: String, comparison: String },
    #[error("runs were evaluated on different splits ({0} vs {1})")]
    SplitMismatch(Split, Split),
    #[error("prediction coverage mismatch: {0}")]
    Coverage(String),
    #[error("failed to read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error(transparent)]
    Eval(#[from] crate::evaluation::EvalError),
}

/// Whether retrieved knowledge is fused into the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RagMode {
    None,
    Early,
}

impl RagMode {
    pub const fn as_str(self) -> &'static str {
        match self {
            RagMode::None => "none",
            RagMode::Early => "early",
        }
    }
}

impl fmt::Display for RagMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RagMode {
    type Err = String;

    fn from_str(s: &str) -> Result<RagMode, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(RagMode::None),
            "early" => Ok(RagMode::Early),
            other => Err(format!("unknown rag mode: {other}")),
        }
    }
}

/// Identifies one prediction file in a results store.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunKey {
    pub model: String,
    pub context: ContextKind,
    pub rag: RagMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunKey {
    pub fn new(model: &str, context: ContextKind, rag: RagMode, seed: Option<u64>) -> RunKey {
        RunKey { model: model.to_string(), context, rag, seed }
    }

    /// Same (model, context, rag) group, ignoring the seed.
    pub fn same_group(&self, other: &RunKey) -> bool {
        self.model == other.model && self.context == other.context && self.rag == other.rag
    }

    /// Filesystem-safe name for artifacts of this run.
    pub fn file_stem(&self) -> String {
        let sanitized: String = self
            .model
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '-' })
            .collect();
        match self.seed {
            Some(seed) => format!("{sanitized}_{}_{}_s{}", self.context, self.rag, seed),
            None => format!("{sanitized}_{}_{}", self.context, self.rag),
        }
    }
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "model={},context={},rag={}", self.model, self.context, self.rag)?;
        if let Some(seed) = self.seed {
            write!(f, ",seed={seed}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for RunKey {
    type Err = String;

    fn from_str(s: &str) -> Result<RunKey, String> {
        let mut model = None;
        let mut context = None;
        let mut rag = None;
        let mut seed = None;
        for part in s.split(',') {
            let (field, value) = part
                .split_once('=')
                .ok_or_else(|| format!("expected field=value, got {part:?}"))?;
            match field.trim() {
                "model" => model = Some(value.trim().to_string()),
                "context" => context = Some(value.parse::<ContextKind>()?),
                "rag" => rag = Some(value.parse::<RagMode>()?),
                "seed" => {
                    seed = Some(value.trim().parse::<u64>().map_err(|e| e.to_string())?)
                }
                other => return Err(format!("unknown run key field: {other}")),
            }
        }
        Ok(RunKey {
            model: model.ok_or("run key needs model=")?,
            context: context.ok_or("run key needs context=")?,
            rag: rag.ok_or("run key needs rag=")?,
            seed,
        })
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator), as reported for
/// multi-seed rows.
fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    Some(var.sqrt())
}

fn fmt_score(x: f64) -> String {
    format!("{x:.3}")
}

fn fmt_mean_sd(values: &[f64]) -> String {
    match sample_sd(values) {
        Some(sd) => format!("{}\u{00b1}{}", fmt_score(mean(values)), fmt_score(sd)),
        None => fmt_score(values[0]),
    }
}

/// One row per (model, context, rag) with macro/micro-F1; groups with
/// multiple seeds report mean and standard deviation. Groups keep the
/// first-occurrence order of `keys`.
pub fn aggregate_table(store: &ResultsStore, keys: &[RunKey]) -> Result<Table, AnalysisError> {
    let mut group_order: Vec<RunKey> = Vec::new();
    let mut grouped: HashMap<String, Vec<&RunKey>> = HashMap::new();
    for key in keys {
        let group = RunKey { seed: None, ..key.clone() };
        let slot = grouped.entry(group.to_string()).or_default();
        if slot.is_empty() {
            group_order.push(group);
        }
        slot.push(key);
    }

    let mut table = Table::new(vec![
        "model".into(),
        "context".into(),
        "rag".into(),
        "macro_f1".into(),
        "micro_f1".into(),
    ]);
    for group in &group_order {
        let members = &grouped[&group.to_string()];
        let mut macros = Vec::new();
        let mut micros = Vec::new();
        for key in members {
            let report = load_report_for(store, key)?;
            macros.push(report.metrics.macro_f1);
            micros.push(report.metrics.micro_f1);
        }
        table.push_row(vec![
            group.model.clone(),
            group.context.to_string(),
            group.rag.to_string(),
            fmt_mean_sd(&macros),
            fmt_mean_sd(&micros),
        ]);
    }
    Ok(table)
}

fn load_report_for(store: &ResultsStore, key: &RunKey) -> Result<RunReport, AnalysisError> {
    let entry = store
        .find(key)
        .ok_or_else(|| AnalysisError::MissingRun(key.to_string()))?;
    store.load_report(entry)
}

/// All reports in a (model, context, rag) group; an explicit seed narrows
/// the group to a single run.
fn group_reports(store: &ResultsStore, key: &RunKey) -> Result<Vec<RunReport>, AnalysisError> {
    let entries = store.matching(key);
    if entries.is_empty() {
        return Err(AnalysisError::MissingRun(key.to_string()));
    }
    entries.into_iter().map(|e| store.load_report(e)).collect()
}

fn same_split(reports: &[RunReport]) -> Result<Split, AnalysisError> {
    let split = reports[0].split;
    for report in reports {
        if report.split != split {
            return Err(AnalysisError::SplitMismatch(split, report.split));
        }
    }
    Ok(split)
}

/// Macro-F1 delta between two context conditions of one model, under one
/// rag setting. Multi-seed groups get one row per seed (when seed sets
/// align) plus a mean row.
pub fn context_delta(
    store: &ResultsStore,
    model: &str,
    baseline: (ContextKind, RagMode),
    comparison: (ContextKind, RagMode),
) -> Result<DeltaTable, AnalysisError> {
    if baseline.1 != comparison.1 {
        return Err(AnalysisError::MismatchedRag { baseline: baseline.1, comparison: comparison.1 });
    }
    let base_key = RunKey::new(model, baseline.0, baseline.1, None);
    let comp_key = RunKey::new(model, comparison.0, comparison.1, None);
    let base_reports = group_reports(store, &base_key)?;
    let comp_reports = group_reports(store, &comp_key)?;
    same_split(&base_reports)?;
    same_split(&comp_reports)?;

    let mut table = DeltaTable::new(base_key.to_string(), comp_key.to_string());

    let base_by_seed: HashMap<Option<u64>, f64> =
        base_reports.iter().map(|r| (r.key.seed, r.metrics.macro_f1)).collect();
    let comp_by_seed: HashMap<Option<u64>, f64> =
        comp_reports.iter().map(|r| (r.key.seed, r.metrics.macro_f1)).collect();

    let mut seeds: Vec<Option<u64>> = base_by_seed.keys().copied().collect();
    seeds.sort();
    let aligned = seeds.iter().all(|s| comp_by_seed.contains_key(s))
        && base_by_seed.len() == comp_by_seed.len();
    if aligned && seeds.iter().any(|s| s.is_some()) {
        for seed in &seeds {
            let b = base_by_seed[seed];
            let c = comp_by_seed[seed];
            table.push(DeltaRow {
                key: seed.map_or("run".to_string(), |s| format!("seed={s}")),
                baseline: b,
                comparison: c,
                delta: c - b,
                support: None,
            });
        }
    }
    let b_mean = mean(&base_by_seed.values().copied().collect::<Vec<_>>());
    let c_mean = mean(&comp_by_seed.values().copied().collect::<Vec<_>>());
    table.push(DeltaRow {
        key: "mean".to_string(),
        baseline: b_mean,
        comparison: c_mean,
        delta: c_mean - b_mean,
        support: None,
    });
    Ok(table)
}

/// Per-label F1 delta between two runs (or seed groups), with gold support
/// counts. Both sides must be evaluated on the same split.
pub fn per_value_delta(
    store: &ResultsStore,
    baseline: &RunKey,
    comparison: &RunKey,
) -> Result<DeltaTable, AnalysisError> {
    let base_reports = group_reports(store, baseline)?;
    let comp_reports = group_reports(store, comparison)?;
    let base_split = same_split(&base_reports)?;
    let comp_split = same_split(&comp_reports)?;
    if base_split != comp_split {
        return Err(AnalysisError::SplitMismatch(base_split, comp_split));
    }

    let mean_f1 = |reports: &[RunReport], label: ValueLabel| -> f64 {
        let values: Vec<f64> =
            reports.iter().map(|r| r.metrics.per_label[label.index()].f1).collect();
        mean(&values)
    };

    let mut table = DeltaTable::new(baseline.to_string(), comparison.to_string());
    for label in ValueLabel::ALL {
        let b = mean_f1(&base_reports, label);
        let c = mean_f1(&comp_reports, label);
        table.push(DeltaRow {
            key: label.name().to_string(),
            baseline: b,
            comparison: c,
            delta: c - b,
            support: Some(base_reports[0].metrics.per_label[label.index()].support),
        });
    }
    Ok(table)
}

fn align_prediction_files<'a>(
    preds_a: &'a [PredictionRecord],
    preds_b: &'a [PredictionRecord],
) -> Result<Vec<(&'a PredictionRecord, &'a PredictionRecord)>, AnalysisError> {
    let mut by_key: HashMap<(&str, u32), &PredictionRecord> =
        preds_b.iter().map(|p| ((p.text_id.as_str(), p.sent_id), p)).collect();
    if by_key.len() != preds_b.len() {
        return Err(AnalysisError::Coverage("duplicate keys in second file".into()));
    }
    let mut pairs = Vec::with_capacity(preds_a.len());
    for a in preds_a {
        match by_key.remove(&(a.text_id.as_str(), a.sent_id)) {
            Some(b) => pairs.push((a, b)),
            None => {
                return Err(AnalysisError::Coverage(format!(
                    "({}, {}) present only in first file",
                    a.text_id, a.sent_id
                )))
            }
        }
    }
    if let Some((t, s)) = by_key.keys().next() {
        return Err(AnalysisError::Coverage(format!("({t}, {s}) present only in second file")));
    }
    Ok(pairs)
}

/// Fraction of sentences whose full predicted label set differs between
/// the two files. Symmetric in its arguments.
pub fn prediction_change_rate(
    preds_a: &[PredictionRecord],
    preds_b: &[PredictionRecord],
) -> Result<f64, AnalysisError> {
    let pairs = align_prediction_files(preds_a, preds_b)?;
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let changed = pairs.iter().filter(|(a, b)| a.labels != b.labels).count();
    Ok(changed as f64 / pairs.len() as f64)
}

/// One changed sentence in a qualitative bundle. `text` is included only
/// when redaction is off, so bundles can respect dataset license terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeExample {
    pub text_id: String,
    pub sent_id: u32,
    pub baseline: LabelSet,
    pub comparison: LabelSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<LabelSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// Collect changed sentences in corpus order (document appearance order,
/// then position), truncated to `max_items`.
pub fn qualitative_bundle(
    preds_a: &[PredictionRecord],
    preds_b: &[PredictionRecord],
    corpus: &[SentenceRecord],
    max_items: usize,
    include_text: bool,
) -> Result<Vec<ChangeExample>, AnalysisError> {
    let pairs = align_prediction_files(preds_a, preds_b)?;
    let mut changed: HashMap<(&str, u32), (&PredictionRecord, &PredictionRecord)> = pairs
        .into_iter()
        .filter(|(a, b)| a.labels != b.labels)
        .map(|(a, b)| ((a.text_id.as_str(), a.sent_id), (a, b)))
        .collect();

    let mut bundle = Vec::new();
    for sentence in corpus {
        if bundle.len() >= max_items {
            break;
        }
        if let Some((a, b)) = changed.remove(&(sentence.text_id.as_str(), sentence.sent_id)) {
            bundle.push(ChangeExample {
                text_id: sentence.text_id.clone(),
                sent_id: sentence.sent_id,
                baseline: a.labels,
                comparison: b.labels,
                gold: sentence.gold,
                text: include_text.then(|| sentence.text.clone()),
            });
        }
    }
    if !changed.is_empty() && bundle.len() < max_items {
        let (t, s) = changed.keys().next().expect("non-empty");
        return Err(AnalysisError::Coverage(format!("({t}, {s}) not present in the corpus")));
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LABEL_COUNT;
    use crate::evaluation::{LabelPerformance, MetricsReport};

    pub(crate) fn synthetic_report(key: RunKey, split: Split, macro_f1: f64, micro_f1: f64) -> RunReport {
        let per_label: Vec<LabelPerformance> = ValueLabel::ALL
            .into_iter()
            .map(|label| LabelPerformance {
                label,
                precision: macro_f1,
                recall: macro_f1,
                f1: macro_f1,
                support: 10,
                tp: 1,
                fp: 1,
                fn_: 1,
            })
            .collect();
        RunReport {
            key,
            split,
            metrics: MetricsReport { sentences: 100, per_label, macro_f1, micro_f1 },
        }
    }

    fn store_with(reports: Vec<RunReport>) -> (tempfile::TempDir, ResultsStore) {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ResultsStore::open(dir.path()).unwrap();
        for report in reports {
            let key = report.key.clone();
            let path = dir.path().join(format!("{}.jsonl", key.file_stem()));
            std::fs::write(&path, "").unwrap();
            store.record_run(&key, Split::Test, &path, "hash", "sha").unwrap();
            store.save_report(&key, &report).unwrap();
        }
        (dir, store)
    }

    fn key(model: &str, context: ContextKind, rag: RagMode, seed: Option<u64>) -> RunKey {
        RunKey::new(model, context, rag, seed)
    }

    #[test]
    fn run_key_round_trips_through_display() {
        let k = key("deberta-v3-base", ContextKind::Document, RagMode::Early, Some(7));
        let parsed: RunKey = k.to_string().parse().unwrap();
        assert_eq!(parsed, k);
        let k = key("gemma", ContextKind::Sentence, RagMode::None, None);
        let parsed: RunKey = k.to_string().parse().unwrap();
        assert_eq!(parsed, k);
    }

    #[test]
    fn aggregate_reports_mean_and_sd_across_seeds() {
        let make = |seed, macro_f1| {
            synthetic_report(
                key("m", ContextKind::Sentence, RagMode::None, Some(seed)),
                Split::Test,
                macro_f1,
                macro_f1,
            )
        };
        let (_dir, store) = store_with(vec![make(7, 0.30), make(42, 0.31), make(1701, 0.32)]);
        let keys: Vec<RunKey> = [7, 42, 1701]
            .into_iter()
            .map(|s| key("m", ContextKind::Sentence, RagMode::None, Some(s)))
            .collect();
        let table = aggregate_table(&store, &keys).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0][3], "0.310\u{00b1}0.010");
    }

    #[test]
    fn aggregate_single_run_omits_sd() {
        let report = synthetic_report(
            key("llm", ContextKind::Sentence, RagMode::None, None),
            Split::Test,
            0.215,
            0.232,
        );
        let (_dir, store) = store_with(vec![report]);
        let table = aggregate_table(
            &store,
            &[key("llm", ContextKind::Sentence, RagMode::None, None)],
        )
        .unwrap();
        assert_eq!(table.rows[0][3], "0.215");
        assert_eq!(table.rows[0][4], "0.232");
    }

    #[test]
    fn aggregate_missing_run_names_the_key() {
        let (_dir, store) = store_with(vec![]);
        let missing = key("m", ContextKind::Window, RagMode::None, Some(7));
        let err = aggregate_table(&store, std::slice::from_ref(&missing)).unwrap_err();
        assert!(err.to_string().contains(&missing.to_string()));
    }

    #[test]
    fn context_delta_reproduces_document_gains() {
        // Document 0.285 vs sentence 0.237 gives +0.048; a reversed pair
        // like 0.171 vs 0.215 gives -0.044.
        let (_dir, store) = store_with(vec![
            synthetic_report(key("d", ContextKind::Sentence, RagMode::None, None), Split::Test, 0.237, 0.3),
            synthetic_report(key("d", ContextKind::Document, RagMode::None, None), Split::Test, 0.285, 0.3),
            synthetic_report(key("q", ContextKind::Sentence, RagMode::None, None), Split::Test, 0.215, 0.3),
            synthetic_report(key("q", ContextKind::Document, RagMode::None, None), Split::Test, 0.171, 0.3),
        ]);
        let table = context_delta(
            &store,
            "d",
            (ContextKind::Sentence, RagMode::None),
            (ContextKind::Document, RagMode::None),
        )
        .unwrap();
        let mean_row = table.rows.last().unwrap();
        assert!((mean_row.delta - 0.048).abs() < 1e-12);

        let table = context_delta(
            &store,
            "q",
            (ContextKind::Sentence, RagMode::None),
            (ContextKind::Document, RagMode::None),
        )
        .unwrap();
        assert!((table.rows.last().unwrap().delta + 0.044).abs() < 1e-12);
    }

    #[test]
    fn context_delta_of_a_run_with_itself_is_zero() {
        let (_dir, store) = store_with(vec![synthetic_report(
            key("m", ContextKind::Document, RagMode::None, None),
            Split::Test,
            0.285,
            0.3,
        )]);
        let table = context_delta(
            &store,
            "m",
            (ContextKind::Document, RagMode::None),
            (ContextKind::Document, RagMode::None),
        )
        .unwrap();
        assert_eq!(table.rows.last().unwrap().delta, 0.0);
    }

    #[test]
    fn context_delta_rejects_mismatched_rag() {
        let (_dir, store) = store_with(vec![]);
        let err = context_delta(
            &store,
            "m",
            (ContextKind::Sentence, RagMode::None),
            (ContextKind::Document, RagMode::Early),
        )
        .unwrap_err();
        assert!(matches!(err, AnalysisError::MismatchedRag { .. }));
    }

    #[test]
    fn per_value_delta_identical_keys_is_all_zero() {
        let k = key("m", ContextKind::Document, RagMode::Early, None);
        let (_dir, store) =
            store_with(vec![synthetic_report(k.clone(), Split::Test, 0.3, 0.35)]);
        let table = per_value_delta(&store, &k, &k).unwrap();
        assert_eq!(table.rows.len(), LABEL_COUNT);
        assert!(table.rows.iter().all(|r| r.delta == 0.0));
    }

    fn report_with_f1(key: RunKey, f1: [f64; LABEL_COUNT]) -> RunReport {
        let mut report = synthetic_report(key, Split::Test, 0.0, 0.0);
        for (slot, value) in report.metrics.per_label.iter_mut().zip(f1) {
            slot.f1 = value;
        }
        report
    }

    #[test]
    fn per_value_delta_isolates_a_single_changed_label() {
        let a = key("m", ContextKind::Sentence, RagMode::None, None);
        let b = key("m", ContextKind::Document, RagMode::None, None);
        let base = [0.2; LABEL_COUNT];
        let mut bumped = base;
        bumped[ValueLabel::Stimulation.index()] += 0.1;
        let (_dir, store) = store_with(vec![
            report_with_f1(a.clone(), base),
            report_with_f1(b.clone(), bumped),
        ]);
        let table = per_value_delta(&store, &a, &b).unwrap();
        let nonzero: Vec<&DeltaRow> =
            table.rows.iter().filter(|r| r.delta.abs() > 1e-12).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].key, "Stimulation");
        assert!((nonzero[0].delta - 0.1).abs() < 1e-12);
        assert_eq!(nonzero[0].support, Some(10));
    }

    // Synthetic fixture shaped like the published document-context gains:
    // Hedonism +0.100, Face +0.089, Tradition +0.086 for the
    // document-minus-sentence contrast.
    #[test]
    fn per_value_delta_recovers_published_gain_pattern() {
        let a = key("d", ContextKind::Sentence, RagMode::None, None);
        let b = key("d", ContextKind::Document, RagMode::None, None);
        let base = [0.25; LABEL_COUNT];
        let mut doc = base;
        doc[ValueLabel::Hedonism.index()] += 0.100;
        doc[ValueLabel::Face.index()] += 0.089;
        doc[ValueLabel::Tradition.index()] += 0.086;
        let (_dir, store) =
            store_with(vec![report_with_f1(a.clone(), base), report_with_f1(b.clone(), doc)]);
        let table = per_value_delta(&store, &a, &b).unwrap();
        let delta_of = |name: &str| {
            table.rows.iter().find(|r| r.key == name).map(|r| r.delta).unwrap()
        };
        assert!((delta_of("Hedonism") - 0.100).abs() < 1e-12);
        assert!((delta_of("Face") - 0.089).abs() < 1e-12);
        assert!((delta_of("Tradition") - 0.086).abs() < 1e-12);
    }

    #[test]
    fn per_value_delta_detects_split_mismatch() {
        let a = key("m", ContextKind::Sentence, RagMode::None, None);
        let b = key("m", ContextKind::Document, RagMode::None, None);
        let (_dir, store) = store_with(vec![
            synthetic_report(a.clone(), Split::Test, 0.3, 0.3),
            synthetic_report(b.clone(), Split::Validation, 0.3, 0.3),
        ]);
        assert!(matches!(
            per_value_delta(&store, &a, &b),
            Err(AnalysisError::SplitMismatch(..))
        ));
    }

    fn pred(text_id: &str, sent_id: u32, labels: LabelSet) -> PredictionRecord {
        PredictionRecord {
            text_id: text_id.into(),
            sent_id,
            labels,
            probs: None,
            raw_output: None,
            parse_failed: false,
        }
    }

    #[test]
    fn change_rate_counts_differing_label_sets() {
        let a = vec![
            pred("D", 0, LabelSet::empty()),
            pred("D", 1, LabelSet::empty().with(ValueLabel::Face)),
            pred("D", 2, LabelSet::empty()),
            pred("D", 3, LabelSet::empty()),
        ];
        let mut b = a.clone();
        b[1].labels = LabelSet::empty();
        assert_eq!(prediction_change_rate(&a, &a).unwrap(), 0.0);
        assert_eq!(prediction_change_rate(&a, &b).unwrap(), 0.25);
        assert_eq!(
            prediction_change_rate(&a, &b).unwrap(),
            prediction_change_rate(&b, &a).unwrap()
        );

        let all_diff: Vec<PredictionRecord> = a
            .iter()
            .map(|p| pred(&p.text_id, p.sent_id, p.labels.union(LabelSet::empty().with(ValueLabel::Hedonism))))
            .collect();
        let flipped: Vec<PredictionRecord> =
            a.iter().map(|p| pred(&p.text_id, p.sent_id, LabelSet::all())).collect();
        assert_eq!(prediction_change_rate(&all_diff, &flipped).unwrap(), 1.0);
    }

    #[test]
    fn qualitative_bundle_orders_by_corpus_and_truncates() {
        let corpus: Vec<SentenceRecord> = [("EN_002", 11u32), ("EN_002", 12), ("EN_010", 0)]
            .into_iter()
            .map(|(t, s)| SentenceRecord {
                text_id: t.into(),
                sent_id: s,
                text: format!("{t}:{s}"),
                gold: Some(LabelSet::empty().with(ValueLabel::SecuritySocietal)),
            })
            .collect();
        let baseline: Vec<PredictionRecord> = corpus
            .iter()
            .map(|r| pred(&r.text_id, r.sent_id, LabelSet::empty().with(ValueLabel::BenevolenceCaring)))
            .collect();
        let comparison: Vec<PredictionRecord> = corpus
            .iter()
            .map(|r| pred(&r.text_id, r.sent_id, LabelSet::empty().with(ValueLabel::SecuritySocietal)))
            .collect();

        let bundle = qualitative_bundle(&baseline, &comparison, &corpus, 10, false).unwrap();
        assert_eq!(bundle.len(), 3);
        assert_eq!(bundle[0].text_id, "EN_002");
        assert_eq!(bundle[0].sent_id, 11);
        assert_eq!(bundle[0].baseline, LabelSet::empty().with(ValueLabel::BenevolenceCaring));
        assert_eq!(bundle[0].comparison, LabelSet::empty().with(ValueLabel::SecuritySocietal));
        assert_eq!(bundle[0].text, None);

        // No changes: empty bundle.
        let none = qualitative_bundle(&baseline, &baseline, &corpus, 10, false).unwrap();
        assert!(none.is_empty());

        // max_items zero: empty bundle.
        let zero = qualitative_bundle(&baseline, &comparison, &corpus, 0, false).unwrap();
        assert!(zero.is_empty());

        // Redaction off includes the text.
        let with_text = qualitative_bundle(&baseline, &comparison, &corpus, 1, true).unwrap();
        assert_eq!(with_text[0].text.as_deref(), Some("EN_002:11"));
    }
}
