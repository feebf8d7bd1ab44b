//! Per-value and aggregate metrics, and validation threshold selection.

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSet, SentenceRecord, ValueLabel};
use crate::modelio::{threshold_predictions, ProbabilityVector};

use super::{
    align_to_gold, confusion_counts, macro_f1, micro_f1, prf, EvalError, PredictionRecord,
};

/// Scores for one value label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPerformance {
    pub label: ValueLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold positives for the label.
    pub support: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Evaluation of one prediction file against gold.
///
/// `macro_f1` is the unweighted mean of the 19 per-label F1 scores,
/// regardless of support; `micro_f1` pools TP/FP/FN over all
/// (sentence, label) decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sentences: usize,
    pub per_label: Vec<LabelPerformance>,
    pub macro_f1: f64,
    pub micro_f1: f64,
}

/// Compute the metrics report. `preds` must cover exactly the gold
/// sentences; every gold record must carry labels.
pub fn compute_metrics(
    preds: &[PredictionRecord],
    gold: &[SentenceRecord],
) -> Result<MetricsReport, EvalError> {
    let pairs = align_to_gold(preds, gold)?;
    let counts = confusion_counts(pairs.iter());

    let per_label: Vec<LabelPerformance> = ValueLabel::ALL
        .into_iter()
        .map(|label| {
            let c = counts[label.index()];
            let (precision, recall, f1) = prf(&c);
            LabelPerformance {
                label,
                precision,
                recall,
                f1,
                support: c.tp + c.fn_,
                tp: c.tp,
                fp: c.fp,
                fn_: c.fn_,
            }
        })
        .collect();

    Ok(MetricsReport {
        sentences: pairs.len(),
        per_label,
        macro_f1: macro_f1(&counts),
        micro_f1: micro_f1(&counts),
    })
}

/// A validation sentence with its sigmoid scores and gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSentence {
    pub probs: ProbabilityVector,
    pub gold: LabelSet,
}

/// The default decision-threshold grid: 0.05 to 0.50 in steps of 0.01.
pub fn default_threshold_grid() -> Vec<f64> {
    (5..=50).map(|i| i as f64 / 100.0).collect()
}

/// Pick the grid threshold maximizing validation macro-F1; ties go to the
/// smallest threshold.
pub fn select_threshold(scored: &[ScoredSentence], grid: &[f64]) -> Result<f64, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let mut best: Option<(f64, f64)> = None;
    for &threshold in grid {
        let pairs: Vec<(LabelSet, LabelSet)> = scored
            .iter()
            .map(|s| Ok((threshold_predictions(&s.probs, threshold)?, s.gold)))
            .collect::<Result<_, EvalError>>()?;
        let score = macro_f1(&confusion_counts(pairs.iter()));
        match best {
            Some((_, best_score)) if score <= best_score => {}
            _ => best = Some((threshold, score)),
        }
    }
    Ok(best.expect("grid is non-empty").0)
}
