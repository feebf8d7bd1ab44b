//! Paired bootstrap and permutation tests over two prediction files.
//!
//! Both tests draw per-iteration randomness from a counter-based stream
//! split of one seed (iteration `i` uses stream `i + 1` of a ChaCha8
//! generator), so results are bit-reproducible and independent of how
//! iterations are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSet, SentenceRecord, ValueLabel};

use super::{align_to_gold, confusion_counts, macro_f1, micro_f1, prf, EvalError, PredictionRecord};

pub const DEFAULT_PERMUTATION_ITERATIONS: usize = 2000;
pub const DEFAULT_BOOTSTRAP_ITERATIONS: usize = 1000;

/// Which metric a significance test compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricSelector {
    MacroF1,
    MicroF1,
    /// F1 of a single value, for per-value delta testing.
    LabelF1(ValueLabel),
}

impl std::str::FromStr for MetricSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<MetricSelector, String> {
        let lowered = s.trim().to_ascii_lowercase();
        match lowered.as_str() {
            "macro" | "macro-f1" | "macro_f1" => Ok(MetricSelector::MacroF1),
            "micro" | "micro-f1" | "micro_f1" => Ok(MetricSelector::MicroF1),
            _ => {
                if let Some(name) = s.trim().strip_prefix("label:") {
                    ValueLabel::from_name(name)
                        .map(MetricSelector::LabelF1)
                        .ok_or_else(|| format!("unknown value name: {name}"))
                } else {
                    Err(format!("unknown metric selector: {s}"))
                }
            }
        }
    }
}

/// Result of one paired test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub observed_delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub iterations: usize,
    pub seed: u64,
}

/// One aligned sentence: predictions of both systems plus gold.
#[derive(Debug, Clone, Copy)]
struct AlignedSentence {
    a: LabelSet,
    b: LabelSet,
    gold: LabelSet,
}

fn align_pair(
    preds_a: &[PredictionRecord],
    preds_b: &[PredictionRecord],
    gold: &[SentenceRecord],
) -> Result<Vec<AlignedSentence>, EvalError> {
    let a = align_to_gold(preds_a, gold)?;
    let b = align_to_gold(preds_b, gold)?;
    Ok(a.into_iter()
        .zip(b)
        .map(|((a, gold), (b, _))| AlignedSentence { a, b, gold })
        .collect())
}

fn eval_metric<'a>(
    metric: MetricSelector,
    pairs: impl Iterator<Item = &'a (LabelSet, LabelSet)>,
) -> f64 {
    let counts = confusion_counts(pairs);
    match metric {
        MetricSelector::MacroF1 => macro_f1(&counts),
        MetricSelector::MicroF1 => micro_f1(&counts),
        MetricSelector::LabelF1(label) => prf(&counts[label.index()]).2,
    }
}

fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64 + 1);
    rng
}

/// Linear-interpolation percentile of a sorted sample, q in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Paired bootstrap over sentences: each iteration resamples the test set
/// with replacement (the same resample for both systems) and recomputes the
/// metric delta. The interval is the 2.5/97.5 percentile of the delta
/// distribution; the p-value is the one-sided `(count + 1)/(n + 1)`
/// estimate of the probability that the delta is not positive.
pub fn paired_bootstrap(
    preds_a: &[PredictionRecord],
    preds_b: &[PredictionRecord],
    gold: &[SentenceRecord],
    metric: MetricSelector,
    iterations: usize,
    seed: u64,
) -> Result<PairedTestResult, EvalError> {
    if iterations == 0 {
        return Err(EvalError::NoIterations);
    }
    let sentences = align_pair(preds_a, preds_b, gold)?;
    let n = sentences.len();

    let full_a: Vec<(LabelSet, LabelSet)> = sentences.iter().map(|s| (s.a, s.gold)).collect();
    let full_b: Vec<(LabelSet, LabelSet)> = sentences.iter().map(|s| (s.b, s.gold)).collect();
    let observed_delta = eval_metric(metric, full_a.iter()) - eval_metric(metric, full_b.iter());

    let mut deltas: Vec<f64> = (0..iterations)
        .into_par_iter()
        .map(|iteration| {
            let mut rng = iteration_rng(seed, iteration);
            // One resample, applied to both systems.
            let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let sample_a: Vec<(LabelSet, LabelSet)> =
                indices.iter().map(|&i| (sentences[i].a, sentences[i].gold)).collect();
            let sample_b: Vec<(LabelSet, LabelSet)> =
                indices.iter().map(|&i| (sentences[i].b, sentences[i].gold)).collect();
            eval_metric(metric, sample_a.iter()) - eval_metric(metric, sample_b.iter())
        })
        .collect();

    let not_positive = deltas.iter().filter(|d| **d <= 0.0).count();
    let p_value = (not_positive + 1) as f64 / (iterations + 1) as f64;
    deltas.sort_by(f64::total_cmp);

    Ok(PairedTestResult {
        observed_delta,
        ci_low: percentile(&deltas, 0.025),
        ci_high: percentile(&deltas, 0.975),
        p_value,
        iterations,
        seed,
    })
}

/// Paired permutation test: each iteration swaps the two systems'
/// predictions per sentence with probability one half and recomputes the
/// metric delta. `p = (#{|perm delta| >= |observed delta|} + 1)/(n + 1)`.
/// The interval fields carry the 2.5/97.5 percentiles of the permutation
/// delta distribution.
pub fn paired_permutation(
    preds_a: &[PredictionRecord],
    preds_b: &[PredictionRecord],
    gold: &[SentenceRecord],
    metric: MetricSelector,
    iterations: usize,
    seed: u64,
) -> Result<PairedTestResult, EvalError> {
    if iterations == 0 {
        return Err(EvalError::NoIterations);
    }
    let sentences = align_pair(preds_a, preds_b, gold)?;

    let full_a: Vec<(LabelSet, LabelSet)> = sentences.iter().map(|s| (s.a, s.gold)).collect();
    let full_b: Vec<(LabelSet, LabelSet)> = sentences.iter().map(|s| (s.b, s.gold)).collect();
    let observed_delta = eval_metric(metric, full_a.iter()) - eval_metric(metric, full_b.iter());

    let mut deltas: Vec<f64> = (0..iterations)
        .into_par_iter()
        .map(|iteration| {
            let mut rng = iteration_rng(seed, iteration);
            let mut perm_a = Vec::with_capacity(sentences.len());
            let mut perm_b = Vec::with_capacity(sentences.len());
            for s in &sentences {
                if rng.random_bool(0.5) {
                    perm_a.push((s.b, s.gold));
                    perm_b.push((s.a, s.gold));
                } else {
                    perm_a.push((s.a, s.gold));
                    perm_b.push((s.b, s.gold));
                }
            }
            eval_metric(metric, perm_a.iter()) - eval_metric(metric, perm_b.iter())
        })
        .collect();

    let at_least = deltas.iter().filter(|d| d.abs() >= observed_delta.abs()).count();
    let p_value = (at_least + 1) as f64 / (iterations + 1) as f64;
    deltas.sort_by(f64::total_cmp);

    Ok(PairedTestResult {
        observed_delta,
        ci_low: percentile(&deltas, 0.025),
        ci_high: percentile(&deltas, 0.975),
        p_value,
        iterations,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(sent_id: u32, labels: LabelSet) -> PredictionRecord {
        PredictionRecord {
            text_id: "D".into(),
            sent_id,
            labels,
            probs: None,
            raw_output: None,
            parse_failed: false,
        }
    }

    fn gold_rec(sent_id: u32, labels: LabelSet) -> SentenceRecord {
        SentenceRecord {
            text_id: "D".into(),
            sent_id,
            text: format!("s{sent_id}"),
            gold: Some(labels),
        }
    }

    fn toy(n: u32) -> (Vec<PredictionRecord>, Vec<PredictionRecord>, Vec<SentenceRecord>) {
        // System A is gold-perfect, system B predicts nothing.
        let labels: Vec<LabelSet> = (0..n)
            .map(|i| LabelSet::empty().with(ValueLabel::ALL[(i as usize) % 6]))
            .collect();
        let preds_a: Vec<PredictionRecord> =
            labels.iter().enumerate().map(|(i, l)| pred(i as u32, *l)).collect();
        let preds_b: Vec<PredictionRecord> =
            (0..n).map(|i| pred(i, LabelSet::empty())).collect();
        let gold: Vec<SentenceRecord> =
            labels.iter().enumerate().map(|(i, l)| gold_rec(i as u32, *l)).collect();
        (preds_a, preds_b, gold)
    }

    #[test]
    fn identical_systems_bootstrap_gives_zero_interval() {
        let (preds_a, _, gold) = toy(12);
        let result =
            paired_bootstrap(&preds_a, &preds_a, &gold, MetricSelector::MacroF1, 200, 7).unwrap();
        assert_eq!(result.observed_delta, 0.0);
        assert_eq!(result.ci_low, 0.0);
        assert_eq!(result.ci_high, 0.0);
        assert_eq!(result.p_value, 1.0);
    }

    #[test]
    fn identical_systems_permutation_gives_p_one() {
        let (preds_a, _, gold) = toy(12);
        let result =
            paired_permutation(&preds_a, &preds_a, &gold, MetricSelector::MacroF1, 200, 7).unwrap();
        assert_eq!(result.p_value, 1.0);
        assert_eq!(result.observed_delta, 0.0);
    }

    #[test]
    fn fixed_seed_reproduces_bit_identical_results() {
        let (preds_a, preds_b, gold) = toy(20);
        for metric in [
            MetricSelector::MacroF1,
            MetricSelector::MicroF1,
            MetricSelector::LabelF1(ValueLabel::SelfDirectionThought),
        ] {
            let r1 = paired_bootstrap(&preds_a, &preds_b, &gold, metric, 300, 42).unwrap();
            let r2 = paired_bootstrap(&preds_a, &preds_b, &gold, metric, 300, 42).unwrap();
            assert_eq!(r1, r2);
            let p1 = paired_permutation(&preds_a, &preds_b, &gold, metric, 300, 42).unwrap();
            let p2 = paired_permutation(&preds_a, &preds_b, &gold, metric, 300, 42).unwrap();
            assert_eq!(p1, p2);
        }
    }

    // Frozen protocol check against an independent resampling
    // implementation: same stream split, same index draws.
    #[test]
    fn bootstrap_matches_independent_resampler_on_the_toy_set() {
        let (preds_a, preds_b, gold) = toy(20);
        let iterations = 250;
        let seed = 1701;
        let result = paired_bootstrap(&preds_a, &preds_b, &gold, MetricSelector::MacroF1, iterations, seed)
            .unwrap();
        assert!(result.ci_low > 0.0, "interval should sit strictly above zero");

        // Independent implementation: draws indices the same way, computes
        // macro-F1 from scratch without the shared confusion helpers.
        let n = gold.len();
        let mut deltas = Vec::new();
        for iteration in 0..iterations {
            let mut rng = iteration_rng(seed, iteration);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let macro_of = |system: &[PredictionRecord]| -> f64 {
                let mut f1_sum = 0.0;
                for label in ValueLabel::ALL {
                    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
                    for &i in &idx {
                        let p = system[i].labels.contains(label);
                        let g = gold[i].gold.unwrap().contains(label);
                        match (p, g) {
                            (true, true) => tp += 1,
                            (true, false) => fp += 1,
                            (false, true) => fn_ += 1,
                            (false, false) => {}
                        }
                    }
                    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
                    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
                    f1_sum += if precision + recall == 0.0 {
                        0.0
                    } else {
                        2.0 * precision * recall / (precision + recall)
                    };
                }
                f1_sum / 19.0
            };
            deltas.push(macro_of(&preds_a) - macro_of(&preds_b));
        }
        deltas.sort_by(f64::total_cmp);
        assert_eq!(result.ci_low, percentile(&deltas, 0.025));
        assert_eq!(result.ci_high, percentile(&deltas, 0.975));
    }

    #[test]
    fn permutation_matches_exhaustive_enumeration_on_small_sets() {
        // n = 8 sentences, differing predictions on a few of them.
        let a = ValueLabel::Achievement;
        let b = ValueLabel::Face;
        let golds: Vec<LabelSet> = (0..8)
            .map(|i| if i % 2 == 0 { LabelSet::empty().with(a) } else { LabelSet::empty().with(b) })
            .collect();
        let preds_a: Vec<PredictionRecord> =
            golds.iter().enumerate().map(|(i, g)| pred(i as u32, *g)).collect();
        let preds_b: Vec<PredictionRecord> = golds
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let labels = if i < 3 { LabelSet::empty() } else { *g };
                pred(i as u32, labels)
            })
            .collect();
        let gold: Vec<SentenceRecord> =
            golds.iter().enumerate().map(|(i, g)| gold_rec(i as u32, *g)).collect();

        let mc = paired_permutation(&preds_a, &preds_b, &gold, MetricSelector::MacroF1, 2000, 7)
            .unwrap();

        // Exhaustive 2^8 sign-flip oracle.
        let n = gold.len();
        let eval = |assignment: &[bool]| -> f64 {
            let pairs_a: Vec<(LabelSet, LabelSet)> = (0..n)
                .map(|i| {
                    let p = if assignment[i] { preds_b[i].labels } else { preds_a[i].labels };
                    (p, golds[i])
                })
                .collect();
            let pairs_b: Vec<(LabelSet, LabelSet)> = (0..n)
                .map(|i| {
                    let p = if assignment[i] { preds_a[i].labels } else { preds_b[i].labels };
                    (p, golds[i])
                })
                .collect();
            eval_metric(MetricSelector::MacroF1, pairs_a.iter())
                - eval_metric(MetricSelector::MacroF1, pairs_b.iter())
        };
        let observed = eval(&vec![false; n]);
        let mut count = 0usize;
        for mask in 0u32..(1 << n) {
            let assignment: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            if eval(&assignment).abs() >= observed.abs() {
                count += 1;
            }
        }
        let exact = count as f64 / (1u32 << n) as f64;
        assert!(
            (mc.p_value - exact).abs() <= 0.02,
            "monte carlo {} vs exact {}",
            mc.p_value,
            exact
        );
    }

    #[test]
    fn coverage_mismatch_is_detected() {
        let (preds_a, preds_b, gold) = toy(5);
        let short = &preds_b[..4];
        assert!(paired_permutation(&preds_a, short, &gold, MetricSelector::MacroF1, 10, 7).is_err());
    }

    #[test]
    fn p_value_respects_the_add_one_floor() {
        let (preds_a, preds_b, gold) = toy(20);
        let result =
            paired_permutation(&preds_a, &preds_b, &gold, MetricSelector::MacroF1, 500, 7).unwrap();
        assert!(result.p_value >= 1.0 / 501.0);
        assert!(result.p_value <= 1.0);
    }
}
