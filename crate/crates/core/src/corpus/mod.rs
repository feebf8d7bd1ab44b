//! Sentence-level corpus ingestion.
//!
//! The corpus is a set of documents split into sentences; every sentence is
//! addressed by `(text_id, sent_id)`. Released label files distinguish
//! attained and constrained variants per value; the task works on value
//! presence, so both variants collapse to one binary label at ingest.

mod labels;
mod loader;

pub use labels::{LabelSet, ValueLabel, LABEL_COUNT};
pub use loader::{load_sentences, CorpusFormat};

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("row {row}: missing field: {field}")]
    MissingField { row: u64, field: String },
    #[error("row {row}: malformed field {field}: {reason}")]
    MalformedField { row: u64, field: String, reason: String },
    #[error("row {row}: empty text after trimming")]
    EmptyText { row: u64 },
    #[error("duplicate sentence ({text_id}, {sent_id})")]
    DuplicateSentence { text_id: String, sent_id: u32 },
    #[error("label columns incomplete: expected {expected}, found {found}{missing}")]
    IncompleteLabelColumns { expected: String, found: usize, missing: String },
    #[error("label columns mix presence and attained/constrained encodings")]
    MixedLabelEncodings,
    #[error("flag vectors must have length 19 (got {attained} attained, {constrained} constrained)")]
    FlagLengthMismatch { attained: usize, constrained: usize },
    #[error("sentence ({text_id}, {sent_id}) has no gold labels")]
    MissingGold { text_id: String, sent_id: u32 },
    #[error("failed to read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("row {row}: {reason}")]
    Parse { row: u64, reason: String },
}

/// Which corpus split a file or run refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Split, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split: {other}")),
        }
    }
}

/// One corpus sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub text_id: String,
    pub sent_id: u32,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<LabelSet>,
}

impl SentenceRecord {
    pub fn key(&self) -> (String, u32) {
        (self.text_id.clone(), self.sent_id)
    }
}

/// A document reconstructed from its sentences, ordered by `sent_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub text_id: String,
    pub sentences: Vec<SentenceRecord>,
}

/// Aggregate statistics of a labeled split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub documents: usize,
    pub sentences: usize,
    pub labels_per_sentence: f64,
    pub pct_no_label: f64,
    pub pct_multi_label: f64,
}

/// Collapse attained/constrained flag vectors into value presence:
/// a value is present iff either flag is set.
pub fn collapse_labels(attained: &[bool], constrained: &[bool]) -> Result<LabelSet, CorpusError> {
    if attained.len() != LABEL_COUNT || constrained.len() != LABEL_COUNT {
        return Err(CorpusError::FlagLengthMismatch {
            attained: attained.len(),
            constrained: constrained.len(),
        });
    }
    let mut set = LabelSet::empty();
    for (i, label) in ValueLabel::ALL.into_iter().enumerate() {
        if attained[i] || constrained[i] {
            set.insert(label);
        }
    }
    Ok(set)
}

/// Group records into documents. Documents keep the first-appearance order
/// of their `text_id`; sentences are ordered by ascending `sent_id`, which
/// may contain gaps.
pub fn group_documents(records: &[SentenceRecord]) -> Result<Vec<Document>, CorpusError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Vec<SentenceRecord>> = HashMap::new();
    let mut seen: HashSet<(String, u32)> = HashSet::new();

    for record in records {
        if !seen.insert((record.text_id.clone(), record.sent_id)) {
            return Err(CorpusError::DuplicateSentence {
                text_id: record.text_id.clone(),
                sent_id: record.sent_id,
            });
        }
        match by_id.get_mut(&record.text_id) {
            Some(sentences) => sentences.push(record.clone()),
            None => {
                order.push(record.text_id.clone());
                by_id.insert(record.text_id.clone(), vec![record.clone()]);
            }
        }
    }

    Ok(order
        .into_iter()
        .map(|text_id| {
            let mut sentences = by_id.remove(&text_id).expect("grouped above");
            sentences.sort_by_key(|s| s.sent_id);
            Document { text_id, sentences }
        })
        .collect())
}

/// Compute split statistics over fully labeled records.
pub fn split_statistics(records: &[SentenceRecord]) -> Result<SplitStats, CorpusError> {
    let mut doc_ids: HashSet<&str> = HashSet::new();
    let mut total_labels = 0usize;
    let mut no_label = 0usize;
    let mut multi_label = 0usize;

    for record in records {
        let gold = record.gold.ok_or_else(|| CorpusError::MissingGold {
            text_id: record.text_id.clone(),
            sent_id: record.sent_id,
        })?;
        doc_ids.insert(&record.text_id);
        let n = gold.len();
        total_labels += n;
        if n == 0 {
            no_label += 1;
        } else if n > 1 {
            multi_label += 1;
        }
    }

    let sentences = records.len();
    let denom = if sentences == 0 { 1.0 } else { sentences as f64 };
    Ok(SplitStats {
        documents: doc_ids.len(),
        sentences,
        labels_per_sentence: total_labels as f64 / denom,
        pct_no_label: no_label as f64 / denom,
        pct_multi_label: multi_label as f64 / denom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(text_id: &str, sent_id: u32, gold: Option<LabelSet>) -> SentenceRecord {
        SentenceRecord {
            text_id: text_id.to_string(),
            sent_id,
            text: format!("sentence {text_id} {sent_id}"),
            gold,
        }
    }

    #[test]
    fn collapse_takes_union_without_double_counting() {
        let mut attained = [false; 19];
        let mut constrained = [false; 19];
        attained[ValueLabel::Achievement.index()] = true;
        let set = collapse_labels(&attained, &constrained).unwrap();
        assert_eq!(set, LabelSet::empty().with(ValueLabel::Achievement));

        // Both variants set still yields the value once.
        attained = [false; 19];
        attained[ValueLabel::Tradition.index()] = true;
        constrained[ValueLabel::Tradition.index()] = true;
        let set = collapse_labels(&attained, &constrained).unwrap();
        assert_eq!(set.len(), 1);
        assert!(set.contains(ValueLabel::Tradition));

        let empty = collapse_labels(&[false; 19], &[false; 19]).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn collapse_rejects_wrong_lengths() {
        assert!(collapse_labels(&[false; 18], &[false; 19]).is_err());
        assert!(collapse_labels(&[false; 19], &[false; 20]).is_err());
    }

    #[test]
    fn group_documents_sorts_by_sent_id() {
        let records = vec![rec("D1", 2, None), rec("D1", 0, None), rec("D1", 1, None)];
        let docs = group_documents(&records).unwrap();
        assert_eq!(docs.len(), 1);
        let ids: Vec<u32> = docs[0].sentences.iter().map(|s| s.sent_id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn group_documents_splits_by_text_id_and_keeps_appearance_order() {
        let records = vec![rec("D2", 0, None), rec("D1", 0, None), rec("D2", 1, None)];
        let docs = group_documents(&records).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].text_id, "D2");
        assert_eq!(docs[1].text_id, "D1");
    }

    #[test]
    fn group_documents_empty_input() {
        assert!(group_documents(&[]).unwrap().is_empty());
    }

    #[test]
    fn group_documents_rejects_duplicates() {
        let records = vec![rec("D1", 0, None), rec("D1", 0, None)];
        assert!(matches!(
            group_documents(&records),
            Err(CorpusError::DuplicateSentence { .. })
        ));
    }

    #[test]
    fn split_statistics_single_multi_label_sentence() {
        let gold: LabelSet = [ValueLabel::Achievement, ValueLabel::Face].into_iter().collect();
        let stats = split_statistics(&[rec("D1", 0, Some(gold))]).unwrap();
        assert_eq!(stats.documents, 1);
        assert_eq!(stats.sentences, 1);
        assert_eq!(stats.labels_per_sentence, 2.0);
        assert_eq!(stats.pct_no_label, 0.0);
        assert_eq!(stats.pct_multi_label, 1.0);
    }

    #[test]
    fn split_statistics_half_empty() {
        let single = LabelSet::empty().with(ValueLabel::Hedonism);
        let stats = split_statistics(&[
            rec("D1", 0, Some(LabelSet::empty())),
            rec("D1", 1, Some(single)),
        ])
        .unwrap();
        assert_eq!(stats.labels_per_sentence, 0.5);
        assert_eq!(stats.pct_no_label, 0.5);
        assert_eq!(stats.pct_multi_label, 0.0);
    }

    #[test]
    fn split_statistics_requires_gold() {
        assert!(matches!(
            split_statistics(&[rec("D1", 0, None)]),
            Err(CorpusError::MissingGold { .. })
        ));
    }

    fn arb_label_set() -> impl Strategy<Value = LabelSet> {
        (0u32..(1 << 19)).prop_map(|bits| LabelSet::from_bits(bits).unwrap())
    }

    proptest! {
        #[test]
        fn collapse_is_symmetric_and_equals_bitwise_or(
            a in proptest::array::uniform19(any::<bool>()),
            b in proptest::array::uniform19(any::<bool>()),
        ) {
            let ab = collapse_labels(&a, &b).unwrap();
            let ba = collapse_labels(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            let mut bits = 0u32;
            for i in 0..19 {
                if a[i] || b[i] {
                    bits |= 1 << i;
                }
            }
            prop_assert_eq!(ab.bits(), bits);
        }

        #[test]
        fn grouping_is_a_permutation_of_the_input(
            raw in proptest::collection::vec((0u8..5, 0u32..12), 0..40)
        ) {
            // Deduplicate (text_id, sent_id) pairs to satisfy the precondition.
            let mut seen = std::collections::HashSet::new();
            let records: Vec<SentenceRecord> = raw
                .into_iter()
                .filter(|pair| seen.insert(*pair))
                .map(|(doc, sent)| rec(&format!("D{doc}"), sent, None))
                .collect();

            let docs = group_documents(&records).unwrap();
            let mut flattened: Vec<(String, u32)> = docs
                .iter()
                .flat_map(|d| d.sentences.iter().map(|s| (s.text_id.clone(), s.sent_id)))
                .collect();
            let mut original: Vec<(String, u32)> =
                records.iter().map(|s| (s.text_id.clone(), s.sent_id)).collect();
            flattened.sort();
            original.sort();
            prop_assert_eq!(flattened, original);
        }

        #[test]
        fn label_fractions_partition_the_split(
            golds in proptest::collection::vec(arb_label_set(), 1..60)
        ) {
            let records: Vec<SentenceRecord> = golds
                .iter()
                .enumerate()
                .map(|(i, g)| rec("D", i as u32, Some(*g)))
                .collect();
            let stats = split_statistics(&records).unwrap();
            let single = golds.iter().filter(|g| g.len() == 1).count() as f64
                / golds.len() as f64;
            prop_assert!(
                (stats.pct_no_label + single + stats.pct_multi_label - 1.0).abs() <= 1e-12
            );
        }
    }
}
