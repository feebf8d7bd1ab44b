//! Context construction for a fixed target sentence.
//!
//! The three context conditions differ only in the text made available
//! around the target: the sentence alone, a local window, or the whole
//! document. Budgeted assembly additionally folds retrieved knowledge text
//! into the input under a hard KB token cap and fills the remaining token
//! budget with document sentences nearest the target.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, SentenceRecord};

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("position {position} out of range for document with {len} sentences")]
    InvalidPosition { position: usize, len: usize },
    #[error("budgets must be positive (total {total}, kb {kb})")]
    InvalidBudget { total: usize, kb: usize },
    #[error("target exceeds budget ({tokens} tokens > total budget {total})")]
    TargetExceedsBudget { tokens: usize, total: usize },
}

/// Which context condition a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextKind {
    Sentence,
    Window,
    Document,
}

impl ContextKind {
    pub const fn as_str(self) -> &'static str {
        match self {
            ContextKind::Sentence => "sentence",
            ContextKind::Window => "window",
            ContextKind::Document => "document",
        }
    }
}

impl std::fmt::Display for ContextKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ContextKind {
    type Err = String;

    fn from_str(s: &str) -> Result<ContextKind, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sentence" => Ok(ContextKind::Sentence),
            "window" => Ok(ContextKind::Window),
            "document" | "doc" => Ok(ContextKind::Document),
            other => Err(format!("unknown context condition: {other}")),
        }
    }
}

/// Context condition plus its window radius (used only when `kind` is
/// `window`; the default radius is 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextCondition {
    pub kind: ContextKind,
    #[serde(default = "default_window_radius")]
    pub window_radius: usize,
}

pub const DEFAULT_WINDOW_RADIUS: usize = 2;

fn default_window_radius() -> usize {
    DEFAULT_WINDOW_RADIUS
}

impl ContextCondition {
    pub fn sentence() -> ContextCondition {
        ContextCondition { kind: ContextKind::Sentence, window_radius: DEFAULT_WINDOW_RADIUS }
    }

    pub fn window(radius: usize) -> ContextCondition {
        ContextCondition { kind: ContextKind::Window, window_radius: radius }
    }

    pub fn document() -> ContextCondition {
        ContextCondition { kind: ContextKind::Document, window_radius: DEFAULT_WINDOW_RADIUS }
    }
}

/// Role of one segment inside an assembled input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentRole {
    PreContext,
    Target,
    PostContext,
    Kb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub role: SegmentRole,
    pub text: String,
}

/// The assembled text for one target sentence under a context condition.
///
/// `token_counts` and the budget fields are populated by
/// [`assemble_budgeted_input`]; the plain builders leave them unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextInput {
    pub target: SentenceRecord,
    pub condition: ContextCondition,
    pub segments: Vec<Segment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_counts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kb_budget: Option<usize>,
}

impl ContextInput {
    /// Index of the unique target segment.
    pub fn target_index(&self) -> usize {
        self.segments
            .iter()
            .position(|s| s.role == SegmentRole::Target)
            .expect("every context input carries exactly one target segment")
    }

    pub fn kb_segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.role == SegmentRole::Kb)
    }

    pub fn non_kb_segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.role != SegmentRole::Kb)
    }

    /// The document-side text (pre-context, target, post-context) joined
    /// with single spaces, in order.
    pub fn context_text(&self) -> String {
        self.non_kb_segments().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ")
    }

    /// All segments joined with single spaces; KB segments come first, so
    /// this is the early-fusion input for scoring backends.
    pub fn fused_text(&self) -> String {
        self.segments.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ")
    }
}

/// Text-to-token-count function used for budget accounting. The default
/// whitespace counter stands in for a backend tokenizer; a backend-specific
/// counter can be plugged in through this trait.
pub trait TokenCounter: Sync {
    fn count(&self, text: &str) -> usize;

    /// Longest prefix of `text`, on a token boundary, with at most
    /// `max_tokens` tokens.
    fn truncate_to(&self, text: &str, max_tokens: usize) -> String;
}

/// Counts whitespace-separated tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn truncate_to(&self, text: &str, max_tokens: usize) -> String {
        text.split_whitespace().take(max_tokens).collect::<Vec<_>>().join(" ")
    }
}

fn check_position(doc: &Document, position: usize) -> Result<(), ContextError> {
    if position >= doc.sentences.len() {
        return Err(ContextError::InvalidPosition { position, len: doc.sentences.len() });
    }
    Ok(())
}

/// Sentence condition: the target alone.
pub fn build_sentence_context(doc: &Document, position: usize) -> Result<ContextInput, ContextError> {
    check_position(doc, position)?;
    let target = doc.sentences[position].clone();
    Ok(ContextInput {
        segments: vec![Segment { role: SegmentRole::Target, text: target.text.clone() }],
        target,
        condition: ContextCondition::sentence(),
        token_counts: None,
        total_budget: None,
        kb_budget: None,
    })
}

/// Window condition: up to `radius` sentences on each side of the target,
/// truncated at document boundaries.
pub fn build_window_context(
    doc: &Document,
    position: usize,
    radius: usize,
) -> Result<ContextInput, ContextError> {
    check_position(doc, position)?;
    let start = position.saturating_sub(radius);
    let end = (position + radius + 1).min(doc.sentences.len());
    let segments = window_segments(doc, start, end, position);
    Ok(ContextInput {
        target: doc.sentences[position].clone(),
        condition: ContextCondition::window(radius),
        segments,
        token_counts: None,
        total_budget: None,
        kb_budget: None,
    })
}

/// Document condition: every sentence of the document, target flagged.
pub fn build_document_context(doc: &Document, position: usize) -> Result<ContextInput, ContextError> {
    check_position(doc, position)?;
    let segments = window_segments(doc, 0, doc.sentences.len(), position);
    Ok(ContextInput {
        target: doc.sentences[position].clone(),
        condition: ContextCondition::document(),
        segments,
        token_counts: None,
        total_budget: None,
        kb_budget: None,
    })
}

fn window_segments(doc: &Document, start: usize, end: usize, position: usize) -> Vec<Segment> {
    (start..end)
        .map(|i| Segment {
            role: match i.cmp(&position) {
                std::cmp::Ordering::Less => SegmentRole::PreContext,
                std::cmp::Ordering::Equal => SegmentRole::Target,
                std::cmp::Ordering::Greater => SegmentRole::PostContext,
            },
            text: doc.sentences[i].text.clone(),
        })
        .collect()
}

/// Fold retrieved knowledge into a context input under token budgets.
///
/// KB texts keep retrieval order, are placed before the pre-context, and are
/// truncated at a token boundary so their token sum never exceeds
/// `kb_budget` (nor the room left by the target). The remaining budget is
/// filled with whole context sentences added alternately nearest-first
/// around the target, pre side first; a side stops extending at the first
/// sentence that does not fit. The target is always kept in full; existing
/// KB segments in `ctx` are replaced by `kb_texts`, which makes the
/// operation idempotent.
pub fn assemble_budgeted_input(
    ctx: &ContextInput,
    kb_texts: &[String],
    counter: &dyn TokenCounter,
    total_budget: usize,
    kb_budget: usize,
) -> Result<ContextInput, ContextError> {
    if total_budget == 0 || kb_budget == 0 {
        return Err(ContextError::InvalidBudget { total: total_budget, kb: kb_budget });
    }

    let body: Vec<&Segment> = ctx.non_kb_segments().collect();
    let target_pos = body
        .iter()
        .position(|s| s.role == SegmentRole::Target)
        .expect("every context input carries exactly one target segment");

    let target_tokens = counter.count(&body[target_pos].text);
    if target_tokens > total_budget {
        return Err(ContextError::TargetExceedsBudget { tokens: target_tokens, total: total_budget });
    }

    // KB text is capped by the KB budget and by the room the target leaves.
    let kb_allow = kb_budget.min(total_budget - target_tokens);
    let mut kb_segments: Vec<Segment> = Vec::new();
    let mut kb_used = 0usize;
    for text in kb_texts {
        let remaining = kb_allow - kb_used;
        if remaining == 0 {
            break;
        }
        let tokens = counter.count(text);
        let kept = if tokens <= remaining {
            text.clone()
        } else {
            counter.truncate_to(text, remaining)
        };
        let kept_tokens = counter.count(&kept);
        if kept_tokens == 0 {
            continue;
        }
        kb_used += kept_tokens;
        kb_segments.push(Segment { role: SegmentRole::Kb, text: kept });
    }

    // Fill what is left with whole sentences around the target: alternate
    // pre/post by distance, and close a side once its next sentence no
    // longer fits, which keeps the kept span contiguous.
    let mut remaining = total_budget - target_tokens - kb_used;
    let mut keep_before = 0usize;
    let mut keep_after = 0usize;
    let mut pre_open = true;
    let mut post_open = true;
    let mut distance = 1usize;
    while pre_open || post_open {
        if pre_open {
            if distance <= target_pos {
                let tokens = counter.count(&body[target_pos - distance].text);
                if tokens <= remaining {
                    remaining -= tokens;
                    keep_before = distance;
                } else {
                    pre_open = false;
                }
            } else {
                pre_open = false;
            }
        }
        if post_open {
            if target_pos + distance < body.len() {
                let tokens = counter.count(&body[target_pos + distance].text);
                if tokens <= remaining {
                    remaining -= tokens;
                    keep_after = distance;
                } else {
                    post_open = false;
                }
            } else {
                post_open = false;
            }
        }
        distance += 1;
    }

    let mut segments = kb_segments;
    segments.extend(body[target_pos - keep_before..=target_pos + keep_after].iter().map(|s| (*s).clone()));

    let token_counts: Vec<usize> = segments.iter().map(|s| counter.count(&s.text)).collect();
    Ok(ContextInput {
        target: ctx.target.clone(),
        condition: ctx.condition,
        segments,
        token_counts: Some(token_counts),
        total_budget: Some(total_budget),
        kb_budget: Some(kb_budget),
    })
}
