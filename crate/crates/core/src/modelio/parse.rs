//! Robust parsing of free-form model completions into canonical label sets.
//!
//! The cascade tries, in order: a JSON-like list of strings, a JSON-like
//! object with a `labels` field, then comma-, semicolon-, and
//! newline-separated text. The first stage that structurally applies wins.
//! Items are trimmed and matched case-insensitively against the canonical
//! names; unknown items are discarded and duplicates removed. The literal
//! `NONE` is the empty set. Unparseable or empty output maps to the empty
//! set with a parse-failure flag instead of an error, so a run over many
//! thousands of sentences never stops on one garbled completion.

use crate::corpus::{LabelSet, ValueLabel};

/// Outcome of parsing one completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedOutput {
    pub labels: LabelSet,
    /// Set when the output was empty or unusable, or when it mixed `NONE`
    /// with recognized labels (the labels win, flagged for inspection).
    pub parse_failed: bool,
}

impl ParsedOutput {
    fn ok(labels: LabelSet) -> ParsedOutput {
        ParsedOutput { labels, parse_failed: false }
    }

    fn failed() -> ParsedOutput {
        ParsedOutput { labels: LabelSet::empty(), parse_failed: true }
    }
}

/// Parse a raw completion. Total over strings: never errors.
pub fn parse_llm_output(raw: &str) -> ParsedOutput {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return ParsedOutput::failed();
    }
    if trimmed.eq_ignore_ascii_case("none") {
        return ParsedOutput::ok(LabelSet::empty());
    }

    if let Some(items) = json_items(trimmed) {
        // The structure parsed, so this is never a parse failure: unknown
        // items are discarded, and an empty list is an explicit empty set.
        let (labels, none_seen) = match_items(&items);
        return ParsedOutput { labels, parse_failed: none_seen && !labels.is_empty() };
    }

    for separator in [',', ';', '\n'] {
        let items: Vec<String> = trimmed.split(separator).map(|s| s.trim().to_string()).collect();
        let (labels, none_seen) = match_items(&items);
        // A separator stage wins when it recognized at least one label or a
        // clean NONE token; otherwise try the next separator.
        if !labels.is_empty() {
            return ParsedOutput { labels, parse_failed: none_seen };
        }
        if none_seen {
            return ParsedOutput::ok(LabelSet::empty());
        }
    }

    ParsedOutput::failed()
}

/// Match trimmed items against the canonical names; reports whether a
/// `NONE` token appeared among them.
fn match_items(items: &[String]) -> (LabelSet, bool) {
    let mut labels = LabelSet::empty();
    let mut none_seen = false;
    for item in items {
        let item = item.trim();
        if item.eq_ignore_ascii_case("none") {
            none_seen = true;
        } else if let Some(label) = ValueLabel::from_name(item) {
            labels.insert(label);
        }
    }
    (labels, none_seen)
}

/// Try the JSON-like stages. Returns the item strings when the text (or an
/// embedded bracketed span) is a JSON array of strings, an object with a
/// `labels` field, or a bare JSON string.
fn json_items(text: &str) -> Option<Vec<String>> {
    let stripped = strip_code_fence(text);

    let candidates = [
        Some(stripped.to_string()),
        bracketed(stripped, '[', ']'),
        bracketed(stripped, '{', '}'),
    ];
    for candidate in candidates.into_iter().flatten() {
        if let Ok(value) = serde_json::from_str::<serde_json::Value>(&candidate) {
            if let Some(items) = items_from_value(&value) {
                return Some(items);
            }
        }
    }
    None
}

fn items_from_value(value: &serde_json::Value) -> Option<Vec<String>> {
    match value {
        serde_json::Value::Array(entries) => Some(
            entries.iter().filter_map(|v| v.as_str().map(str::to_string)).collect(),
        ),
        serde_json::Value::Object(map) => match map.get("labels")? {
            serde_json::Value::Array(entries) => Some(
                entries.iter().filter_map(|v| v.as_str().map(str::to_string)).collect(),
            ),
            serde_json::Value::String(s) => {
                Some(s.split(',').map(|x| x.trim().to_string()).collect())
            }
            _ => None,
        },
        serde_json::Value::String(s) => Some(vec![s.clone()]),
        _ => None,
    }
}

fn strip_code_fence(text: &str) -> &str {
    let trimmed = text.trim();
    if !trimmed.starts_with("```") {
        return trimmed;
    }
    let after_open = match trimmed.find('\n') {
        Some(i) => &trimmed[i + 1..],
        None => return trimmed,
    };
    match after_open.rfind("```") {
        Some(i) => after_open[..i].trim(),
        None => after_open.trim(),
    }
}

fn bracketed(text: &str, open: char, close: char) -> Option<String> {
    let start = text.find(open)?;
    let end = text.rfind(close)?;
    (end > start).then(|| text[start..=end].to_string())
}
