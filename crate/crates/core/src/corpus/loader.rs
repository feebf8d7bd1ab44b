//! Corpus file loading.
//!
//! Two on-disk layouts are accepted: tab-separated with a header row, and
//! JSON lines. Both carry `text_id`, `sent_id`, `text`, and optionally one
//! of two label encodings: 19 presence columns named by canonical value
//! names, or 38 variant columns named `<value> attained` / `<value>
//! constrained` (an underscore is accepted in place of the space).

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{collapse_labels, CorpusError, LabelSet, SentenceRecord, ValueLabel, LABEL_COUNT};

/// On-disk corpus layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Tsv,
    Jsonl,
}

impl CorpusFormat {
    /// Guess the format from a file extension; defaults to TSV.
    pub fn from_path(path: &Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") | Some("ndjson") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Tsv,
        }
    }
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<CorpusFormat, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tsv" => Ok(CorpusFormat::Tsv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(format!("unknown corpus format: {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LabelColumn {
    Presence(ValueLabel),
    Attained(ValueLabel),
    Constrained(ValueLabel),
}

fn classify_label_header(header: &str) -> Option<LabelColumn> {
    let trimmed = header.trim();
    for (suffix, variant) in [(" attained", 0), ("_attained", 0), (" constrained", 1), ("_constrained", 1)] {
        if trimmed.len() > suffix.len()
            && trimmed[trimmed.len() - suffix.len()..].eq_ignore_ascii_case(suffix)
        {
            let base = &trimmed[..trimmed.len() - suffix.len()];
            if let Some(label) = ValueLabel::from_name(base) {
                return Some(if variant == 0 {
                    LabelColumn::Attained(label)
                } else {
                    LabelColumn::Constrained(label)
                });
            }
        }
    }
    ValueLabel::from_name(trimmed).map(LabelColumn::Presence)
}

/// Resolved label encoding of a file or row.
#[derive(Debug)]
enum LabelLayout {
    None,
    Presence(Vec<(usize, ValueLabel)>),
    Variants {
        attained: Vec<(usize, ValueLabel)>,
        constrained: Vec<(usize, ValueLabel)>,
    },
}

fn resolve_layout(columns: &[(usize, LabelColumn)]) -> Result<LabelLayout, CorpusError> {
    if columns.is_empty() {
        return Ok(LabelLayout::None);
    }
    let presence: Vec<(usize, ValueLabel)> = columns
        .iter()
        .filter_map(|(i, c)| match c {
            LabelColumn::Presence(l) => Some((*i, *l)),
            _ => None,
        })
        .collect();
    let attained: Vec<(usize, ValueLabel)> = columns
        .iter()
        .filter_map(|(i, c)| match c {
            LabelColumn::Attained(l) => Some((*i, *l)),
            _ => None,
        })
        .collect();
    let constrained: Vec<(usize, ValueLabel)> = columns
        .iter()
        .filter_map(|(i, c)| match c {
            LabelColumn::Constrained(l) => Some((*i, *l)),
            _ => None,
        })
        .collect();

    if !presence.is_empty() && (!attained.is_empty() || !constrained.is_empty()) {
        return Err(CorpusError::MixedLabelEncodings);
    }

    if !presence.is_empty() {
        if presence.len() != LABEL_COUNT {
            return Err(CorpusError::IncompleteLabelColumns {
                expected: format!("{LABEL_COUNT} presence columns"),
                found: presence.len(),
                missing: missing_names(&presence),
            });
        }
        return Ok(LabelLayout::Presence(presence));
    }

    if attained.len() != LABEL_COUNT || constrained.len() != LABEL_COUNT {
        return Err(CorpusError::IncompleteLabelColumns {
            expected: format!("{LABEL_COUNT} attained + {LABEL_COUNT} constrained columns"),
            found: attained.len() + constrained.len(),
            missing: String::new(),
        });
    }
    Ok(LabelLayout::Variants { attained, constrained })
}

fn missing_names(found: &[(usize, ValueLabel)]) -> String {
    let present: HashSet<ValueLabel> = found.iter().map(|(_, l)| *l).collect();
    let missing: Vec<&str> = ValueLabel::ALL
        .iter()
        .filter(|l| !present.contains(l))
        .map(|l| l.name())
        .collect();
    if missing.is_empty() {
        String::new()
    } else {
        format!(" (missing: {})", missing.join(", "))
    }
}

fn parse_flag(raw: &str, row: u64, field: &str) -> Result<bool, CorpusError> {
    match raw.trim() {
        "0" | "false" | "False" => Ok(false),
        "1" | "true" | "True" => Ok(true),
        other => Err(CorpusError::MalformedField {
            row,
            field: field.to_string(),
            reason: format!("expected 0/1 flag, got {other:?}"),
        }),
    }
}

/// Load sentence records from `path`, preserving file order. Gold labels
/// are populated when label fields are present and collapsed to value
/// presence.
pub fn load_sentences(path: &Path, format: CorpusFormat) -> Result<Vec<SentenceRecord>, CorpusError> {
    let records = match format {
        CorpusFormat::Tsv => load_tsv(path)?,
        CorpusFormat::Jsonl => load_jsonl(path)?,
    };

    let mut seen: HashSet<(String, u32)> = HashSet::new();
    for record in &records {
        if !seen.insert((record.text_id.clone(), record.sent_id)) {
            return Err(CorpusError::DuplicateSentence {
                text_id: record.text_id.clone(),
                sent_id: record.sent_id,
            });
        }
    }
    Ok(records)
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io { path: path.display().to_string(), source }
}

fn load_tsv(path: &Path) -> Result<Vec<SentenceRecord>, CorpusError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_reader(BufReader::new(file));

    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Parse { row: 1, reason: e.to_string() })?
        .clone();

    let mut text_id_col = None;
    let mut sent_id_col = None;
    let mut text_col = None;
    let mut label_columns: Vec<(usize, LabelColumn)> = Vec::new();
    for (i, header) in headers.iter().enumerate() {
        let h = header.trim();
        if h.eq_ignore_ascii_case("text_id") {
            text_id_col = Some(i);
        } else if h.eq_ignore_ascii_case("sent_id") {
            sent_id_col = Some(i);
        } else if h.eq_ignore_ascii_case("text") {
            text_col = Some(i);
        } else if let Some(col) = classify_label_header(h) {
            label_columns.push((i, col));
        }
    }
    let text_id_col = text_id_col.ok_or(CorpusError::MissingField { row: 1, field: "text_id".into() })?;
    let sent_id_col = sent_id_col.ok_or(CorpusError::MissingField { row: 1, field: "sent_id".into() })?;
    let text_col = text_col.ok_or(CorpusError::MissingField { row: 1, field: "text".into() })?;
    let layout = resolve_layout(&label_columns)?;

    let mut records = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| CorpusError::Parse {
            row: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);

        let field = |idx: usize, name: &str| -> Result<&str, CorpusError> {
            record
                .get(idx)
                .ok_or_else(|| CorpusError::MissingField { row, field: name.to_string() })
        };

        let text_id = field(text_id_col, "text_id")?.trim().to_string();
        if text_id.is_empty() {
            return Err(CorpusError::MissingField { row, field: "text_id".into() });
        }
        let sent_id_raw = field(sent_id_col, "sent_id")?.trim();
        let sent_id: u32 = sent_id_raw.parse().map_err(|_| CorpusError::MalformedField {
            row,
            field: "sent_id".into(),
            reason: format!("expected non-negative integer, got {sent_id_raw:?}"),
        })?;
        let text = field(text_col, "text")?.trim().to_string();
        if text.is_empty() {
            return Err(CorpusError::EmptyText { row });
        }

        let gold = match &layout {
            LabelLayout::None => None,
            LabelLayout::Presence(cols) => {
                let mut set = LabelSet::empty();
                for (idx, label) in cols {
                    if parse_flag(field(*idx, label.name())?, row, label.name())? {
                        set.insert(*label);
                    }
                }
                Some(set)
            }
            LabelLayout::Variants { attained, constrained } => {
                let mut att = [false; LABEL_COUNT];
                let mut con = [false; LABEL_COUNT];
                for (idx, label) in attained {
                    att[label.index()] = parse_flag(field(*idx, label.name())?, row, label.name())?;
                }
                for (idx, label) in constrained {
                    con[label.index()] = parse_flag(field(*idx, label.name())?, row, label.name())?;
                }
                Some(collapse_labels(&att, &con)?)
            }
        };

        records.push(SentenceRecord { text_id, sent_id, text, gold });
    }
    Ok(records)
}

fn load_jsonl(path: &Path) -> Result<Vec<SentenceRecord>, CorpusError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);

    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let row = i as u64 + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Parse { row, reason: e.to_string() })?;
        let obj = value
            .as_object()
            .ok_or_else(|| CorpusError::Parse { row, reason: "expected a JSON object".into() })?;

        let text_id = obj
            .get("text_id")
            .and_then(|v| v.as_str())
            .ok_or(CorpusError::MissingField { row, field: "text_id".into() })?
            .trim()
            .to_string();
        if text_id.is_empty() {
            return Err(CorpusError::MissingField { row, field: "text_id".into() });
        }
        let sent_id = obj
            .get("sent_id")
            .and_then(|v| v.as_u64())
            .ok_or(CorpusError::MissingField { row, field: "sent_id".into() })?
            as u32;
        let text = obj
            .get("text")
            .and_then(|v| v.as_str())
            .ok_or(CorpusError::MissingField { row, field: "text".into() })?
            .trim()
            .to_string();
        if text.is_empty() {
            return Err(CorpusError::EmptyText { row });
        }

        let mut label_columns: Vec<(usize, LabelColumn)> = Vec::new();
        let mut flags: Vec<bool> = Vec::new();
        for (key, value) in obj {
            if ["text_id", "sent_id", "text"].contains(&key.as_str()) {
                continue;
            }
            if let Some(col) = classify_label_header(key) {
                let flag = match value {
                    serde_json::Value::Bool(b) => *b,
                    serde_json::Value::Number(n) if n.as_u64() == Some(0) => false,
                    serde_json::Value::Number(n) if n.as_u64() == Some(1) => true,
                    other => {
                        return Err(CorpusError::MalformedField {
                            row,
                            field: key.clone(),
                            reason: format!("expected 0/1 flag, got {other}"),
                        })
                    }
                };
                label_columns.push((flags.len(), col));
                flags.push(flag);
            }
        }

        let gold = match resolve_layout(&label_columns)? {
            LabelLayout::None => None,
            LabelLayout::Presence(cols) => {
                let mut set = LabelSet::empty();
                for (idx, label) in cols {
                    if flags[idx] {
                        set.insert(label);
                    }
                }
                Some(set)
            }
            LabelLayout::Variants { attained, constrained } => {
                let mut att = [false; LABEL_COUNT];
                let mut con = [false; LABEL_COUNT];
                for (idx, label) in attained {
                    att[label.index()] = flags[idx];
                }
                for (idx, label) in constrained {
                    con[label.index()] = flags[idx];
                }
                Some(collapse_labels(&att, &con)?)
            }
        };

        records.push(SentenceRecord { text_id, sent_id, text, gold });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(contents: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        file.write_all(contents.as_bytes()).unwrap();
        file
    }

    fn variant_header() -> String {
        let mut cols = vec!["text_id".to_string(), "sent_id".to_string(), "text".to_string()];
        for label in ValueLabel::ALL {
            cols.push(format!("{} attained", label.name()));
            cols.push(format!("{} constrained", label.name()));
        }
        cols.join("\t")
    }

    fn variant_row(text_id: &str, sent_id: u32, text: &str, set: &[ValueLabel]) -> String {
        let mut cols = vec![text_id.to_string(), sent_id.to_string(), text.to_string()];
        for label in ValueLabel::ALL {
            let attained = set.contains(&label);
            cols.push(if attained { "1".into() } else { "0".into() });
            cols.push("0".to_string());
        }
        cols.join("\t")
    }

    #[test]
    fn loads_variant_tsv_and_collapses() {
        let contents = format!(
            "{}\n{}\n",
            variant_header(),
            variant_row("D1", 0, "x", &[ValueLabel::Achievement])
        );
        let file = write_temp(&contents, ".tsv");
        let records = load_sentences(file.path(), CorpusFormat::Tsv).unwrap();
        assert_eq!(records.len(), 1);
        let gold = records[0].gold.unwrap();
        assert_eq!(gold, LabelSet::empty().with(ValueLabel::Achievement));
    }

    #[test]
    fn loads_presence_tsv() {
        let mut cols = vec!["text_id".to_string(), "sent_id".to_string(), "text".to_string()];
        cols.extend(ValueLabel::ALL.iter().map(|l| l.name().to_string()));
        let header = cols.join("\t");
        let mut row = vec!["D1".to_string(), "3".to_string(), "hello world".to_string()];
        for label in ValueLabel::ALL {
            row.push(if label == ValueLabel::Face { "1".into() } else { "0".into() });
        }
        let contents = format!("{header}\n{}\n", row.join("\t"));
        let file = write_temp(&contents, ".tsv");
        let records = load_sentences(file.path(), CorpusFormat::Tsv).unwrap();
        assert_eq!(records[0].gold.unwrap(), LabelSet::empty().with(ValueLabel::Face));
        assert_eq!(records[0].sent_id, 3);
    }

    #[test]
    fn unlabeled_tsv_yields_no_gold() {
        let contents = "text_id\tsent_id\ttext\nD1\t0\tplain sentence\n";
        let file = write_temp(contents, ".tsv");
        let records = load_sentences(file.path(), CorpusFormat::Tsv).unwrap();
        assert_eq!(records[0].gold, None);
    }

    #[test]
    fn missing_text_column_is_named() {
        let contents = "text_id\tsent_id\nD1\t0\n";
        let file = write_temp(contents, ".tsv");
        let err = load_sentences(file.path(), CorpusFormat::Tsv).unwrap_err();
        assert!(err.to_string().contains("missing field: text"), "got: {err}");
    }

    #[test]
    fn duplicate_sentence_is_rejected() {
        let contents = "text_id\tsent_id\ttext\nD1\t0\ta\nD1\t0\tb\n";
        let file = write_temp(contents, ".tsv");
        let err = load_sentences(file.path(), CorpusFormat::Tsv).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateSentence { .. }));
    }

    #[test]
    fn empty_text_is_rejected_not_dropped() {
        let contents = "text_id\tsent_id\ttext\nD1\t0\t   \n";
        let file = write_temp(contents, ".tsv");
        let err = load_sentences(file.path(), CorpusFormat::Tsv).unwrap_err();
        assert!(matches!(err, CorpusError::EmptyText { .. }));
    }

    #[test]
    fn incomplete_presence_columns_error_lists_missing() {
        let contents = "text_id\tsent_id\ttext\tAchievement\nD1\t0\tx\t1\n";
        let file = write_temp(contents, ".tsv");
        let err = load_sentences(file.path(), CorpusFormat::Tsv).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("19 presence columns"), "got: {msg}");
        assert!(msg.contains("Face"), "got: {msg}");
    }

    #[test]
    fn loads_jsonl_with_underscore_variant_keys() {
        let mut obj = serde_json::Map::new();
        obj.insert("text_id".into(), "D7".into());
        obj.insert("sent_id".into(), 2u32.into());
        obj.insert("text".into(), "a sentence".into());
        for label in ValueLabel::ALL {
            let attained = label == ValueLabel::Tradition;
            obj.insert(format!("{}_attained", label.name()), u32::from(attained).into());
            obj.insert(format!("{}_constrained", label.name()), 0u32.into());
        }
        let contents = format!("{}\n", serde_json::Value::Object(obj));
        let file = write_temp(&contents, ".jsonl");
        let records = load_sentences(file.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(records[0].gold.unwrap(), LabelSet::empty().with(ValueLabel::Tradition));
    }

    #[test]
    fn jsonl_missing_text_is_named() {
        let contents = "{\"text_id\": \"D1\", \"sent_id\": 0}\n";
        let file = write_temp(contents, ".jsonl");
        let err = load_sentences(file.path(), CorpusFormat::Jsonl).unwrap_err();
        assert!(err.to_string().contains("missing field: text"));
    }

    #[test]
    fn file_order_is_preserved() {
        let contents = "text_id\tsent_id\ttext\nD2\t5\ta\nD1\t0\tb\nD2\t1\tc\n";
        let file = write_temp(contents, ".tsv");
        let records = load_sentences(file.path(), CorpusFormat::Tsv).unwrap();
        let keys: Vec<(String, u32)> = records.iter().map(|r| r.key()).collect();
        assert_eq!(keys, vec![("D2".into(), 5), ("D1".into(), 0), ("D2".into(), 1)]);
    }
}
