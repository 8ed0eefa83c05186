use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{Document, EventRecord, EventSchema, GoldMention};
use crate::error::{Result, SeaError};

fn line_at(text: &str, pos: usize) -> usize {
    text[..pos].matches('\n').count() + 1
}

/// Byte offsets just past each `"key":` in `text`.
fn key_positions(text: &str, key: &str) -> Vec<usize> {
    let quoted = format!("\"{key}\"");
    text.match_indices(&quoted)
        .filter_map(|(pos, _)| {
            let rest = &text[pos + quoted.len()..];
            let trimmed = rest.trim_start();
            trimmed.starts_with(':').then(|| text.len() - trimmed.len() + 1)
        })
        .collect()
}

/// String literals (with their lines) of the JSON value starting at `pos`:
/// one for a string, all direct string items for an array.
fn string_items(text: &str, pos: usize) -> Vec<(String, usize)> {
    let bytes = text.as_bytes();
    let mut i = pos;
    let mut out = Vec::new();
    let mut in_array = false;
    while i < bytes.len() {
        match bytes[i] {
            b'[' if !in_array => in_array = true,
            b']' if in_array => break,
            b'"' => {
                let begin = i + 1;
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
                out.push((text[begin..i.min(bytes.len())].to_string(), line_at(text, begin)));
                if !in_array {
                    break;
                }
            }
            b if b.is_ascii_whitespace() || b == b',' => {}
            _ if !in_array => break,
            _ => {}
        }
        i += 1;
    }
    out
}

pub fn parse_schema(text: &str) -> Result<EventSchema> {
    let schema: EventSchema = serde_json::from_str(text)
        .map_err(|e| SeaError::Schema { line: e.line(), msg: e.to_string() })?;
    let Some(msg) = schema.problem() else {
        return Ok(schema);
    };
    // Map each type back to the source lines of its name and roles. This
    // assumes one "name" and one "roles" key per type, as in the documented layout.
    let names: Vec<usize> = key_positions(text, "name")
        .into_iter()
        .map(|p| string_items(text, p).first().map_or(0, |s| s.1))
        .collect();
    let roles: Vec<Vec<(String, usize)>> =
        key_positions(text, "roles").into_iter().map(|p| string_items(text, p)).collect();
    let located = names.len() == schema.types.len() && roles.len() == schema.types.len();

    let mut line = 0;
    if located {
        let mut seen = std::collections::HashSet::new();
        'outer: for (i, t) in schema.types.iter().enumerate() {
            if !seen.insert(t.name.as_str()) || t.roles.is_empty() {
                line = names[i];
                break;
            }
            let mut role_seen = std::collections::HashSet::new();
            for (r, l) in &roles[i] {
                if !role_seen.insert(r.as_str()) {
                    line = *l;
                    break 'outer;
                }
            }
        }
    }
    Err(SeaError::Schema { line, msg })
}

pub fn load_schema(path: &Path) -> Result<EventSchema> {
    let text = fs::read_to_string(path).map_err(|e| SeaError::io(path, e))?;
    parse_schema(&text)
}

pub fn write_schema(path: &Path, schema: &EventSchema) -> Result<()> {
    let text = serde_json::to_string_pretty(schema)?;
    fs::write(path, text + "\n").map_err(|e| SeaError::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct MentionJson {
    sent: usize,
    start: usize,
    end: usize,
    #[serde(rename = "type")]
    entity_type: String,
}

#[derive(Serialize, Deserialize)]
struct DocumentJson {
    doc_id: String,
    sentences: Vec<Vec<String>>,
    #[serde(default)]
    mentions: Vec<MentionJson>,
    #[serde(default)]
    records: Vec<EventRecord>,
}

impl From<&Document> for DocumentJson {
    fn from(d: &Document) -> Self {
        Self {
            doc_id: d.doc_id.clone(),
            sentences: d.sentences.clone(),
            mentions: d
                .mentions
                .iter()
                .map(|m| MentionJson {
                    sent: m.sentence_index,
                    start: m.start,
                    end: m.end,
                    entity_type: m.entity_type.clone(),
                })
                .collect(),
            records: d.records.clone(),
        }
    }
}

impl DocumentJson {
    fn into_document(self) -> std::result::Result<Document, (String, String)> {
        let mut mentions = Vec::with_capacity(self.mentions.len());
        for m in &self.mentions {
            let sent = self.sentences.get(m.sent).ok_or_else(|| {
                (self.doc_id.clone(), format!("mention sentence index {} out of range", m.sent))
            })?;
            if m.start >= m.end || m.end > sent.len() {
                return Err((
                    self.doc_id.clone(),
                    format!("mention span {}..{} out of bounds for sentence {} of length {}", m.start, m.end, m.sent, sent.len()),
                ));
            }
            mentions.push(GoldMention {
                sentence_index: m.sent,
                start: m.start,
                end: m.end,
                entity_type: m.entity_type.clone(),
                surface: Document::surface(&sent[m.start..m.end]),
            });
        }
        Ok(Document { doc_id: self.doc_id, sentences: self.sentences, mentions, records: self.records })
    }
}

/// A line that could not be turned into a valid document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub doc_id: Option<String>,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct LoadedCorpus {
    pub documents: Vec<Document>,
    pub rejected: Vec<Rejection>,
}

/// Parses JSONL text. Malformed or invalid lines are skipped and reported;
/// this never fails as a whole.
pub fn parse_corpus(text: &str, schema: &EventSchema) -> LoadedCorpus {
    let mut out = LoadedCorpus::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: DocumentJson = match serde_json::from_str(raw) {
            Ok(p) => p,
            Err(e) => {
                let doc_id = serde_json::from_str::<serde_json::Value>(raw)
                    .ok()
                    .and_then(|v| v.get("doc_id").and_then(|d| d.as_str()).map(str::to_string));
                out.rejected.push(Rejection { line, doc_id, reason: e.to_string() });
                continue;
            }
        };
        let doc = match parsed.into_document() {
            Ok(d) => d,
            Err((doc_id, reason)) => {
                out.rejected.push(Rejection { line, doc_id: Some(doc_id), reason });
                continue;
            }
        };
        match doc.validate(schema) {
            Ok(()) => out.documents.push(doc),
            Err(reason) => out.rejected.push(Rejection { line, doc_id: Some(doc.doc_id), reason }),
        }
    }
    for r in &out.rejected {
        warn!("rejected line {} ({}): {}", r.line, r.doc_id.as_deref().unwrap_or("?"), r.reason);
    }
    out
}

pub fn load_corpus(path: &Path, schema: &EventSchema) -> Result<LoadedCorpus> {
    let text = fs::read_to_string(path).map_err(|e| SeaError::io(path, e))?;
    Ok(parse_corpus(&text, schema))
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| SeaError::io(path, e))?;
    for d in docs {
        let line = serde_json::to_string(&DocumentJson::from(d))?;
        writeln!(f, "{line}").map_err(|e| SeaError::io(path, e))?;
    }
    Ok(())
}
