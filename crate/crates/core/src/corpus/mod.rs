//! Event schema, documents and their on-disk formats.

mod bucket;
mod io;
mod synth;
mod vocab;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

pub use bucket::{bucketize, BucketReport, DocBuckets, RecordBucket, ScatterBucket};
pub use io::{load_corpus, load_schema, parse_corpus, parse_schema, write_corpus, write_schema, LoadedCorpus, Rejection};
pub use synth::{generate_synthetic, synthetic_schema, GeneratorConfig};
pub use vocab::{Vocab, UNK};

use crate::error::{Result, SeaError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventType {
    pub name: String,
    pub roles: Vec<String>,
}

/// The event types of a dataset and the ordered roles of each.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSchema {
    pub types: Vec<EventType>,
}

impl EventSchema {
    pub fn new(types: Vec<EventType>) -> Result<Self> {
        let schema = Self { types };
        if let Some(msg) = schema.problem() {
            return Err(SeaError::Schema { line: 0, msg });
        }
        Ok(schema)
    }

    /// First invariant violation, if any.
    pub(crate) fn problem(&self) -> Option<String> {
        if self.types.is_empty() {
            return Some("schema declares no event types".into());
        }
        let mut seen = HashSet::new();
        for t in &self.types {
            if !seen.insert(t.name.as_str()) {
                return Some(format!("duplicate event type `{}`", t.name));
            }
            if t.roles.is_empty() {
                return Some(format!("event type `{}` has no roles", t.name));
            }
            let mut roles = HashSet::new();
            for r in &t.roles {
                if !roles.insert(r.as_str()) {
                    return Some(format!("duplicate role `{}` in event type `{}`", r, t.name));
                }
            }
        }
        None
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn total_roles(&self) -> usize {
        self.types.iter().map(|t| t.roles.len()).sum()
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.types.iter().position(|t| t.name == name)
    }

    pub fn role_index(&self, type_index: usize, role: &str) -> Option<usize> {
        self.types.get(type_index)?.roles.iter().position(|r| r == role)
    }
}

/// An entity mention span. `end` is exclusive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldMention {
    pub sentence_index: usize,
    pub start: usize,
    pub end: usize,
    pub entity_type: String,
    pub surface: String,
}

/// One event instance. Roles missing from `args` are unfilled.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_type: String,
    pub args: BTreeMap<String, Option<String>>,
}

impl EventRecord {
    /// `(role, argument)` pairs with a non-null argument.
    pub fn filled(&self) -> impl Iterator<Item = (&str, &str)> {
        self.args.iter().filter_map(|(r, a)| a.as_deref().map(|a| (r.as_str(), a)))
    }

    pub fn arg(&self, role: &str) -> Option<&str> {
        self.args.get(role).and_then(|a| a.as_deref())
    }

    pub fn validate(&self, schema: &EventSchema) -> std::result::Result<(), String> {
        let m = schema
            .type_index(&self.event_type)
            .ok_or_else(|| format!("unknown event type `{}`", self.event_type))?;
        for role in self.args.keys() {
            if schema.role_index(m, role).is_none() {
                return Err(format!("role `{}` is not defined for event type `{}`", role, self.event_type));
            }
        }
        if self.filled().next().is_none() {
            return Err(format!("record of type `{}` has no filled role", self.event_type));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Vec<String>>,
    pub mentions: Vec<GoldMention>,
    pub records: Vec<EventRecord>,
}

impl Document {
    pub fn surface(tokens: &[String]) -> String {
        tokens.join(" ")
    }

    pub fn validate(&self, schema: &EventSchema) -> std::result::Result<(), String> {
        if self.sentences.is_empty() {
            return Err("document has no sentences".into());
        }
        if let Some(i) = self.sentences.iter().position(Vec::is_empty) {
            return Err(format!("sentence {i} is empty"));
        }
        for m in &self.mentions {
            let Some(sent) = self.sentences.get(m.sentence_index) else {
                return Err(format!("mention sentence index {} out of range", m.sentence_index));
            };
            if m.start >= m.end || m.end > sent.len() {
                return Err(format!(
                    "mention span {}..{} out of bounds for sentence {} of length {}",
                    m.start,
                    m.end,
                    m.sentence_index,
                    sent.len()
                ));
            }
        }
        let surfaces: HashSet<&str> = self.mentions.iter().map(|m| m.surface.as_str()).collect();
        for r in &self.records {
            r.validate(schema)?;
            for (role, arg) in r.filled() {
                if !surfaces.contains(arg) {
                    return Err(format!("argument `{arg}` of role `{role}` matches no mention"));
                }
            }
        }
        Ok(())
    }

    /// Number of distinct sentences holding a mention of any argument of `record`.
    pub fn record_sentence_count(&self, record: &EventRecord) -> usize {
        let args: HashSet<&str> = record.filled().map(|(_, a)| a).collect();
        self.mentions
            .iter()
            .filter(|m| args.contains(m.surface.as_str()))
            .map(|m| m.sentence_index)
            .collect::<HashSet<_>>()
            .len()
    }

    /// Mean over records of [`Self::record_sentence_count`]; 0 without records.
    pub fn scattering_score(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let total: usize = self.records.iter().map(|r| self.record_sentence_count(r)).sum();
        total as f64 / self.records.len() as f64
    }

    /// Sorted distinct entity types over the mentions of `docs`.
    pub fn entity_types<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Vec<String> {
        let mut set: Vec<String> = docs
            .into_iter()
            .flat_map(|d| d.mentions.iter().map(|m| m.entity_type.clone()))
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        set.sort();
        set
    }

    /// Gold records grouped by event type index.
    pub fn records_by_type(&self, schema: &EventSchema) -> HashMap<usize, Vec<&EventRecord>> {
        let mut out: HashMap<usize, Vec<&EventRecord>> = HashMap::new();
        for r in &self.records {
            if let Some(m) = schema.type_index(&r.event_type) {
                out.entry(m).or_default().push(r);
            }
        }
        out
    }
}
