//! Seeded synthetic corpora with scattered arguments and multi-record documents.
//!
//! Token inventory:
//! - `w{i}` filler words, `trig{m}` one trigger word per event type,
//! - `cue{m}_{n}` a context word placed right before each argument of role `n`,
//! - `e{t}_{j}` entity `j` of entity type `t`, optionally followed by `sfx{t}`,
//! - `dcue` before distractor entities in event-unrelated sentences.
//!
//! Each record's arguments land in exactly `min(scatter_spread, #filled args)`
//! distinct sentences (when no argument is shared with an earlier record).
//! Records occupy consecutive blocks of sentences in order; distractor
//! sentences are interleaved at random positions.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Document, EventRecord, EventSchema, EventType, GoldMention};
use crate::error::{Result, SeaError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub num_documents: usize,
    /// Number of distinct filler words.
    pub vocab_size: usize,
    pub sentence_len_min: usize,
    pub sentence_len_max: usize,
    pub sentences_min: usize,
    pub sentences_max: usize,
    pub multi_event_prob: f64,
    /// Chance that a later record of the same type reuses one argument of an earlier one.
    pub shared_arg_prob: f64,
    /// Distinct sentences a record's arguments are spread over.
    pub scatter_spread: usize,
    pub num_event_types: usize,
    pub roles_per_type: usize,
    pub num_entity_types: usize,
    pub entity_pool_size: usize,
    /// Upper bound on records in a multi-record document (at least 2).
    pub max_records: usize,
    pub null_role_prob: f64,
    /// Event-unrelated sentences injected into every document.
    pub distractor_sentences: usize,
    pub max_entity_tokens: usize,
    pub max_sentence_tokens: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_documents: 50,
            vocab_size: 60,
            sentence_len_min: 5,
            sentence_len_max: 10,
            sentences_min: 6,
            sentences_max: 12,
            multi_event_prob: 0.3,
            shared_arg_prob: 0.3,
            scatter_spread: 5,
            num_event_types: 3,
            roles_per_type: 4,
            num_entity_types: 3,
            entity_pool_size: 40,
            max_records: 2,
            null_role_prob: 0.15,
            distractor_sentences: 1,
            max_entity_tokens: 2,
            max_sentence_tokens: 128,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(SeaError::Config(m));
        if self.vocab_size == 0 {
            return err("vocab_size must be at least 1".into());
        }
        if self.sentence_len_min == 0 || self.sentence_len_min > self.sentence_len_max {
            return err(format!(
                "sentence length range {}..={} is empty",
                self.sentence_len_min, self.sentence_len_max
            ));
        }
        if self.sentences_min == 0 || self.sentences_min > self.sentences_max {
            return err(format!("sentence count range {}..={} is empty", self.sentences_min, self.sentences_max));
        }
        for (name, p) in [
            ("multi_event_prob", self.multi_event_prob),
            ("shared_arg_prob", self.shared_arg_prob),
            ("null_role_prob", self.null_role_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("{name} = {p} is not a probability"));
            }
        }
        if self.null_role_prob >= 1.0 {
            return err("null_role_prob must be below 1".into());
        }
        if self.num_event_types == 0 || self.roles_per_type == 0 || self.num_entity_types == 0 {
            return err("event types, roles and entity types must all be at least 1".into());
        }
        if self.scatter_spread == 0 {
            return err("scatter_spread must be at least 1".into());
        }
        if self.max_records < 2 && self.multi_event_prob > 0.0 {
            return err("max_records must be at least 2 when multi_event_prob > 0".into());
        }
        if self.max_entity_tokens == 0 {
            return err("max_entity_tokens must be at least 1".into());
        }
        let records = self.max_records.max(1);
        let spread = self.scatter_spread.min(self.roles_per_type);
        let needed = records * spread + self.distractor_sentences;
        if needed > self.sentences_max {
            return err(format!(
                "documents need up to {needed} sentences ({records} records x {spread} + {} distractors) but sentences_max is {}",
                self.distractor_sentences, self.sentences_max
            ));
        }
        let entities = records * self.roles_per_type + self.distractor_sentences;
        if self.entity_pool_size < entities {
            return err(format!(
                "entity_pool_size {} cannot supply {entities} distinct entities per document",
                self.entity_pool_size
            ));
        }
        let worst = records * (self.roles_per_type * (1 + self.max_entity_tokens) + 1) + self.sentence_len_max;
        if worst > self.max_sentence_tokens {
            return err(format!(
                "a sentence may need {worst} tokens to hold its arguments, more than the capacity of {}",
                self.max_sentence_tokens
            ));
        }
        Ok(())
    }
}

pub fn synthetic_schema(cfg: &GeneratorConfig) -> EventSchema {
    EventSchema {
        types: (0..cfg.num_event_types)
            .map(|m| EventType {
                name: format!("Event{m}"),
                roles: (0..cfg.roles_per_type).map(|n| format!("R{n}")).collect(),
            })
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Entity {
    etype: usize,
    id: usize,
}

impl Entity {
    fn tokens(self, max_tokens: usize) -> Vec<String> {
        let extra = self.id % max_tokens;
        let mut t = vec![format!("e{}_{}", self.etype, self.id)];
        t.extend((0..extra).map(|_| format!("sfx{}", self.etype)));
        t
    }
}

struct PlannedRecord {
    event_type: usize,
    args: Vec<Option<Entity>>,
    /// Roles whose entity was copied from an earlier record.
    shared: Vec<bool>,
}

/// A contiguous token run placed inside a sentence; the mention (if any)
/// covers `tokens[mention_from..]`.
struct Segment {
    tokens: Vec<String>,
    mention: Option<(usize, Entity)>,
}

pub fn generate_synthetic(cfg: &GeneratorConfig, seed: u64) -> Result<Vec<Document>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cfg.num_documents).map(|i| generate_document(cfg, &mut rng, format!("syn-{seed}-{i:05}"))).collect()
}

fn role_entity_type(cfg: &GeneratorConfig, m: usize, n: usize) -> usize {
    (m + n) % cfg.num_entity_types
}

fn fresh_entity(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng, etype: usize, used: &mut HashSet<Entity>) -> Entity {
    loop {
        let e = Entity { etype, id: rng.gen_range(0..cfg.entity_pool_size) };
        if used.insert(e) {
            return e;
        }
    }
}

fn plan_records(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng, used: &mut HashSet<Entity>) -> Vec<PlannedRecord> {
    let count = if rng.gen::<f64>() < cfg.multi_event_prob { rng.gen_range(2..=cfg.max_records) } else { 1 };
    let mut records: Vec<PlannedRecord> = Vec::with_capacity(count);
    for r in 0..count {
        let event_type = if r > 0 && rng.gen::<f64>() < 0.5 {
            records[rng.gen_range(0..r)].event_type
        } else {
            rng.gen_range(0..cfg.num_event_types)
        };
        let mut filled: Vec<bool> =
            (0..cfg.roles_per_type).map(|_| rng.gen::<f64>() >= cfg.null_role_prob).collect();
        if !filled.iter().any(|&f| f) {
            let n = rng.gen_range(0..cfg.roles_per_type);
            filled[n] = true;
        }
        let mut shared = vec![false; cfg.roles_per_type];
        let mut args: Vec<Option<Entity>> = vec![None; cfg.roles_per_type];
        let earlier: Vec<usize> = (0..r).filter(|&q| records[q].event_type == event_type).collect();
        if !earlier.is_empty() && rng.gen::<f64>() < cfg.shared_arg_prob {
            let src = &records[earlier[rng.gen_range(0..earlier.len())]];
            let candidates: Vec<usize> = (0..cfg.roles_per_type).filter(|&n| src.args[n].is_some()).collect();
            if let Some(&n) = candidates.choose(rng) {
                args[n] = src.args[n];
                filled[n] = true;
                shared[n] = true;
            }
        }
        for n in 0..cfg.roles_per_type {
            if filled[n] && args[n].is_none() {
                args[n] = Some(fresh_entity(cfg, rng, role_entity_type(cfg, event_type, n), used));
            }
        }
        records.push(PlannedRecord { event_type, args, shared });
    }
    records
}

fn generate_document(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng, doc_id: String) -> Result<Document> {
    let mut used = HashSet::new();
    let records = plan_records(cfg, rng, &mut used);

    // Place arguments in "event sentence" index space first.
    let mut event_segments: Vec<Vec<Segment>> = Vec::new();
    let mut placed: Vec<(Entity, usize)> = Vec::new();
    for rec in &records {
        let m = rec.event_type;
        let shared_sentences: Vec<usize> = {
            let mut s: Vec<usize> = rec
                .args
                .iter()
                .zip(&rec.shared)
                .filter(|(_, &sh)| sh)
                .filter_map(|(a, _)| a.and_then(|e| placed.iter().find(|(pe, _)| *pe == e).map(|p| p.1)))
                .collect();
            s.sort_unstable();
            s.dedup();
            s
        };
        let mut new_args: Vec<(usize, Entity)> = rec
            .args
            .iter()
            .enumerate()
            .filter(|(n, _)| !rec.shared[*n])
            .filter_map(|(n, a)| a.map(|e| (n, e)))
            .collect();
        new_args.shuffle(rng);
        let k = cfg.scatter_spread.min(new_args.len() + shared_sentences.len());
        let fresh = k.saturating_sub(shared_sentences.len());
        let block_start = event_segments.len();
        event_segments.extend((0..fresh).map(|_| Vec::new()));
        let mut chosen: Vec<usize> = shared_sentences.clone();
        chosen.extend(block_start..block_start + fresh);

        for (i, (n, e)) in new_args.into_iter().enumerate() {
            let sentence = if i < fresh { block_start + i } else { chosen[rng.gen_range(0..chosen.len())] };
            let mut tokens = vec![format!("cue{m}_{n}")];
            tokens.extend(e.tokens(cfg.max_entity_tokens));
            event_segments[sentence].push(Segment { tokens, mention: Some((1, e)) });
            placed.push((e, sentence));
        }
        let trigger_sentence = if fresh > 0 { block_start } else { chosen[0] };
        event_segments[trigger_sentence].push(Segment { tokens: vec![format!("trig{m}")], mention: None });
    }

    let event_count = event_segments.len();
    let sampled = rng.gen_range(cfg.sentences_min..=cfg.sentences_max);
    let total = sampled.max(event_count + cfg.distractor_sentences);
    let mut positions: Vec<usize> = (0..total).collect();
    positions.shuffle(rng);
    let mut distractor_slots: Vec<usize> = positions[..total - event_count].to_vec();
    distractor_slots.sort_unstable();

    let mut layout: Vec<Vec<Segment>> = Vec::with_capacity(total);
    let mut events = event_segments.into_iter();
    for pos in 0..total {
        if distractor_slots.binary_search(&pos).is_ok() {
            let mut segs = Vec::new();
            if rng.gen::<f64>() < 0.5 {
                let etype = rng.gen_range(0..cfg.num_entity_types);
                let e = fresh_entity(cfg, rng, etype, &mut used);
                let mut tokens = vec!["dcue".to_string()];
                tokens.extend(e.tokens(cfg.max_entity_tokens));
                segs.push(Segment { tokens, mention: Some((1, e)) });
            }
            layout.push(segs);
        } else {
            layout.push(events.next().expect("event sentence count matches layout"));
        }
    }

    let mut sentences = Vec::with_capacity(total);
    let mut mentions = Vec::new();
    for (si, segs) in layout.into_iter().enumerate() {
        let seg_tokens: usize = segs.iter().map(|s| s.tokens.len()).sum();
        let target = rng.gen_range(cfg.sentence_len_min..=cfg.sentence_len_max);
        let fillers = target.saturating_sub(seg_tokens);
        // Units: Some(segment) or None for one filler word.
        let mut units: Vec<Option<Segment>> = segs.into_iter().map(Some).collect();
        units.extend((0..fillers).map(|_| None));
        units.shuffle(rng);
        let mut tokens: Vec<String> = Vec::with_capacity(seg_tokens + fillers);
        for u in units {
            match u {
                None => tokens.push(format!("w{}", rng.gen_range(0..cfg.vocab_size))),
                Some(seg) => {
                    if let Some((from, e)) = seg.mention {
                        let start = tokens.len() + from;
                        let end = tokens.len() + seg.tokens.len();
                        mentions.push(GoldMention {
                            sentence_index: si,
                            start,
                            end,
                            entity_type: format!("ENT{}", e.etype),
                            surface: Document::surface(&seg.tokens[from..]),
                        });
                    }
                    tokens.extend(seg.tokens);
                }
            }
        }
        sentences.push(tokens);
    }

    let schema = synthetic_schema(cfg);
    let gold = records
        .iter()
        .map(|r| {
            let roles = &schema.types[r.event_type].roles;
            let args: BTreeMap<String, Option<String>> = roles
                .iter()
                .zip(&r.args)
                .map(|(role, a)| {
                    (role.clone(), a.map(|e| Document::surface(&e.tokens(cfg.max_entity_tokens))))
                })
                .collect();
            EventRecord { event_type: schema.types[r.event_type].name.clone(), args }
        })
        .collect();

    let doc = Document { doc_id, sentences, mentions, records: gold };
    doc.validate(&schema).map_err(|msg| SeaError::Document { doc_id: doc.doc_id.clone(), msg })?;
    Ok(doc)
}
