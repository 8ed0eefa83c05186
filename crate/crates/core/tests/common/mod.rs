//! Fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod checks;

use std::collections::BTreeMap;

use sea_core::corpus::{Document, EventRecord, EventSchema, EventType, GoldMention};
use sea_core::model::{ModelConfig, SeaModel};

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

pub fn mention(sentence_index: usize, start: usize, end: usize, entity_type: &str, words: &[String]) -> GoldMention {
    GoldMention {
        sentence_index,
        start,
        end,
        entity_type: entity_type.into(),
        surface: words[start..end].join(" "),
    }
}

pub fn record(event_type: &str, args: &[(&str, Option<&str>)]) -> EventRecord {
    EventRecord {
        event_type: event_type.into(),
        args: args.iter().map(|(r, a)| (r.to_string(), a.map(str::to_string))).collect::<BTreeMap<_, _>>(),
    }
}

pub fn toy_schema() -> EventSchema {
    EventSchema::new(vec![
        EventType { name: "Pledge".into(), roles: vec!["Pledger".into(), "Pledgee".into()] },
        EventType { name: "Freeze".into(), roles: vec!["Holder".into(), "Court".into()] },
    ])
    .unwrap()
}

/// Two sentences; a Pledge record whose arguments are split across them,
/// with one entity mentioned twice.
pub fn toy_document() -> Document {
    let s0 = toks("acme pledged shares to bank");
    let s1 = toks("bank and acme confirmed");
    Document {
        doc_id: "toy".into(),
        mentions: vec![
            mention(0, 0, 1, "ORG", &s0),
            mention(0, 4, 5, "ORG", &s0),
            mention(1, 0, 1, "ORG", &s1),
            mention(1, 2, 3, "ORG", &s1),
        ],
        records: vec![record("Pledge", &[("Pledger", Some("acme")), ("Pledgee", Some("bank"))])],
        sentences: vec![s0, s1],
    }
}

/// A tiny model configuration for finite-difference checks.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        d_model: 4,
        heads: 2,
        encoder_layers: 1,
        ere_layers: 1,
        d_ff: 6,
        dropout: 0.0,
        max_tokens: 8,
        max_sentences: 4,
        ..ModelConfig::default()
    }
}

pub fn tiny_model(cfg: ModelConfig, seed: u64) -> SeaModel {
    let doc = toy_document();
    SeaModel::for_corpus(cfg, toy_schema(), std::slice::from_ref(&doc), seed).unwrap()
}

/// Adds seeded noise to every parameter so no activation sits exactly on a
/// ReLU or max-pool kink (zero-initialized biases otherwise put dead units
/// exactly at zero).
pub fn jitter(model: &mut SeaModel, std: f64, seed: u64) {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).unwrap();
    for p in model.store.iter_mut() {
        for v in p.value.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
}

/// A one-sentence document whose sentence lists every argument of `records`
/// once, each as a single-token mention.
pub fn flat_doc(doc_id: &str, records: Vec<EventRecord>) -> Document {
    let mut words: Vec<String> = Vec::new();
    for r in &records {
        for (_, a) in r.filled() {
            if !words.iter().any(|w| w == a) {
                words.push(a.to_string());
            }
        }
    }
    let mentions = (0..words.len()).map(|i| mention(0, i, i + 1, "ORG", &words)).collect();
    Document { doc_id: doc_id.into(), sentences: vec![words], mentions, records }
}

/// Training setup of the desk-scale experiments: a narrow model without
/// dropout, which the small synthetic corpora need to fit within budget.
pub fn experiment_config(seed: u64, ablation: sea_core::model::Ablation, epochs: usize) -> sea_core::train::TrainConfig {
    use sea_core::eagn::GcnConfig;
    sea_core::train::TrainConfig {
        epochs,
        lr: 2e-3,
        seed,
        model: ModelConfig {
            d_model: 32,
            d_ff: 64,
            dropout: 0.0,
            gcn: GcnConfig { dropout: 0.0, ..GcnConfig::default() },
            ablation,
            ..ModelConfig::default()
        },
        ..sea_core::train::TrainConfig::default()
    }
}
