//! Benchmark fixtures.

use sea_core::corpus::{generate_synthetic, synthetic_schema, Document, GeneratorConfig};
use sea_core::model::{ModelConfig, SeaModel};

/// A small generated corpus and an untrained model sized for it.
pub struct Fixture {
    pub docs: Vec<Document>,
    pub model: SeaModel,
}

pub fn fixture(d_model: usize, seed: u64) -> Fixture {
    let gen = GeneratorConfig { num_documents: 8, ..GeneratorConfig::default() };
    let docs = generate_synthetic(&gen, seed).expect("generator config is valid");
    let cfg = ModelConfig { d_model, d_ff: 2 * d_model, dropout: 0.0, ..ModelConfig::default() };
    let model = SeaModel::for_corpus(cfg, synthetic_schema(&gen), &docs, seed).expect("model config is valid");
    Fixture { docs, model }
}
