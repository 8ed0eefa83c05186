//! Sentence encoding, sentence representations, CRF entity recognition and
//! mention pooling.

mod bio;
mod sampling;

use serde::{Deserialize, Serialize};

pub use bio::{harvest_spans, LabelSet, Span, Tag, OUTSIDE};
pub use sampling::{scheduled_source, MentionSource, SamplingSchedule};

use crate::autodiff::{Tape, Var};
use crate::crf;
use crate::error::{Result, SeaError};
use crate::nn::{Linear, TransformerConfig, TransformerStack};
use crate::params::{ParamId, ParamStore, INIT_STD};
use crate::tensor::Tensor;

/// Initial values of the sentence position table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionInit {
    /// Sine/cosine waves of geometric wavelengths, unit amplitude: nearby
    /// positions start with similar vectors.
    #[default]
    Sinusoidal,
    /// Small seeded normal noise, like the other embedding tables.
    Normal,
}

/// `rows x d` table with `sin(p / 10000^(2i/d))` in column `2i` and the
/// matching cosine in column `2i + 1`.
pub fn sinusoidal_table(rows: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(&[rows, d]);
    for p in 0..rows {
        for c in 0..d {
            let freq = 10000f64.powf(-((c / 2 * 2) as f64) / d as f64);
            let angle = p as f64 * freq;
            t.set(p, c, if c % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    t
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub num_labels: usize,
    pub transformer: TransformerConfig,
    pub max_tokens: usize,
    pub max_sentences: usize,
    pub sentence_position_init: PositionInit,
}

/// Token embeddings, the sentence Transformer, sentence position embeddings
/// and the CRF tagger on top.
#[derive(Clone, Debug)]
pub struct DocumentEncoder {
    pub token_embedding: ParamId,
    pub token_position: ParamId,
    pub sentence_position: ParamId,
    pub transformer: TransformerStack,
    pub emission: Linear,
    pub transitions: ParamId,
    pub cfg: EncoderConfig,
}

/// A pooled entity mention inside a document.
#[derive(Clone, Debug, PartialEq)]
pub struct MentionRep {
    pub vector: Var,
    pub sentence_index: usize,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    /// Mentions sharing a key refer to the same entity.
    pub entity_key: String,
}

impl DocumentEncoder {
    pub fn new(store: &mut ParamStore, name: &str, cfg: EncoderConfig) -> Result<Self> {
        let d = cfg.transformer.d_model;
        if cfg.max_tokens == 0 || cfg.max_sentences == 0 {
            return Err(SeaError::Config("max_tokens and max_sentences must be positive".into()));
        }
        Ok(Self {
            token_embedding: store.normal(&format!("{name}.token_embedding"), &[cfg.vocab_size, d], INIT_STD)?,
            token_position: store.normal(&format!("{name}.token_position"), &[cfg.max_tokens, d], INIT_STD)?,
            sentence_position: match cfg.sentence_position_init {
                PositionInit::Sinusoidal => {
                    store.add(&format!("{name}.sentence_position"), sinusoidal_table(cfg.max_sentences, d))?
                }
                PositionInit::Normal => {
                    store.normal(&format!("{name}.sentence_position"), &[cfg.max_sentences, d], INIT_STD)?
                }
            },
            transformer: TransformerStack::new(store, &format!("{name}.transformer"), &cfg.transformer)?,
            emission: Linear::new(store, &format!("{name}.emission"), d, cfg.num_labels)?,
            transitions: store.zeros(&format!("{name}.transitions"), &[cfg.num_labels, cfg.num_labels])?,
            cfg,
        })
    }

    /// Token representations (`n × d`) of one sentence of vocabulary ids.
    /// Callers truncate sentences to `max_tokens` beforehand.
    pub fn encode_sentence(&self, tape: &mut Tape, token_ids: &[usize]) -> Result<Var> {
        if token_ids.is_empty() {
            return Err(SeaError::Config("cannot encode an empty sentence".into()));
        }
        if token_ids.len() > self.cfg.max_tokens {
            return Err(SeaError::Config(format!(
                "sentence of {} tokens exceeds max_tokens {}",
                token_ids.len(),
                self.cfg.max_tokens
            )));
        }
        let table = tape.param(self.token_embedding);
        let emb = tape.select_rows(table, token_ids)?;
        let pos_table = tape.param(self.token_position);
        let pos = tape.slice_rows(pos_table, 0, token_ids.len())?;
        let x = tape.add(emb, pos)?;
        let x = tape.dropout(x, self.cfg.transformer.dropout)?;
        self.transformer.forward(tape, x)
    }

    /// Max-pool over tokens plus the embedding of the sentence's position.
    pub fn sentence_representation(&self, tape: &mut Tape, tokens: Var, index: usize) -> Result<Var> {
        if index >= self.cfg.max_sentences {
            return Err(SeaError::Config(format!(
                "sentence index {index} exceeds max_sentences {}",
                self.cfg.max_sentences
            )));
        }
        let pooled = tape.max_pool_rows(tokens)?;
        let table = tape.param(self.sentence_position);
        let pos = tape.slice_rows(table, index, index + 1)?;
        Ok(tape.add(pooled, pos)?)
    }

    /// Per-token label scores (`n × L`).
    pub fn emissions(&self, tape: &mut Tape, tokens: Var) -> Result<Var> {
        self.emission.forward(tape, tokens)
    }

    /// Negative log-likelihood of `gold` under the CRF.
    pub fn crf_loss(&self, tape: &mut Tape, emissions: Var, gold: &[usize]) -> Result<Var> {
        let tr = tape.param(self.transitions);
        Ok(tape.crf_nll(emissions, tr, gold)?)
    }

    /// Highest-scoring label sequence for already computed emissions.
    pub fn crf_decode(&self, tape: &Tape, emissions: Var) -> Vec<usize> {
        let em = tape.value(emissions);
        let (n, l) = em.dims2();
        let tr = tape.store().value(self.transitions);
        crf::viterbi(em.data(), tr.data(), n, l)
    }
}

/// Max-pools token representations `start..end` of `tokens` into a mention.
pub fn pool_mention(
    tape: &mut Tape,
    tokens: Var,
    sentence_index: usize,
    start: usize,
    end: usize,
    surface: String,
) -> Result<MentionRep> {
    let rows = tape.slice_rows(tokens, start, end)?;
    let vector = tape.max_pool_rows(rows)?;
    Ok(MentionRep { vector, sentence_index, start, end, entity_key: surface.clone(), surface })
}

/// Pools every span harvested from `labels`; `words` supplies surfaces.
pub fn harvest_mentions(
    tape: &mut Tape,
    tokens: Var,
    sentence_index: usize,
    labels: &[usize],
    set: &LabelSet,
    words: &[String],
) -> Result<Vec<MentionRep>> {
    harvest_spans(labels, set)
        .into_iter()
        .map(|s| pool_mention(tape, tokens, sentence_index, s.start, s.end, words[s.start..s.end].join(" ")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn encoder(store: &mut ParamStore) -> DocumentEncoder {
        let cfg = EncoderConfig {
            vocab_size: 10,
            num_labels: 5,
            transformer: TransformerConfig { layers: 1, heads: 2, d_model: 8, d_ff: 16, dropout: 0.0 },
            max_tokens: 16,
            max_sentences: 4,
            sentence_position_init: PositionInit::Sinusoidal,
        };
        DocumentEncoder::new(store, "enc", cfg).unwrap()
    }

    #[test]
    fn shapes_and_determinism() {
        let mut store = ParamStore::new(3);
        let enc = encoder(&mut store);
        let mut tape = Tape::eval(&store);
        let a = enc.encode_sentence(&mut tape, &[4]).unwrap();
        assert_eq!(tape.shape(a), &[1, 8]);
        let b = enc.encode_sentence(&mut tape, &[1, 2, 3]).unwrap();
        let c = enc.encode_sentence(&mut tape, &[1, 2, 3]).unwrap();
        assert_eq!(tape.value(b), tape.value(c));
        let d = enc.encode_sentence(&mut tape, &[2, 1, 3]).unwrap();
        assert_ne!(tape.value(b).row_slice(2), tape.value(d).row_slice(2));
    }

    #[test]
    fn sinusoidal_table_values() {
        let t = sinusoidal_table(3, 4);
        assert_eq!(t.row_slice(0), &[0.0, 1.0, 0.0, 1.0]);
        assert!((t.get(1, 0) - 1f64.sin()).abs() < 1e-15);
        assert!((t.get(2, 2) - (2.0 * 0.01f64).sin()).abs() < 1e-15);
        assert!((t.get(2, 3) - (2.0 * 0.01f64).cos()).abs() < 1e-15);
    }

    #[test]
    fn sentence_position_shift() {
        let mut store = ParamStore::new(3);
        let enc = encoder(&mut store);
        let mut tape = Tape::eval(&store);
        let t = enc.encode_sentence(&mut tape, &[1, 2]).unwrap();
        let s0 = enc.sentence_representation(&mut tape, t, 0).unwrap();
        let s1 = enc.sentence_representation(&mut tape, t, 1).unwrap();
        let p = store.value(enc.sentence_position);
        for k in 0..8 {
            let diff = tape.value(s0).data()[k] - tape.value(s1).data()[k];
            assert!((diff - (p.get(0, k) - p.get(1, k))).abs() < 1e-12);
        }
        assert!(enc.sentence_representation(&mut tape, t, 4).is_err());
    }

    #[test]
    fn elementwise_max_sentence_rep() {
        let mut store = ParamStore::new(3);
        let enc = encoder(&mut store);
        store.get_mut(enc.sentence_position).value.fill(0.0);
        let mut tape = Tape::eval(&store);
        let mut rows = vec![vec![0.0; 8], vec![0.0; 8]];
        rows[0][0] = 1.0;
        rows[1][1] = 1.0;
        let t = tape.constant(Tensor::from_rows(&rows).unwrap());
        let s = enc.sentence_representation(&mut tape, t, 0).unwrap();
        assert_eq!(&tape.value(s).data()[..3], &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn mention_pooling() {
        let store = ParamStore::new(0);
        let mut tape = Tape::eval(&store);
        let t = tape.constant(Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0], vec![9.0, 9.0]]).unwrap());
        let m = pool_mention(&mut tape, t, 0, 0, 2, "a b".into()).unwrap();
        assert_eq!(tape.value(m.vector).data(), &[2.0, 3.0]);
    }

    #[test]
    fn decode_prefers_strong_outside() {
        let mut store = ParamStore::new(3);
        let enc = encoder(&mut store);
        let mut tape = Tape::eval(&store);
        let em = tape.constant(Tensor::row(vec![5.0, 0.0, 0.0, 0.0, 0.0]));
        assert_eq!(enc.crf_decode(&tape, em), vec![OUTSIDE]);
    }
}
