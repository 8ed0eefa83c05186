//! The full extraction model: encoder, event representation extractor,
//! graph aggregation and decoder, wired according to the ablation setting.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::checkpoint::Checkpoint;
use crate::corpus::{Document, EventRecord, EventSchema, Vocab};
use crate::decoder::{
    argument_steps, detection_loss, expand_paths, probabilities, ArgumentHead, ArgumentLossMode, DetectionHead,
    EntitySet, GoldPath,
};
use crate::eagn::{normalize_adjacency, node_features, split_nodes, EventGraph, Gcn, GcnConfig, MentionNode, SentenceEdges};
use crate::encoder::{
    harvest_spans, pool_mention, DocumentEncoder, EncoderConfig, LabelSet, MentionRep, MentionSource, PositionInit,
};
use crate::ere::{EventQueries, EventRepresentationExtractor};
use crate::error::{Result, SeaError};
use crate::nn::{FeedForward, TransformerConfig};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Which component is removed from the full model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// Raw event queries replace the extracted type and role representations.
    NoEre,
    /// Representations skip graph aggregation.
    NoEagn,
    /// Events are detected from pooled sentence representations.
    NoEventtype,
    /// Argument scoring ignores role representations.
    NoRole,
}

impl Ablation {
    pub const ALL: [Ablation; 5] =
        [Ablation::None, Ablation::NoEre, Ablation::NoEagn, Ablation::NoEventtype, Ablation::NoRole];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoEre => "no_ere",
            Ablation::NoEagn => "no_eagn",
            Ablation::NoEventtype => "no_eventtype",
            Ablation::NoRole => "no_role",
        }
    }

    /// Combines individual switches; at most one may be set.
    pub fn from_flags(no_ere: bool, no_eagn: bool, no_eventtype: bool, no_role: bool) -> Result<Self> {
        let set: Vec<Ablation> = [
            (no_ere, Ablation::NoEre),
            (no_eagn, Ablation::NoEagn),
            (no_eventtype, Ablation::NoEventtype),
            (no_role, Ablation::NoRole),
        ]
        .into_iter()
        .filter_map(|(on, a)| on.then_some(a))
        .collect();
        match set.as_slice() {
            [] => Ok(Ablation::None),
            [a] => Ok(*a),
            many => Err(SeaError::Config(format!(
                "at most one ablation may be set, got {}",
                many.iter().map(|a| a.name()).collect::<Vec<_>>().join(", ")
            ))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = SeaError;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| SeaError::Config(format!("unknown ablation `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub ere_layers: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub max_tokens: usize,
    pub max_sentences: usize,
    /// One query-augmented pass per sentence with all types, instead of one per type.
    pub ere_joint: bool,
    pub gcn: GcnConfig,
    pub sentence_edges: SentenceEdges,
    pub sentence_position_init: PositionInit,
    /// Condition argument scores on the entities already on the path.
    pub path_conditioning: bool,
    pub argument_loss: ArgumentLossMode,
    pub pos_weight: f64,
    pub max_paths: usize,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            heads: 4,
            encoder_layers: 2,
            ere_layers: 2,
            d_ff: 256,
            dropout: 0.1,
            max_tokens: 128,
            max_sentences: 64,
            ere_joint: false,
            gcn: GcnConfig::default(),
            sentence_edges: SentenceEdges::AllPairs,
            sentence_position_init: PositionInit::Sinusoidal,
            path_conditioning: true,
            argument_loss: ArgumentLossMode::GoldPath,
            pos_weight: 1.0,
            max_paths: 32,
            ablation: Ablation::None,
        }
    }
}

impl ModelConfig {
    fn transformer(&self, layers: usize) -> TransformerConfig {
        TransformerConfig { layers, heads: self.heads, d_model: self.d_model, d_ff: self.d_ff, dropout: self.dropout }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 {
            return Err(SeaError::Config("d_model must be positive".into()));
        }
        self.transformer(self.encoder_layers).validate()?;
        if !(0.0..1.0).contains(&self.gcn.dropout) {
            return Err(SeaError::Config(format!("gcn dropout {} outside [0, 1)", self.gcn.dropout)));
        }
        if self.pos_weight <= 0.0 || !self.pos_weight.is_finite() {
            return Err(SeaError::Config(format!("pos_weight must be positive, got {}", self.pos_weight)));
        }
        if self.max_paths == 0 {
            return Err(SeaError::Config("max_paths must be positive".into()));
        }
        Ok(())
    }
}

/// A document mapped to ids and labels, truncated to the model's bounds.
#[derive(Clone, Debug)]
pub struct PreparedDocument<'a> {
    pub doc: &'a Document,
    pub token_ids: Vec<Vec<usize>>,
    pub gold_labels: Vec<Vec<usize>>,
    /// Gold mentions surviving truncation: `(sentence, start, end, surface)`.
    pub gold_mentions: Vec<(usize, usize, usize, String)>,
    /// Per event type: whether it occurs in the gold records.
    pub gold_types: Vec<bool>,
    /// Per event type: role-ordered gold arguments of each record.
    pub gold_args: Vec<Vec<Vec<Option<String>>>>,
}

impl PreparedDocument<'_> {
    pub fn words(&self, sentence: usize) -> &[String] {
        &self.doc.sentences[sentence][..self.token_ids[sentence].len()]
    }
}

/// Intermediate representations of one document.
#[derive(Clone, Debug)]
pub struct DocumentReps {
    pub emissions: Vec<Var>,
    pub mentions: Vec<MentionRep>,
    /// Aggregated sentence representations (`|D| × d`).
    pub sentences: Var,
    pub entities: EntitySet,
    /// Aggregated type representations (`N_T × d`).
    pub types: Var,
    pub roles: Vec<Var>,
    pub graph: EventGraph,
}

/// Scalar losses of one document.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub entity: Var,
    pub detection: Var,
    pub argument: Var,
    /// Gold argument slots whose string matched no entity.
    pub skipped_slots: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    #[serde(flatten)]
    pub record: EventRecord,
    pub score: f64,
}

#[derive(Clone, Debug)]
pub struct SeaModel {
    pub cfg: ModelConfig,
    pub schema: EventSchema,
    pub vocab: Vocab,
    pub labels: LabelSet,
    pub store: ParamStore,
    pub encoder: DocumentEncoder,
    pub queries: EventQueries,
    pub ere: Option<EventRepresentationExtractor>,
    pub gcn: Option<Gcn>,
    pub detection: Option<DetectionHead>,
    pub sentence_detector: Option<FeedForward>,
    pub argument: ArgumentHead,
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    config: ModelConfig,
    schema: EventSchema,
    vocab: Vocab,
    labels: LabelSet,
}

impl SeaModel {
    pub fn new(cfg: ModelConfig, schema: EventSchema, vocab: Vocab, labels: LabelSet, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let mut store = ParamStore::new(seed);
        let enc_cfg = EncoderConfig {
            vocab_size: vocab.len(),
            num_labels: labels.len(),
            transformer: cfg.transformer(cfg.encoder_layers),
            max_tokens: cfg.max_tokens,
            max_sentences: cfg.max_sentences,
            sentence_position_init: cfg.sentence_position_init,
        };
        let encoder = DocumentEncoder::new(&mut store, "encoder", enc_cfg)?;
        let (queries, ere) = if cfg.ablation == Ablation::NoEre {
            (EventQueries::new(&mut store, "ere.queries", &schema, d)?, None)
        } else {
            let ere = EventRepresentationExtractor::new(
                &mut store,
                "ere",
                &schema,
                &cfg.transformer(cfg.ere_layers),
                cfg.ere_joint,
            )?;
            (ere.queries.clone(), Some(ere))
        };
        let gcn = if cfg.ablation == Ablation::NoEagn { None } else { Some(Gcn::new(&mut store, "eagn", d, cfg.gcn)?) };
        let (detection, sentence_detector) = if cfg.ablation == Ablation::NoEventtype {
            (None, Some(FeedForward::new(&mut store, "sentence_detector", d, d, schema.num_types())?))
        } else {
            (Some(DetectionHead::new(&mut store, "detection", d)?), None)
        };
        let argument = ArgumentHead::new(&mut store, "argument", d)?;
        Ok(Self { cfg, schema, vocab, labels, store, encoder, queries, ere, gcn, detection, sentence_detector, argument })
    }

    /// Builds vocabulary and labels from `docs` and initializes a fresh model.
    pub fn for_corpus(cfg: ModelConfig, schema: EventSchema, docs: &[Document], seed: u64) -> Result<Self> {
        let vocab = Vocab::build(docs);
        let labels = LabelSet::new(Document::entity_types(docs));
        Self::new(cfg, schema, vocab, labels, seed)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = serde_json::to_value(ModelMeta {
            config: self.cfg.clone(),
            schema: self.schema.clone(),
            vocab: self.vocab.clone(),
            labels: self.labels.clone(),
        })?;
        Ok(Checkpoint::from_store(&self.store, meta))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta: ModelMeta = serde_json::from_value(ckpt.meta.clone())
            .map_err(|e| SeaError::Checkpoint(format!("invalid model metadata: {e}")))?;
        let mut model = Self::new(meta.config, meta.schema, meta.vocab, meta.labels, 0)?;
        ckpt.load_into(&mut model.store)?;
        Ok(model)
    }

    /// Maps tokens to ids and gold annotations to labels, truncating long
    /// documents and sentences with a warning.
    pub fn prepare<'a>(&self, doc: &'a Document) -> PreparedDocument<'a> {
        let max_s = self.cfg.max_sentences;
        let max_t = self.cfg.max_tokens;
        if doc.sentences.len() > max_s {
            warn!("{}: {} sentences truncated to {}", doc.doc_id, doc.sentences.len(), max_s);
        }
        let mut token_ids = Vec::new();
        for (i, s) in doc.sentences.iter().take(max_s).enumerate() {
            if s.len() > max_t {
                warn!("{}: sentence {} of {} tokens truncated to {}", doc.doc_id, i, s.len(), max_t);
            }
            token_ids.push(s.iter().take(max_t).map(|t| self.vocab.id(t)).collect::<Vec<_>>());
        }
        let kept: Vec<_> = doc
            .mentions
            .iter()
            .filter(|m| m.sentence_index < token_ids.len() && m.end <= token_ids[m.sentence_index].len())
            .collect();
        let gold_labels = token_ids
            .iter()
            .enumerate()
            .map(|(i, ids)| {
                let in_sent: Vec<_> = kept.iter().copied().filter(|m| m.sentence_index == i).collect();
                self.labels.encode(ids.len(), &in_sent)
            })
            .collect();
        let gold_mentions =
            kept.iter().map(|m| (m.sentence_index, m.start, m.end, m.surface.clone())).collect();
        let mut gold_types = vec![false; self.schema.num_types()];
        let mut gold_args = vec![Vec::new(); self.schema.num_types()];
        for r in &doc.records {
            let Some(m) = self.schema.type_index(&r.event_type) else { continue };
            gold_types[m] = true;
            gold_args[m].push(self.schema.types[m].roles.iter().map(|role| r.arg(role).map(str::to_string)).collect());
        }
        PreparedDocument { doc, token_ids, gold_labels, gold_mentions, gold_types, gold_args }
    }

    /// Runs encoder, extractor and graph for one document, using the chosen
    /// mention source to form mentions and entities.
    pub fn represent(&self, tape: &mut Tape, prep: &PreparedDocument, source: MentionSource) -> Result<DocumentReps> {
        let mut tokens = Vec::with_capacity(prep.token_ids.len());
        let mut emissions = Vec::with_capacity(prep.token_ids.len());
        let mut sentence_reps = Vec::with_capacity(prep.token_ids.len());
        let mut mentions = Vec::new();
        for (i, ids) in prep.token_ids.iter().enumerate() {
            let t = self.encoder.encode_sentence(tape, ids)?;
            let em = self.encoder.emissions(tape, t)?;
            sentence_reps.push(self.encoder.sentence_representation(tape, t, i)?);
            if source == MentionSource::Predicted {
                let labels = self.encoder.crf_decode(tape, em);
                let words = prep.words(i);
                for s in harvest_spans(&labels, &self.labels) {
                    mentions.push(pool_mention(tape, t, i, s.start, s.end, words[s.start..s.end].join(" "))?);
                }
            }
            tokens.push(t);
            emissions.push(em);
        }
        if source == MentionSource::Gold {
            for (i, start, end, surface) in &prep.gold_mentions {
                mentions.push(pool_mention(tape, tokens[*i], *i, *start, *end, surface.clone())?);
            }
        }
        let sentences = tape.concat_rows(&sentence_reps)?;
        let mention_matrix = if mentions.is_empty() {
            None
        } else {
            let rows: Vec<Var> = mentions.iter().map(|m| m.vector).collect();
            Some(tape.concat_rows(&rows)?)
        };

        let event = match &self.ere {
            Some(ere) => ere.extract(tape, &tokens)?,
            None => self.queries.as_reps(tape),
        };

        let roles_per_type: Vec<usize> = self.schema.types.iter().map(|t| t.roles.len()).collect();
        let nodes: Vec<MentionNode> = mentions
            .iter()
            .map(|m| MentionNode { sentence_index: m.sentence_index, entity_key: m.entity_key.clone() })
            .collect();
        let graph = EventGraph::build(tokens.len(), &nodes, &roles_per_type, self.cfg.sentence_edges);
        let (sentences, mention_matrix, types, roles) = match &self.gcn {
            Some(gcn) => {
                let x = node_features(tape, sentences, mention_matrix, event.types, &event.roles)?;
                let adj = tape.constant(normalize_adjacency(&graph.adjacency()));
                let h = gcn.forward(tape, adj, x)?;
                let out = split_nodes(tape, &graph, h)?;
                (out.sentences, out.mentions, out.types, out.roles)
            }
            None => (sentences, mention_matrix, event.types, event.roles),
        };
        let keys: Vec<String> = mentions.iter().map(|m| m.entity_key.clone()).collect();
        let entities = EntitySet::build(tape, mention_matrix, &keys)?;
        Ok(DocumentReps { emissions, mentions, sentences, entities, types, roles, graph })
    }

    /// Per-type detection logits (`N_T × 1`).
    pub fn detection_logits(&self, tape: &mut Tape, reps: &DocumentReps) -> Result<Var> {
        match (&self.detection, &self.sentence_detector) {
            (Some(head), _) => head.logits(tape, reps.types, self.cfg.dropout),
            (None, Some(ffn)) => {
                let pooled = tape.max_pool_rows(reps.sentences)?;
                let z = ffn.forward(tape, pooled, self.cfg.dropout)?;
                Ok(tape.transpose(z)?)
            }
            (None, None) => Err(SeaError::Config("model has no detection head".into())),
        }
    }

    /// Argument logits for role `role` of type `m`, one per entity.
    pub fn argument_logits(
        &self,
        tape: &mut Tape,
        reps: &DocumentReps,
        m: usize,
        role: usize,
        prefix: &[Option<usize>],
    ) -> Result<Option<Var>> {
        let Some(entities) = reps.entities.vectors else { return Ok(None) };
        let role_rep = if self.cfg.ablation == Ablation::NoRole {
            None
        } else {
            Some(tape.slice_rows(reps.roles[m], role, role + 1)?)
        };
        let memory = if self.cfg.path_conditioning { reps.entities.path_memory(tape, prefix)? } else { None };
        Ok(Some(self.argument.logits(tape, entities, role_rep, memory, self.cfg.dropout)?))
    }

    /// Entity, detection and argument losses of one document.
    pub fn losses(&self, tape: &mut Tape, prep: &PreparedDocument, source: MentionSource) -> Result<LossParts> {
        let reps = self.represent(tape, prep, source)?;
        let tr = tape.param(self.encoder.transitions);
        let mut crf_terms = Vec::with_capacity(reps.emissions.len());
        for (em, gold) in reps.emissions.iter().zip(&prep.gold_labels) {
            crf_terms.push(tape.crf_nll(*em, tr, gold)?);
        }
        let entity = tape.add_all(&crf_terms)?;

        let det = self.detection_logits(tape, &reps)?;
        let detection = detection_loss(tape, det, &prep.gold_types, self.cfg.pos_weight)?;

        let mut terms = Vec::new();
        let mut skipped_slots = 0;
        for (m, records) in prep.gold_args.iter().enumerate() {
            if records.is_empty() {
                continue;
            }
            let paths: Vec<GoldPath> = records
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|a| a.as_ref().map(|s| reps.entities.index_of(s).ok_or(())))
                        .collect()
                })
                .collect();
            let (steps, skipped) = argument_steps(m, &paths, reps.entities.len(), self.cfg.argument_loss);
            skipped_slots += skipped;
            for step in steps {
                if let Some(z) = self.argument_logits(tape, &reps, m, step.role, &step.prefix)? {
                    terms.push(tape.bce_with_logits(z, &step.targets, self.cfg.pos_weight)?);
                }
            }
        }
        let argument = tape.add_all(&terms)?;
        Ok(LossParts { entity, detection, argument, skipped_slots })
    }

    /// Event records predicted for `doc` from predicted mentions.
    pub fn predict(&self, doc: &Document) -> Result<Vec<ScoredRecord>> {
        let prep = self.prepare(doc);
        let mut tape = Tape::eval(&self.store);
        let reps = self.represent(&mut tape, &prep, MentionSource::Predicted)?;
        let det = self.detection_logits(&mut tape, &reps)?;
        let probs = probabilities(tape.value(det));
        let mut out = Vec::new();
        for (m, &p) in probs.iter().enumerate() {
            if p <= 0.5 || reps.entities.is_empty() {
                continue;
            }
            let roles = &self.schema.types[m].roles;
            let paths = expand_paths(roles.len(), self.cfg.max_paths, |n, prefix| {
                Ok(match self.argument_logits(&mut tape, &reps, m, n, prefix)? {
                    Some(z) => probabilities(tape.value(z)),
                    None => Vec::new(),
                })
            })?;
            for path in paths {
                let args = roles
                    .iter()
                    .zip(&path.assignment)
                    .map(|(r, a)| (r.clone(), a.map(|i| reps.entities.keys[i].clone())))
                    .collect();
                out.push(ScoredRecord {
                    record: EventRecord { event_type: self.schema.types[m].name.clone(), args },
                    score: p * path.score,
                });
            }
        }
        Ok(out)
    }

    /// Aggregated event-type representations of `doc` (`N_T × d`) as used
    /// by the detection head, computed from predicted mentions.
    pub fn type_representations(&self, doc: &Document) -> Result<Tensor> {
        let prep = self.prepare(doc);
        let mut tape = Tape::eval(&self.store);
        let reps = self.represent(&mut tape, &prep, MentionSource::Predicted)?;
        Ok(tape.value(reps.types).clone())
    }

    /// Graph of `doc` as built during prediction, as JSON.
    pub fn graph_dump(&self, doc: &Document) -> Result<serde_json::Value> {
        let prep = self.prepare(doc);
        let mut tape = Tape::eval(&self.store);
        let reps = self.represent(&mut tape, &prep, MentionSource::Predicted)?;
        Ok(reps.graph.to_json())
    }
}
