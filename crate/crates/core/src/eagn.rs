//! Heterogeneous document graph over sentence, mention, event-type and role
//! nodes, aggregated with a normalized graph convolution.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::nn::Linear;
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Sentence,
    Mention,
    Type,
    Role,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    SentenceType,
    MentionRole,
    TypeRole,
    SentenceSentence,
    SameEntity,
    SameSentence,
    MentionSentence,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceEdges {
    #[default]
    AllPairs,
    Adjacent,
}

/// A node and the index of the object it stands for within its kind.
/// Role nodes also record their event type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub kind: NodeKind,
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_type: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub kind: EdgeKind,
}

/// Mention endpoints needed for graph construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MentionNode {
    pub sentence_index: usize,
    pub entity_key: String,
}

/// Node order: sentences, mentions, types, then roles type by type.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventGraph {
    pub nodes: Vec<GraphNode>,
    /// One entry per rule instantiation; a pair may carry several kinds.
    pub edges: Vec<GraphEdge>,
    pub num_sentences: usize,
    pub num_mentions: usize,
    pub num_types: usize,
    pub roles_per_type: Vec<usize>,
}

impl EventGraph {
    pub fn build(
        num_sentences: usize,
        mentions: &[MentionNode],
        roles_per_type: &[usize],
        sentence_edges: SentenceEdges,
    ) -> Self {
        let num_mentions = mentions.len();
        let num_types = roles_per_type.len();
        let mut nodes = Vec::new();
        nodes.extend((0..num_sentences).map(|i| GraphNode { kind: NodeKind::Sentence, index: i, event_type: None }));
        nodes.extend((0..num_mentions).map(|i| GraphNode { kind: NodeKind::Mention, index: i, event_type: None }));
        nodes.extend((0..num_types).map(|i| GraphNode { kind: NodeKind::Type, index: i, event_type: None }));
        let mut role_offsets = Vec::with_capacity(num_types);
        let mut k = 0;
        for (m, &nr) in roles_per_type.iter().enumerate() {
            role_offsets.push(num_sentences + num_mentions + num_types + k);
            nodes.extend((0..nr).map(|n| GraphNode { kind: NodeKind::Role, index: n, event_type: Some(m) }));
            k += nr;
        }
        let sent = |i: usize| i;
        let ment = |j: usize| num_sentences + j;
        let typ = |m: usize| num_sentences + num_mentions + m;
        let mut edges = Vec::new();
        let mut push = |a: usize, b: usize, kind: EdgeKind| edges.push(GraphEdge { a, b, kind });

        for i in 0..num_sentences {
            for m in 0..num_types {
                push(sent(i), typ(m), EdgeKind::SentenceType);
            }
        }
        for j in 0..num_mentions {
            for (m, &nr) in roles_per_type.iter().enumerate() {
                for n in 0..nr {
                    push(ment(j), role_offsets[m] + n, EdgeKind::MentionRole);
                }
            }
        }
        for (m, &nr) in roles_per_type.iter().enumerate() {
            for n in 0..nr {
                push(typ(m), role_offsets[m] + n, EdgeKind::TypeRole);
            }
        }
        for i in 0..num_sentences {
            for i2 in i + 1..num_sentences {
                if sentence_edges == SentenceEdges::AllPairs || i2 == i + 1 {
                    push(sent(i), sent(i2), EdgeKind::SentenceSentence);
                }
            }
        }
        for (j, a) in mentions.iter().enumerate() {
            for (j2, b) in mentions.iter().enumerate().skip(j + 1) {
                if a.entity_key == b.entity_key {
                    push(ment(j), ment(j2), EdgeKind::SameEntity);
                }
                if a.sentence_index == b.sentence_index {
                    push(ment(j), ment(j2), EdgeKind::SameSentence);
                }
            }
        }
        for (j, mention) in mentions.iter().enumerate() {
            if mention.sentence_index < num_sentences {
                push(ment(j), sent(mention.sentence_index), EdgeKind::MentionSentence);
            }
        }
        Self { nodes, edges, num_sentences, num_mentions, num_types, roles_per_type: roles_per_type.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn count(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// Symmetric 0/1 adjacency with edge kinds merged and no self-loops.
    pub fn adjacency(&self) -> Tensor {
        let n = self.len();
        let mut a = Tensor::zeros(&[n, n]);
        for e in &self.edges {
            a.set(e.a, e.b, 1.0);
            a.set(e.b, e.a, 1.0);
        }
        a
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
pub fn normalize_adjacency(a: &Tensor) -> Tensor {
    let (n, _) = a.dims2();
    let mut out = a.clone();
    for i in 0..n {
        out.set(i, i, out.get(i, i) + 1.0);
    }
    let inv_sqrt: Vec<f64> =
        (0..n).map(|i| 1.0 / out.row_slice(i).iter().sum::<f64>().sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            let v = out.get(i, j);
            if v != 0.0 {
                out.set(i, j, v * inv_sqrt[i] * inv_sqrt[j]);
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub layers: usize,
    pub residual: bool,
    pub dropout: f64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self { layers: 3, residual: true, dropout: 0.1 }
    }
}

#[derive(Clone, Debug)]
pub struct Gcn {
    pub layers: Vec<Linear>,
    pub cfg: GcnConfig,
}

impl Gcn {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, cfg: GcnConfig) -> Result<Self> {
        let layers = (0..cfg.layers)
            .map(|l| Linear::new(store, &format!("{name}.layer{l}"), d, d))
            .collect::<Result<_>>()?;
        Ok(Self { layers, cfg })
    }

    /// One layer without the nonlinearity: `Â X W + b`.
    pub fn propagate(&self, tape: &mut Tape, layer: usize, adj: Var, x: Var) -> Result<Var> {
        let l = &self.layers[layer];
        let w = tape.param(l.weight);
        let b = tape.param(l.bias);
        let xw = tape.matmul(x, w)?;
        let agg = tape.matmul(adj, xw)?;
        Ok(tape.add(agg, b)?)
    }

    /// Stacked `ReLU(Â H W + b)` layers, dropout between layers, and an
    /// optional residual connection from `x` to the output.
    pub fn forward(&self, tape: &mut Tape, adj: Var, x: Var) -> Result<Var> {
        let mut h = x;
        for l in 0..self.layers.len() {
            if l > 0 {
                h = tape.dropout(h, self.cfg.dropout)?;
            }
            let z = self.propagate(tape, l, adj, h)?;
            h = tape.relu(z)?;
        }
        if self.cfg.residual {
            h = tape.add(h, x)?;
        }
        Ok(h)
    }
}

/// Graph outputs split back by node kind.
#[derive(Clone, Debug)]
pub struct AggregatedReps {
    pub sentences: Var,
    pub mentions: Option<Var>,
    pub types: Var,
    pub roles: Vec<Var>,
}

/// Stacks node features in graph order.
pub fn node_features(
    tape: &mut Tape,
    sentences: Var,
    mentions: Option<Var>,
    types: Var,
    roles: &[Var],
) -> Result<Var> {
    let mut parts = vec![sentences];
    parts.extend(mentions);
    parts.push(types);
    parts.extend_from_slice(roles);
    Ok(tape.concat_rows(&parts)?)
}

/// Inverse of [`node_features`].
pub fn split_nodes(tape: &mut Tape, graph: &EventGraph, h: Var) -> Result<AggregatedReps> {
    let s = graph.num_sentences;
    let m = graph.num_mentions;
    let t = graph.num_types;
    let sentences = tape.slice_rows(h, 0, s)?;
    let mentions = if m > 0 { Some(tape.slice_rows(h, s, s + m)?) } else { None };
    let types = tape.slice_rows(h, s + m, s + m + t)?;
    let mut offset = s + m + t;
    let mut roles = Vec::with_capacity(t);
    for &nr in &graph.roles_per_type {
        roles.push(tape.slice_rows(h, offset, offset + nr)?);
        offset += nr;
    }
    Ok(AggregatedReps { sentences, mentions, types, roles })
}
