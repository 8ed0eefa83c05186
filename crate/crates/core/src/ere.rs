//! Event representation extraction: learnable type and role queries are
//! appended to each sentence, re-encoded together with it, and the query
//! outputs are max-pooled over the document's sentences.

use crate::autodiff::{Tape, Var};
use crate::corpus::EventSchema;
use crate::error::Result;
use crate::nn::{TransformerConfig, TransformerStack};
use crate::params::{ParamId, ParamStore, INIT_STD};

/// One type query (`N_T × d`) and one role query matrix per type (`N_R × d`).
#[derive(Clone, Debug)]
pub struct EventQueries {
    pub types: ParamId,
    pub roles: Vec<ParamId>,
}

impl EventQueries {
    pub fn new(store: &mut ParamStore, name: &str, schema: &EventSchema, d: usize) -> Result<Self> {
        let types = store.normal(&format!("{name}.types"), &[schema.num_types(), d], INIT_STD)?;
        let roles = schema
            .types
            .iter()
            .enumerate()
            .map(|(m, t)| store.normal(&format!("{name}.roles{m}"), &[t.roles.len(), d], INIT_STD))
            .collect::<Result<_>>()?;
        Ok(Self { types, roles })
    }

    /// The raw queries, used directly when the extractor is bypassed.
    pub fn as_reps(&self, tape: &mut Tape) -> EventReps {
        let types = tape.param(self.types);
        let roles = self.roles.iter().map(|&r| tape.param(r)).collect();
        EventReps { types, roles }
    }
}

/// Event-type representations (`N_T × d`) and per-type role representations.
#[derive(Clone, Debug)]
pub struct EventReps {
    pub types: Var,
    pub roles: Vec<Var>,
}

/// Outputs of one query-augmented pass over one sentence.
#[derive(Clone, Debug)]
pub struct SentenceEventReps {
    /// Re-encoded sentence tokens.
    pub tokens: Var,
    /// `(type row 1 × d, roles N_R × d)` for each event type processed.
    pub events: Vec<(usize, Var, Var)>,
}

#[derive(Clone, Debug)]
pub struct EventRepresentationExtractor {
    pub queries: EventQueries,
    pub transformer: TransformerStack,
    /// Run all types' queries in one pass per sentence instead of one pass per type.
    pub joint: bool,
}

impl EventRepresentationExtractor {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        schema: &EventSchema,
        cfg: &TransformerConfig,
        joint: bool,
    ) -> Result<Self> {
        Ok(Self {
            queries: EventQueries::new(store, &format!("{name}.queries"), schema, cfg.d_model)?,
            transformer: TransformerStack::new(store, &format!("{name}.transformer"), cfg)?,
            joint,
        })
    }

    /// Re-encodes `[tokens; T_m; R_m]` for type `m` and splits the result.
    pub fn sentence_aware(&self, tape: &mut Tape, tokens: Var, m: usize) -> Result<SentenceEventReps> {
        let n = tape.shape(tokens)[0];
        let table = tape.param(self.queries.types);
        let t = tape.slice_rows(table, m, m + 1)?;
        let r = tape.param(self.queries.roles[m]);
        let nr = tape.shape(r)[0];
        let x = tape.concat_rows(&[tokens, t, r])?;
        let y = self.transformer.forward(tape, x)?;
        let tokens = tape.slice_rows(y, 0, n)?;
        let t = tape.slice_rows(y, n, n + 1)?;
        let r = tape.slice_rows(y, n + 1, n + 1 + nr)?;
        Ok(SentenceEventReps { tokens, events: vec![(m, t, r)] })
    }

    /// One pass with every type's queries appended: `[tokens; T; R_1; ...; R_M]`.
    pub fn sentence_aware_joint(&self, tape: &mut Tape, tokens: Var) -> Result<SentenceEventReps> {
        let n = tape.shape(tokens)[0];
        let types = tape.param(self.queries.types);
        let nt = tape.shape(types)[0];
        let mut parts = vec![tokens, types];
        let mut sizes = Vec::with_capacity(self.queries.roles.len());
        for &r in &self.queries.roles {
            let v = tape.param(r);
            sizes.push(tape.shape(v)[0]);
            parts.push(v);
        }
        let x = tape.concat_rows(&parts)?;
        let y = self.transformer.forward(tape, x)?;
        let out_tokens = tape.slice_rows(y, 0, n)?;
        let mut offset = n + nt;
        let mut events = Vec::with_capacity(nt);
        for (m, nr) in sizes.into_iter().enumerate() {
            let t = tape.slice_rows(y, n + m, n + m + 1)?;
            let r = tape.slice_rows(y, offset, offset + nr)?;
            offset += nr;
            events.push((m, t, r));
        }
        Ok(SentenceEventReps { tokens: out_tokens, events })
    }

    /// Document-aware type and role representations for a document whose
    /// sentences have token representations `sentences`.
    pub fn extract(&self, tape: &mut Tape, sentences: &[Var]) -> Result<EventReps> {
        let num_types = self.queries.roles.len();
        let mut per_type: Vec<(Vec<Var>, Vec<Var>)> = vec![(Vec::new(), Vec::new()); num_types];
        for &s in sentences {
            let passes = if self.joint {
                vec![self.sentence_aware_joint(tape, s)?]
            } else {
                (0..num_types).map(|m| self.sentence_aware(tape, s, m)).collect::<Result<_>>()?
            };
            for pass in passes {
                for (m, t, r) in pass.events {
                    per_type[m].0.push(t);
                    per_type[m].1.push(r);
                }
            }
        }
        document_aware(tape, &per_type)
    }
}

/// Elementwise max over sentences of each type's sentence-aware representations.
pub fn document_aware(tape: &mut Tape, per_type: &[(Vec<Var>, Vec<Var>)]) -> Result<EventReps> {
    let mut types = Vec::with_capacity(per_type.len());
    let mut roles = Vec::with_capacity(per_type.len());
    for (ts, rs) in per_type {
        types.push(tape.elementwise_max(ts)?);
        roles.push(tape.elementwise_max(rs)?);
    }
    let types = tape.concat_rows(&types)?;
    Ok(EventReps { types, roles })
}
