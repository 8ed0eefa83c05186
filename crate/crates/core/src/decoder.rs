//! Type-aware record decoding: per-type event detection, role-enhanced
//! argument scoring with path memory, tree-path expansion and the losses.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::nn::FeedForward;
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// `FFN(d -> d -> 1)` scoring each event type representation.
#[derive(Clone, Debug)]
pub struct DetectionHead {
    pub ffn: FeedForward,
}

impl DetectionHead {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Result<Self> {
        Ok(Self { ffn: FeedForward::new(store, name, d, d, 1)? })
    }

    /// One logit per row of `types` (`N_T × 1`).
    pub fn logits(&self, tape: &mut Tape, types: Var, dropout: f64) -> Result<Var> {
        self.ffn.forward(tape, types, dropout)
    }
}

/// `FFN(d -> d -> 1)` shared by all roles of all types.
#[derive(Clone, Debug)]
pub struct ArgumentHead {
    pub ffn: FeedForward,
}

impl ArgumentHead {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Result<Self> {
        Ok(Self { ffn: FeedForward::new(store, name, d, d, 1)? })
    }

    /// One logit per entity: `FFN(E + role + memory)`, where the optional
    /// `role` and `memory` rows are broadcast over the entities.
    pub fn logits(
        &self,
        tape: &mut Tape,
        entities: Var,
        role: Option<Var>,
        memory: Option<Var>,
        dropout: f64,
    ) -> Result<Var> {
        let mut x = entities;
        if let Some(r) = role {
            x = tape.add(x, r)?;
        }
        if let Some(m) = memory {
            x = tape.add(x, m)?;
        }
        self.ffn.forward(tape, x, dropout)
    }
}

/// Document entities: mentions grouped by key, in order of first appearance.
#[derive(Clone, Debug)]
pub struct EntitySet {
    pub keys: Vec<String>,
    /// `E × d`, each row the max-pool of the entity's mention vectors.
    pub vectors: Option<Var>,
}

impl EntitySet {
    /// Groups the rows of `mentions` (one per key in `mention_keys`).
    pub fn build(tape: &mut Tape, mentions: Option<Var>, mention_keys: &[String]) -> Result<Self> {
        let Some(mentions) = mentions else {
            return Ok(Self { keys: Vec::new(), vectors: None });
        };
        let mut keys: Vec<String> = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (j, k) in mention_keys.iter().enumerate() {
            let e = *index.entry(k.as_str()).or_insert_with(|| {
                keys.push(k.clone());
                members.push(Vec::new());
                keys.len() - 1
            });
            members[e].push(j);
        }
        let mut rows = Vec::with_capacity(keys.len());
        for m in &members {
            let sel = tape.select_rows(mentions, m)?;
            rows.push(if m.len() == 1 { sel } else { tape.max_pool_rows(sel)? });
        }
        let vectors = Some(tape.concat_rows(&rows)?);
        Ok(Self { keys, vectors })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn index_of(&self, key: &str) -> Option<usize> {
        self.keys.iter().position(|k| k == key)
    }

    /// Mean of the assigned entity vectors, or `None` for an empty path.
    pub fn path_memory(&self, tape: &mut Tape, assigned: &[Option<usize>]) -> Result<Option<Var>> {
        let idx: Vec<usize> = assigned.iter().flatten().copied().collect();
        match (self.vectors, idx.is_empty()) {
            (Some(v), false) => {
                let sel = tape.select_rows(v, &idx)?;
                Ok(Some(tape.mean_rows(sel)?))
            }
            _ => Ok(None),
        }
    }
}

/// `-Σ_m w_pos·y_m·log C_m + (1 - y_m)·log(1 - C_m)` on detection logits.
pub fn detection_loss(tape: &mut Tape, logits: Var, gold: &[bool], pos_weight: f64) -> Result<Var> {
    let targets: Vec<f64> = gold.iter().map(|&g| if g { 1.0 } else { 0.0 }).collect();
    Ok(tape.bce_with_logits(logits, &targets, pos_weight)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub entity: f64,
    pub detection: f64,
    pub argument: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { entity: 0.05, detection: 0.95, argument: 0.95 }
    }
}

pub fn total_loss(tape: &mut Tape, l_er: Var, l_ed: Var, l_ae: Var, w: &LossWeights) -> Result<Var> {
    let a = tape.scale(l_er, w.entity)?;
    let b = tape.scale(l_ed, w.detection)?;
    let c = tape.scale(l_ae, w.argument)?;
    Ok(tape.add_all(&[a, b, c])?)
}

/// A finished path: one entity index or `None` per role, in schema order.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedPath {
    pub assignment: Vec<Option<usize>>,
    pub score: f64,
}

/// Expands paths role by role. `score(n, prefix)` returns per-entity
/// probabilities for role `n` given the assignment so far. A path branches on
/// every entity above 0.5, or takes one NULL branch (weighted by one minus the
/// best probability) when none qualifies. At most `max_paths` paths survive
/// each step, ranked by the product of branch weights; ties keep generation
/// order, i.e. earlier paths and lower entity indices first. Paths without
/// any assigned entity are dropped and identical assignments merged.
pub fn expand_paths(
    num_roles: usize,
    max_paths: usize,
    mut score: impl FnMut(usize, &[Option<usize>]) -> Result<Vec<f64>>,
) -> Result<Vec<DecodedPath>> {
    let mut live = vec![DecodedPath { assignment: Vec::with_capacity(num_roles), score: 1.0 }];
    for n in 0..num_roles {
        let mut next = Vec::new();
        for path in &live {
            let probs = score(n, &path.assignment)?;
            let mut branched = false;
            for (i, &p) in probs.iter().enumerate() {
                if p > 0.5 {
                    let mut a = path.assignment.clone();
                    a.push(Some(i));
                    next.push(DecodedPath { assignment: a, score: path.score * p });
                    branched = true;
                }
            }
            if !branched {
                let best = probs.iter().copied().fold(0.0, f64::max);
                let mut a = path.assignment.clone();
                a.push(None);
                next.push(DecodedPath { assignment: a, score: path.score * (1.0 - best) });
            }
        }
        if next.len() > max_paths.max(1) {
            next.sort_by(|a, b| b.score.total_cmp(&a.score));
            next.truncate(max_paths.max(1));
        }
        live = next;
    }
    let mut out: Vec<DecodedPath> = Vec::new();
    for p in live {
        if p.assignment.iter().all(Option::is_none) {
            continue;
        }
        match out.iter_mut().find(|q| q.assignment == p.assignment) {
            Some(q) => q.score = q.score.max(p.score),
            None => out.push(p),
        }
    }
    Ok(out)
}

/// How the argument loss lays out supervision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgumentLossMode {
    /// One step per (gold record, role), conditioned on the gold prefix.
    /// Targets mark every entity that continues some gold record sharing
    /// that prefix, so records with a common prefix do not contradict.
    #[default]
    GoldPath,
    /// One step per (type, role) whose targets are the union over gold records.
    Flat,
}

/// A supervised argument-scoring step: entity targets for role `role` of
/// type `event_type`, given the entities already on the path.
#[derive(Clone, Debug, PartialEq)]
pub struct ArgumentStep {
    pub event_type: usize,
    pub role: usize,
    pub prefix: Vec<Option<usize>>,
    pub targets: Vec<f64>,
}

/// Gold arguments per record of one type: role-ordered entity indices, with
/// `Err(())` marking a gold argument string that matches no entity.
pub type GoldPath = Vec<Option<std::result::Result<usize, ()>>>;

/// Lays out argument supervision for one event type. Returns the steps and the
/// number of skipped slots whose gold argument matched no entity.
pub fn argument_steps(
    event_type: usize,
    gold_paths: &[GoldPath],
    num_entities: usize,
    mode: ArgumentLossMode,
) -> (Vec<ArgumentStep>, usize) {
    let mut steps = Vec::new();
    let mut skipped = 0;
    if num_entities == 0 {
        let missing = gold_paths.iter().flatten().filter(|s| matches!(s, Some(Err(())))).count();
        return (steps, missing);
    }
    match mode {
        ArgumentLossMode::GoldPath => {
            // Entities on each path's prefix; unmatched gold arguments count as NULL.
            let resolved: Vec<Vec<Option<usize>>> =
                gold_paths.iter().map(|p| p.iter().map(|s| s.and_then(|r| r.ok())).collect()).collect();
            for (k, path) in gold_paths.iter().enumerate() {
                for (n, slot) in path.iter().enumerate() {
                    if matches!(slot, Some(Err(()))) {
                        skipped += 1;
                        continue;
                    }
                    let prefix = &resolved[k][..n];
                    let mut targets = vec![0.0; num_entities];
                    for other in resolved.iter().filter(|o| &o[..n] == prefix) {
                        if let Some(i) = other[n] {
                            targets[i] = 1.0;
                        }
                    }
                    steps.push(ArgumentStep { event_type, role: n, prefix: prefix.to_vec(), targets });
                }
            }
        }
        ArgumentLossMode::Flat => {
            let num_roles = gold_paths.first().map_or(0, Vec::len);
            for n in 0..num_roles {
                let mut targets = vec![0.0; num_entities];
                for path in gold_paths {
                    match path[n] {
                        Some(Ok(i)) => targets[i] = 1.0,
                        Some(Err(())) => skipped += 1,
                        None => {}
                    }
                }
                steps.push(ArgumentStep { event_type, role: n, prefix: Vec::new(), targets });
            }
        }
    }
    (steps, skipped)
}

/// Probabilities from a column of logits.
pub fn probabilities(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&z| crate::tensor::sigmoid(z)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_total() {
        let store = ParamStore::new(0);
        let mut tape = Tape::eval(&store);
        let a = tape.constant(Tensor::scalar(2.0));
        let b = tape.constant(Tensor::scalar(1.0));
        let c = tape.constant(Tensor::scalar(1.0));
        let t = total_loss(&mut tape, a, b, c, &LossWeights::default()).unwrap();
        assert!((tape.value(t).item().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn detection_loss_at_half_is_ln2() {
        let store = ParamStore::new(0);
        let mut tape = Tape::eval(&store);
        let z = tape.constant(Tensor::scalar(0.0));
        let l = detection_loss(&mut tape, z, &[false], 1.0).unwrap();
        assert!((tape.value(l).item().unwrap() - 2f64.ln()).abs() < 1e-12);
        let l = detection_loss(&mut tape, z, &[true], 1.0).unwrap();
        assert!((tape.value(l).item().unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_head_scores_half() {
        let mut store = ParamStore::new(0);
        let head = ArgumentHead::new(&mut store, "arg", 3).unwrap();
        store.get_mut(head.ffn.out.weight).value.fill(0.0);
        let mut tape = Tape::eval(&store);
        let e = tape.constant(Tensor::zeros(&[1, 3]));
        let r = tape.constant(Tensor::zeros(&[1, 3]));
        let z = head.logits(&mut tape, e, Some(r), None, 0.0).unwrap();
        assert_eq!(probabilities(tape.value(z)), vec![0.5]);
    }

    #[test]
    fn no_detection_no_records() {
        let paths = expand_paths(2, 32, |_, _| Ok(vec![0.1, 0.2])).unwrap();
        assert!(paths.is_empty());
    }

    #[test]
    fn two_records_share_second_role() {
        let paths = expand_paths(2, 32, |n, _| Ok(if n == 0 { vec![0.9, 0.8, 0.1] } else { vec![0.1, 0.2, 0.7] }))
            .unwrap();
        let got: Vec<_> = paths.iter().map(|p| p.assignment.clone()).collect();
        assert_eq!(got, vec![vec![Some(0), Some(2)], vec![Some(1), Some(2)]]);
        assert!((paths[0].score - 0.63).abs() < 1e-12);
    }

    #[test]
    fn caps_live_paths() {
        let mut max_seen = 0;
        let paths = expand_paths(3, 4, |_, prefix| {
            max_seen = max_seen.max(prefix.len());
            Ok(vec![0.9, 0.8, 0.7])
        })
        .unwrap();
        assert!(paths.len() <= 4);
        assert_eq!(paths[0].assignment, vec![Some(0), Some(0), Some(0)]);
    }

    #[test]
    fn gold_path_layout_repeats_shared_steps() {
        let gold: Vec<GoldPath> = vec![vec![Some(Ok(0)), Some(Ok(2))], vec![Some(Ok(1)), Some(Ok(2))]];
        let (steps, skipped) = argument_steps(0, &gold, 3, ArgumentLossMode::GoldPath);
        assert_eq!(skipped, 0);
        assert_eq!(steps.len(), 4);
        assert_eq!(steps[1].prefix, vec![Some(0)]);
        assert_eq!(steps[3].prefix, vec![Some(1)]);
        assert_eq!(steps[1].targets, steps[3].targets);
        // Both records start from the empty prefix, so both first arguments are positive.
        assert_eq!(steps[0].targets, vec![1.0, 1.0, 0.0]);
        assert_eq!(steps[0].targets, steps[2].targets);
        let (flat, _) = argument_steps(0, &gold, 3, ArgumentLossMode::Flat);
        assert_eq!(flat.len(), 2);
        assert_eq!(flat[0].targets, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn unmatched_gold_argument_is_skipped() {
        let gold: Vec<GoldPath> = vec![vec![Some(Err(())), None]];
        let (steps, skipped) = argument_steps(0, &gold, 2, ArgumentLossMode::GoldPath);
        assert_eq!(skipped, 1);
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].role, 1);
    }
}
