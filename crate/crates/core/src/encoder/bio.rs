//! BIO label inventory and span harvesting.

use serde::{Deserialize, Serialize};

use crate::corpus::GoldMention;

/// Labels are `O` (index 0) then `B-t`, `I-t` for each entity type `t` in order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub entity_types: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tag {
    Outside,
    Begin(usize),
    Inside(usize),
}

pub const OUTSIDE: usize = 0;

impl LabelSet {
    pub fn new(entity_types: Vec<String>) -> Self {
        Self { entity_types }
    }

    pub fn len(&self) -> usize {
        2 * self.entity_types.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn begin(&self, t: usize) -> usize {
        1 + 2 * t
    }

    pub fn inside(&self, t: usize) -> usize {
        2 + 2 * t
    }

    pub fn tag(&self, label: usize) -> Tag {
        match label {
            0 => Tag::Outside,
            l if l % 2 == 1 => Tag::Begin((l - 1) / 2),
            l => Tag::Inside((l - 2) / 2),
        }
    }

    pub fn type_index(&self, entity_type: &str) -> Option<usize> {
        self.entity_types.iter().position(|t| t == entity_type)
    }

    pub fn name(&self, label: usize) -> String {
        match self.tag(label) {
            Tag::Outside => "O".into(),
            Tag::Begin(t) => format!("B-{}", self.entity_types[t]),
            Tag::Inside(t) => format!("I-{}", self.entity_types[t]),
        }
    }

    /// Gold label sequence for one sentence. Mentions of unknown entity types
    /// and mentions overlapping an earlier one are left as `O`.
    pub fn encode(&self, len: usize, mentions: &[&GoldMention]) -> Vec<usize> {
        let mut labels = vec![OUTSIDE; len];
        for m in mentions {
            let Some(t) = self.type_index(&m.entity_type) else { continue };
            if m.end > len || labels[m.start..m.end].iter().any(|&l| l != OUTSIDE) {
                continue;
            }
            labels[m.start] = self.begin(t);
            for l in &mut labels[m.start + 1..m.end] {
                *l = self.inside(t);
            }
        }
        labels
    }
}

/// A harvested entity span; `end` is exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub entity_type: usize,
}

/// Turns contiguous `B-t (I-t)*` runs into spans. An `I-t` that does not
/// continue a run of type `t` starts a new span, as if it were `B-t`.
pub fn harvest_spans(labels: &[usize], set: &LabelSet) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<Span> = None;
    for (i, &l) in labels.iter().enumerate() {
        match set.tag(l) {
            Tag::Outside => spans.extend(open.take()),
            Tag::Begin(t) => {
                spans.extend(open.take());
                open = Some(Span { start: i, end: i + 1, entity_type: t });
            }
            Tag::Inside(t) => match &mut open {
                Some(s) if s.entity_type == t => s.end = i + 1,
                _ => {
                    spans.extend(open.take());
                    open = Some(Span { start: i, end: i + 1, entity_type: t });
                }
            },
        }
    }
    spans.extend(open);
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set() -> LabelSet {
        LabelSet::new(vec!["x".into(), "y".into()])
    }

    #[test]
    fn label_count() {
        assert_eq!(set().len(), 5);
        assert_eq!(set().name(3), "B-y");
    }

    #[test]
    fn begin_inside_outside() {
        let s = set();
        let spans = harvest_spans(&[s.begin(0), s.inside(0), OUTSIDE], &s);
        assert_eq!(spans, vec![Span { start: 0, end: 2, entity_type: 0 }]);
        assert!(harvest_spans(&[OUTSIDE, OUTSIDE], &s).is_empty());
    }

    #[test]
    fn orphan_inside_is_repaired() {
        let s = set();
        let spans = harvest_spans(&[OUTSIDE, s.inside(1), s.inside(1), s.inside(0)], &s);
        assert_eq!(
            spans,
            vec![Span { start: 1, end: 3, entity_type: 1 }, Span { start: 3, end: 4, entity_type: 0 }]
        );
    }

    #[test]
    fn encode_round_trips_through_harvest() {
        let s = set();
        let m = GoldMention { sentence_index: 0, start: 1, end: 3, entity_type: "y".into(), surface: "a b".into() };
        let labels = s.encode(4, &[&m]);
        assert_eq!(labels, vec![0, 3, 4, 0]);
        assert_eq!(harvest_spans(&labels, &s), vec![Span { start: 1, end: 3, entity_type: 1 }]);
    }
}
