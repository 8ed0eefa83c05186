//! Role-level micro-F1 with greedy record alignment, bucket breakdowns and
//! the prediction file format.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{bucketize, Document, EventRecord, RecordBucket, ScatterBucket};
use crate::error::{Result, SeaError};
use crate::model::{ScoredRecord, SeaModel};

/// Slot-level true positives, false positives and false negatives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
}

impl From<Counts> for Score {
    fn from(c: Counts) -> Self {
        Self { precision: c.precision(), recall: c.recall(), f1: c.f1(), counts: c }
    }
}

/// Matched `(prediction, gold)` index pairs and the slot counts they imply.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Alignment {
    pub pairs: Vec<(usize, usize)>,
    pub counts: Counts,
    pub per_type: BTreeMap<String, Counts>,
}

fn overlap(a: &EventRecord, b: &EventRecord) -> usize {
    a.filled().filter(|(r, v)| b.arg(r) == Some(v)).count()
}

/// Aligns the records of one document one-to-one within each event type,
/// repeatedly taking the pair with the most identical filled slots (ties go
/// to the earlier prediction, then the earlier gold record). Aligned pairs
/// count slot-wise; leftover records count all their filled slots as false
/// positives or false negatives.
pub fn match_records(pred: &[EventRecord], gold: &[EventRecord]) -> Alignment {
    let mut out = Alignment::default();
    let mut pred_used = vec![false; pred.len()];
    let mut gold_used = vec![false; gold.len()];
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gold.iter().enumerate() {
            if p.event_type == g.event_type {
                let o = overlap(p, g);
                if o > 0 {
                    candidates.push((o, i, j));
                }
            }
        }
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (o, i, j) in candidates {
        if pred_used[i] || gold_used[j] {
            continue;
        }
        pred_used[i] = true;
        gold_used[j] = true;
        out.pairs.push((i, j));
        let c = Counts { tp: o, fp: pred[i].filled().count() - o, fn_: gold[j].filled().count() - o };
        out.per_type.entry(pred[i].event_type.clone()).or_default().add(c);
    }
    for (p, _) in pred.iter().zip(&pred_used).filter(|(_, used)| !**used) {
        out.per_type.entry(p.event_type.clone()).or_default().add(Counts { fp: p.filled().count(), ..Counts::default() });
    }
    for (g, _) in gold.iter().zip(&gold_used).filter(|(_, used)| !**used) {
        out.per_type.entry(g.event_type.clone()).or_default().add(Counts { fn_: g.filled().count(), ..Counts::default() });
    }
    out.pairs.sort_unstable();
    for c in out.per_type.values() {
        out.counts.add(*c);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketScore {
    pub documents: usize,
    #[serde(flatten)]
    pub score: Score,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
    pub documents: usize,
    /// Keys: `single`, `multi`, `I`, `II`, `III`.
    pub buckets: BTreeMap<String, BucketScore>,
    pub per_type: BTreeMap<String, Score>,
    /// Inclusive upper scattering-score bounds of buckets I and II.
    pub scatter_boundaries: [f64; 2],
}

pub const BUCKETS: [&str; 5] = ["single", "multi", "I", "II", "III"];

fn record_key(b: RecordBucket) -> &'static str {
    match b {
        RecordBucket::Single => "single",
        RecordBucket::Multi => "multi",
    }
}

fn scatter_key(b: ScatterBucket) -> &'static str {
    match b {
        ScatterBucket::I => "I",
        ScatterBucket::II => "II",
        ScatterBucket::III => "III",
    }
}

/// Scores `predictions[k]` against the gold records of `gold_docs[k]`.
pub fn evaluate_predictions(gold_docs: &[Document], predictions: &[Vec<EventRecord>]) -> Result<MetricsReport> {
    if gold_docs.len() != predictions.len() {
        return Err(SeaError::Config(format!(
            "{} prediction lists for {} documents",
            predictions.len(),
            gold_docs.len()
        )));
    }
    let buckets = bucketize(gold_docs);
    let mut total = Counts::default();
    let mut by_bucket: BTreeMap<&str, (usize, Counts)> = BUCKETS.iter().map(|&b| (b, (0, Counts::default()))).collect();
    let mut per_type: BTreeMap<String, Counts> = BTreeMap::new();
    for ((doc, pred), label) in gold_docs.iter().zip(predictions).zip(&buckets.labels) {
        let a = match_records(pred, &doc.records);
        total.add(a.counts);
        for (t, c) in a.per_type {
            per_type.entry(t).or_default().add(c);
        }
        for key in [record_key(label.records), scatter_key(label.scatter)] {
            let e = by_bucket.get_mut(key).expect("bucket key");
            e.0 += 1;
            e.1.add(a.counts);
        }
    }
    Ok(MetricsReport {
        precision: total.precision(),
        recall: total.recall(),
        f1: total.f1(),
        counts: total,
        documents: gold_docs.len(),
        buckets: by_bucket
            .into_iter()
            .map(|(k, (n, c))| (k.to_string(), BucketScore { documents: n, score: c.into() }))
            .collect(),
        per_type: per_type.into_iter().map(|(k, c)| (k, c.into())).collect(),
        scatter_boundaries: buckets.boundaries,
    })
}

/// Predicts every document with `model` and scores the result.
pub fn evaluate(model: &SeaModel, docs: &[Document]) -> Result<MetricsReport> {
    let preds = predict_all(model, docs)?;
    let records: Vec<Vec<EventRecord>> =
        preds.into_iter().map(|p| p.records.into_iter().map(|r| r.record).collect()).collect();
    evaluate_predictions(docs, &records)
}

/// Predicted records of one document, as stored in prediction files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentPrediction {
    pub doc_id: String,
    pub records: Vec<ScoredRecord>,
}

pub fn predict_all(model: &SeaModel, docs: &[Document]) -> Result<Vec<DocumentPrediction>> {
    docs.iter()
        .map(|d| Ok(DocumentPrediction { doc_id: d.doc_id.clone(), records: model.predict(d)? }))
        .collect()
}

pub fn write_predictions(path: &Path, preds: &[DocumentPrediction]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| SeaError::io(path, e))?;
    for p in preds {
        writeln!(f, "{}", serde_json::to_string(p)?).map_err(|e| SeaError::io(path, e))?;
    }
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<DocumentPrediction>> {
    let text = fs::read_to_string(path).map_err(|e| SeaError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| SeaError::Document {
                doc_id: format!("{}:{}", path.display(), i + 1),
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Orders `preds` like `docs` by document id; documents without an entry get
/// no predicted records.
pub fn align_predictions(docs: &[Document], preds: Vec<DocumentPrediction>) -> Vec<Vec<EventRecord>> {
    let mut by_id: BTreeMap<String, Vec<EventRecord>> = BTreeMap::new();
    for p in preds {
        by_id.entry(p.doc_id).or_default().extend(p.records.into_iter().map(|r| r.record));
    }
    docs.iter().map(|d| by_id.remove(&d.doc_id).unwrap_or_default()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: &str, args: &[(&str, &str)]) -> EventRecord {
        EventRecord {
            event_type: t.into(),
            args: args.iter().map(|(r, a)| (r.to_string(), Some(a.to_string()))).collect(),
        }
    }

    #[test]
    fn identical_records_are_all_true_positives() {
        let r = rec("A", &[("r1", "a"), ("r2", "b")]);
        let a = match_records(std::slice::from_ref(&r), std::slice::from_ref(&r));
        assert_eq!(a.counts, Counts { tp: 2, fp: 0, fn_: 0 });
    }

    #[test]
    fn one_wrong_slot() {
        let a = match_records(&[rec("A", &[("r1", "a"), ("r2", "c")])], &[rec("A", &[("r1", "a"), ("r2", "b")])]);
        assert_eq!(a.counts, Counts { tp: 1, fp: 1, fn_: 1 });
        assert!((a.counts.f1() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn larger_overlap_wins() {
        let gold = [rec("A", &[("r1", "a"), ("r2", "b"), ("r3", "c")])];
        let pred = [rec("A", &[("r1", "a"), ("r2", "x")]), rec("A", &[("r1", "a"), ("r2", "b")])];
        let a = match_records(&pred, &gold);
        assert_eq!(a.pairs, vec![(1, 0)]);
        assert_eq!(a.counts, Counts { tp: 2, fp: 2, fn_: 1 });
    }

    #[test]
    fn cross_type_never_aligns() {
        let a = match_records(&[rec("A", &[("r", "a")])], &[rec("B", &[("r", "a")])]);
        assert!(a.pairs.is_empty());
        assert_eq!(a.counts, Counts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn null_slots_never_count() {
        let mut p = rec("A", &[("r1", "a")]);
        p.args.insert("r2".into(), None);
        let a = match_records(&[p], &[rec("A", &[("r1", "a")])]);
        assert_eq!(a.counts, Counts { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn empty_predictions() {
        let c = match_records(&[], &[rec("A", &[("r1", "a")])]).counts;
        assert_eq!((c.precision(), c.recall(), c.f1()), (0.0, 0.0, 0.0));
    }
}
