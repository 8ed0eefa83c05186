use serde::{Deserialize, Serialize};

use super::Document;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecordBucket {
    Single,
    Multi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScatterBucket {
    I,
    II,
    III,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocBuckets {
    pub records: RecordBucket,
    pub scatter: ScatterBucket,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub labels: Vec<DocBuckets>,
    /// Upper bounds (inclusive) of buckets I and II.
    pub boundaries: [f64; 2],
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Labels each document single/multi by its gold record count and I/II/III
/// by the corpus terciles of its scattering score. Documents with no gold
/// record count as single.
pub fn bucketize(docs: &[Document]) -> BucketReport {
    let scores: Vec<f64> = docs.iter().map(Document::scattering_score).collect();
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let boundaries = [quantile(&sorted, 1.0 / 3.0), quantile(&sorted, 2.0 / 3.0)];
    let labels = docs
        .iter()
        .zip(&scores)
        .map(|(d, &score)| DocBuckets {
            records: if d.records.len() >= 2 { RecordBucket::Multi } else { RecordBucket::Single },
            scatter: if score <= boundaries[0] {
                ScatterBucket::I
            } else if score <= boundaries[1] {
                ScatterBucket::II
            } else {
                ScatterBucket::III
            },
            score,
        })
        .collect();
    BucketReport { labels, boundaries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EventRecord, GoldMention};

    /// A document with one record whose `k` arguments sit in `k` sentences.
    fn doc_with_spread(k: usize, records: usize) -> Document {
        let sentences: Vec<Vec<String>> = (0..k.max(1)).map(|i| vec![format!("e{i}")]).collect();
        let mentions = (0..k)
            .map(|i| GoldMention {
                sentence_index: i,
                start: 0,
                end: 1,
                entity_type: "E".into(),
                surface: format!("e{i}"),
            })
            .collect();
        let rec = EventRecord {
            event_type: "T".into(),
            args: (0..k).map(|i| (format!("r{i}"), Some(format!("e{i}")))).collect(),
        };
        Document { doc_id: format!("d{k}"), sentences, mentions, records: vec![rec; records] }
    }

    #[test]
    fn terciles_of_three_scores() {
        let docs = vec![doc_with_spread(1, 1), doc_with_spread(5, 1), doc_with_spread(9, 1)];
        let r = bucketize(&docs);
        let got: Vec<_> = r.labels.iter().map(|l| l.scatter).collect();
        assert_eq!(got, vec![ScatterBucket::I, ScatterBucket::II, ScatterBucket::III]);
        assert!(r.boundaries[0] >= 1.0 && r.boundaries[0] < 5.0);
        assert!(r.boundaries[1] >= 5.0 && r.boundaries[1] < 9.0);
    }

    #[test]
    fn single_and_multi() {
        let r = bucketize(&[doc_with_spread(2, 1), doc_with_spread(2, 2)]);
        assert_eq!(r.labels[0].records, RecordBucket::Single);
        assert_eq!(r.labels[1].records, RecordBucket::Multi);
    }
}
