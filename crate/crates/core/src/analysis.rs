//! Intra- versus inter-class cosine similarity of aggregated event-type
//! representations.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Result, SeaError};
use crate::model::SeaModel;
use crate::tensor::cosine;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Documents sampled per type that contain it.
    pub positives: usize,
    /// Documents sampled per type that lack it.
    pub negatives: usize,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { positives: 50, negatives: 200, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityStatus {
    Ok,
    InsufficientData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeSimilarity {
    pub event_type: String,
    pub positives: usize,
    pub negatives: usize,
    pub status: SimilarityStatus,
    /// Mean pairwise cosine among positive representations.
    pub intra: Option<f64>,
    /// Mean cosine between positive and negative representations.
    pub inter: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub types: Vec<TypeSimilarity>,
}

/// A labelled vector for external projection.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub event_type: String,
    pub positive: bool,
    pub vector: Vec<f64>,
}

/// Mean cosine over unordered pairs of distinct items.
pub fn mean_pairwise_cosine(vectors: &[Vec<f64>]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, a) in vectors.iter().enumerate() {
        for b in &vectors[i + 1..] {
            sum += cosine(a, b);
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Mean cosine over all cross pairs.
pub fn mean_cross_cosine(a: &[Vec<f64>], b: &[Vec<f64>]) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let sum: f64 = a.iter().flat_map(|x| b.iter().map(move |y| cosine(x, y))).sum();
    Some(sum / (a.len() * b.len()) as f64)
}

pub fn similarity_analysis(
    model: &SeaModel,
    docs: &[Document],
    cfg: &AnalysisConfig,
) -> Result<(SimilarityReport, Vec<Embedding>)> {
    let reps = docs.iter().map(|d| model.type_representations(d)).collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut types = Vec::new();
    let mut dump = Vec::new();
    for (m, t) in model.schema.types.iter().enumerate() {
        let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
            (0..docs.len()).partition(|&k| docs[k].records.iter().any(|r| r.event_type == t.name));
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        pos.truncate(cfg.positives);
        neg.truncate(cfg.negatives);
        let vec_of = |k: usize| reps[k].row_slice(m).to_vec();
        let pv: Vec<Vec<f64>> = pos.iter().map(|&k| vec_of(k)).collect();
        let nv: Vec<Vec<f64>> = neg.iter().map(|&k| vec_of(k)).collect();
        let status = if pv.len() < 2 { SimilarityStatus::InsufficientData } else { SimilarityStatus::Ok };
        let (intra, inter) = match status {
            SimilarityStatus::Ok => (mean_pairwise_cosine(&pv), mean_cross_cosine(&pv, &nv)),
            SimilarityStatus::InsufficientData => (None, None),
        };
        types.push(TypeSimilarity {
            event_type: t.name.clone(),
            positives: pv.len(),
            negatives: nv.len(),
            status,
            intra,
            inter,
        });
        for (vs, positive) in [(pv, true), (nv, false)] {
            dump.extend(vs.into_iter().map(|vector| Embedding { event_type: t.name.clone(), positive, vector }));
        }
    }
    Ok((SimilarityReport { types }, dump))
}

/// One line per vector: `type:pos|neg` then tab-separated components.
pub fn write_embeddings_tsv(path: &Path, embeddings: &[Embedding]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| SeaError::io(path, e))?;
    for e in embeddings {
        let label = format!("{}:{}", e.event_type, if e.positive { "pos" } else { "neg" });
        let values: Vec<String> = e.vector.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{label}\t{}", values.join("\t")).map_err(|e| SeaError::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors_have_unit_intra() {
        let v = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]];
        assert!((mean_pairwise_cosine(&v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_sets_have_zero_inter() {
        let a = vec![vec![1.0, 0.0], vec![2.0, 0.0]];
        let b = vec![vec![0.0, 3.0]];
        assert_eq!(mean_cross_cosine(&a, &b), Some(0.0));
    }

    #[test]
    fn single_vector_has_no_pairs() {
        assert_eq!(mean_pairwise_cosine(&[vec![1.0]]), None);
    }
}
