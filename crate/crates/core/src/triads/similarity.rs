use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embedding::{validate_corpus, EmbeddingRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SimilarityMetric {
    #[default]
    Cosine,
    NegEuclidean,
}

impl std::str::FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cosine" => Ok(Self::Cosine),
            "neg_euclidean" | "euclidean" => Ok(Self::NegEuclidean),
            other => Err(Error::InvalidInput(format!("unknown similarity metric `{other}`"))),
        }
    }
}

/// Dense symmetric image-by-image similarity scores.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    image_ids: Vec<String>,
    index: HashMap<String, usize>,
    scores: Vec<f64>,
    metric: SimilarityMetric,
}

impl SimilarityMatrix {
    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn metric(&self) -> SimilarityMetric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }

    pub fn position(&self, image_id: &str) -> Option<usize> {
        self.index.get(image_id).copied()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.image_ids.len() + j]
    }

    /// Similarity between two images by id.
    pub fn get(&self, a: &str, b: &str) -> Result<f64> {
        let i = self.position(a).ok_or_else(|| Error::MissingImage(a.to_string()))?;
        let j = self.position(b).ok_or_else(|| Error::MissingImage(b.to_string()))?;
        Ok(self.at(i, j))
    }
}

pub fn build_similarity(corpus: &[EmbeddingRecord], metric: SimilarityMetric) -> Result<SimilarityMatrix> {
    validate_corpus(corpus)?;
    let vectors: Vec<Vec<f64>> = match metric {
        SimilarityMetric::Cosine => corpus
            .iter()
            .map(|rec| {
                let norm = rec.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    Err(Error::ZeroNorm {
                        image_id: rec.image_id.clone(),
                    })
                } else {
                    Ok(rec.vector.iter().map(|v| v / norm).collect())
                }
            })
            .collect::<Result<_>>()?,
        SimilarityMetric::NegEuclidean => corpus.iter().map(|rec| rec.vector.clone()).collect(),
    };
    let n = corpus.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let (x, y) = (&vectors[i], &vectors[j]);
                    match metric {
                        SimilarityMetric::Cosine if i == j => 1.0,
                        SimilarityMetric::Cosine => x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0),
                        SimilarityMetric::NegEuclidean => -x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
                    }
                })
                .collect()
        })
        .collect();
    let image_ids: Vec<String> = corpus.iter().map(|r| r.image_id.clone()).collect();
    let index = image_ids.iter().enumerate().map(|(k, id)| (id.clone(), k)).collect();
    Ok(SimilarityMatrix {
        image_ids,
        index,
        scores: rows.into_iter().flatten().collect(),
        metric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, v: Vec<f64>) -> EmbeddingRecord {
        EmbeddingRecord {
            image_id: id.into(),
            identity_id: id.into(),
            gender: "f".into(),
            race: "x".into(),
            vector: v,
        }
    }

    #[test]
    fn cosine_basics() {
        let m = build_similarity(
            &[rec("a", vec![1.0, 0.0]), rec("b", vec![2.0, 0.0]), rec("c", vec![0.0, 3.0])],
            SimilarityMetric::Cosine,
        )
        .unwrap();
        assert_eq!(m.get("a", "b").unwrap(), 1.0);
        assert_eq!(m.get("a", "c").unwrap(), 0.0);
        assert_eq!(m.get("c", "c").unwrap(), 1.0);
        assert!(matches!(m.get("a", "z"), Err(Error::MissingImage(_))));
    }

    #[test]
    fn zero_norm_names_the_image() {
        let err = build_similarity(&[rec("a", vec![1.0, 0.0]), rec("z", vec![0.0, 0.0])], SimilarityMetric::Cosine).unwrap_err();
        assert!(matches!(err, Error::ZeroNorm { image_id } if image_id == "z"));
        // Euclidean does not care
        assert!(build_similarity(&[rec("a", vec![1.0, 0.0]), rec("z", vec![0.0, 0.0])], SimilarityMetric::NegEuclidean).is_ok());
    }
}
