//! The similarity scores themselves taken as a test subject.

use serde::{Deserialize, Serialize};

use super::builder::Triad;
use super::similarity::SimilarityMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriadChoice {
    pub triad_id: String,
    /// Image judged to be the odd one out.
    pub chosen_id: String,
    pub correct: bool,
    /// More than one pair shared the maximal similarity.
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmAudit {
    pub proportion_correct: f64,
    pub n_triads: usize,
    pub n_ties: usize,
    pub choices: Vec<TriadChoice>,
}

/// Answers each triad by calling the most similar pair "same" and picking the
/// remaining image. Tied pairs resolve to the lexicographically smallest pair.
pub fn simulate_algorithm_subject(triads: &[Triad], matrix: &SimilarityMatrix) -> Result<AlgorithmAudit> {
    if triads.is_empty() {
        return Err(Error::InvalidInput("no triads to audit".into()));
    }
    let mut choices = Vec::with_capacity(triads.len());
    for t in triads {
        let ids = t.image_ids();
        // (pair similarity, sorted pair ids, excluded image)
        let mut pairs: Vec<(f64, (&str, &str), &str)> = [(0, 1, 2), (0, 2, 1), (1, 2, 0)]
            .iter()
            .map(|&(i, j, k)| {
                let s = matrix.get(ids[i], ids[j])?;
                let key = if ids[i] <= ids[j] { (ids[i], ids[j]) } else { (ids[j], ids[i]) };
                Ok((s, key, ids[k]))
            })
            .collect::<Result<_>>()?;
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let tie = pairs[0].0 == pairs[1].0;
        let chosen = pairs[0].2;
        choices.push(TriadChoice {
            triad_id: t.triad_id.clone(),
            chosen_id: chosen.to_string(),
            correct: chosen == t.foil_id,
            tie,
        });
    }
    let n_correct = choices.iter().filter(|c| c.correct).count();
    Ok(AlgorithmAudit {
        proportion_correct: n_correct as f64 / choices.len() as f64,
        n_triads: choices.len(),
        n_ties: choices.iter().filter(|c| c.tie).count(),
        choices,
    })
}
