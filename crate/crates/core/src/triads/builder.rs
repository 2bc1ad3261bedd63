//! Greedy construction of maximally confusable triads.
//!
//! Different-identity image pairs are visited from most to least similar.
//! For a pair `(x, y)` either side can become the repeated identity: the
//! side's image is `A_i`, its least similar unused same-identity image is
//! `A_0` and the other image is the foil `B_0`. Between the two sides the
//! one whose same-identity pair is less similar wins. Each identity serves
//! as the repeated identity at most once and every image is used once.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::embedding::EmbeddingRecord;
use super::similarity::SimilarityMatrix;
use crate::error::{Error, Result};
use crate::rng;
use crate::schema::{self, TRIAD_SCHEMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriadConstraints {
    pub yoke_gender: bool,
    pub yoke_race: bool,
    /// Seeds the on-screen order of the three images.
    pub seed: u64,
}

impl Default for TriadConstraints {
    fn default() -> Self {
        Self {
            yoke_gender: true,
            yoke_race: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triad {
    pub triad_id: String,
    /// `A_0`: the repeated identity's image least similar to `A_i`.
    pub anchor_same_id: String,
    /// `A_i`: the repeated identity's image in the most similar cross pair.
    pub paired_same_id: String,
    /// `B_0`: the different-identity image.
    pub foil_id: String,
    /// Image ids in presentation order.
    pub presentation: [String; 3],
    pub odd_one_out_index: u8,
    pub same_pair_similarity: f64,
    pub cross_pair_similarity: f64,
}

impl Triad {
    pub fn image_ids(&self) -> [&str; 3] {
        [&self.anchor_same_id, &self.paired_same_id, &self.foil_id]
    }
}

struct Candidate {
    same: usize,
    foil: usize,
    anchor: usize,
    same_similarity: f64,
}

pub fn build_triads(corpus: &[EmbeddingRecord], matrix: &SimilarityMatrix, constraints: TriadConstraints) -> Result<Vec<Triad>> {
    let pos: Vec<usize> = corpus
        .iter()
        .map(|r| matrix.position(&r.image_id).ok_or_else(|| Error::MissingImage(r.image_id.clone())))
        .collect::<Result<_>>()?;
    let yoked = |a: &EmbeddingRecord, b: &EmbeddingRecord| {
        (!constraints.yoke_gender || a.gender == b.gender) && (!constraints.yoke_race || a.race == b.race)
    };

    let mut by_identity: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (k, rec) in corpus.iter().enumerate() {
        by_identity.entry(rec.identity_id.as_str()).or_default().push(k);
    }
    for (identity, images) in &by_identity {
        if images.len() < 2 {
            warn!("identity `{identity}` has a single image; it can only serve as a foil");
        }
    }

    // different-identity pairs, most similar first, ties by image id
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..corpus.len() {
        for j in (i + 1)..corpus.len() {
            if corpus[i].identity_id != corpus[j].identity_id && yoked(&corpus[i], &corpus[j]) {
                pairs.push((i, j, matrix.at(pos[i], pos[j])));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoTriads("no eligible different-identity pairs".into()));
    }
    let key = |i: usize, j: usize| {
        let (a, b) = (&corpus[i].image_id, &corpus[j].image_id);
        if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        }
    };
    pairs.sort_by(|x, y| y.2.total_cmp(&x.2).then_with(|| key(x.0, x.1).cmp(&key(y.0, y.1))));

    let mut used = vec![false; corpus.len()];
    let mut served: HashSet<&str> = HashSet::new();
    let mut rng = rng::seeded(constraints.seed);
    let mut triads = Vec::new();

    for &(x, y, cross) in &pairs {
        if used[x] || used[y] {
            continue;
        }
        let side = |same: usize, foil: usize| -> Option<Candidate> {
            let identity = corpus[same].identity_id.as_str();
            if served.contains(identity) {
                return None;
            }
            by_identity[identity]
                .iter()
                .copied()
                .filter(|&k| k != same && !used[k] && yoked(&corpus[k], &corpus[foil]))
                .map(|k| (k, matrix.at(pos[same], pos[k])))
                .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| corpus[a.0].image_id.cmp(&corpus[b.0].image_id)))
                .map(|(anchor, same_similarity)| Candidate {
                    same,
                    foil,
                    anchor,
                    same_similarity,
                })
        };
        let chosen = match (side(x, y), side(y, x)) {
            (Some(a), Some(b)) => {
                let a_first = a
                    .same_similarity
                    .total_cmp(&b.same_similarity)
                    .then_with(|| corpus[a.same].image_id.cmp(&corpus[b.same].image_id))
                    .is_le();
                if a_first {
                    a
                } else {
                    b
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => continue,
        };
        used[chosen.same] = true;
        used[chosen.foil] = true;
        used[chosen.anchor] = true;
        served.insert(corpus[chosen.same].identity_id.as_str());

        let anchor_same_id = corpus[chosen.anchor].image_id.clone();
        let paired_same_id = corpus[chosen.same].image_id.clone();
        let foil_id = corpus[chosen.foil].image_id.clone();
        let mut presentation = [anchor_same_id.clone(), paired_same_id.clone(), foil_id.clone()];
        presentation.shuffle(&mut rng);
        let odd_one_out_index = presentation.iter().position(|id| *id == foil_id).expect("foil is presented") as u8;
        triads.push(Triad {
            triad_id: String::new(),
            anchor_same_id,
            paired_same_id,
            foil_id,
            presentation,
            odd_one_out_index,
            same_pair_similarity: chosen.same_similarity,
            cross_pair_similarity: cross,
        });
    }
    if triads.is_empty() {
        return Err(Error::NoTriads("constraints left no identity with a same-identity partner".into()));
    }
    let width = triads.len().to_string().len().max(3);
    for (k, t) in triads.iter_mut().enumerate() {
        t.triad_id = format!("t{:0width$}", k + 1);
    }
    Ok(triads)
}

/// Writes one JSON record per triad, each tagged with the schema version.
pub fn write_triads(path: &Path, triads: &[Triad]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for t in triads {
        writeln!(w, "{}", schema::to_record(TRIAD_SCHEMA, t)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_triads(path: &Path) -> Result<Vec<Triad>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(schema::from_document(TRIAD_SCHEMA, &line, &format!("{}:{}", path.display(), n + 1))?);
    }
    Ok(out)
}

/// Lookup of triads by id.
pub fn index_triads(triads: &[Triad]) -> HashMap<&str, &Triad> {
    triads.iter().map(|t| (t.triad_id.as_str(), t)).collect()
}
