//! Identity-labelled image descriptors.
//!
//! Two file forms are read: delimited text with columns
//! `image_id,identity_id,gender,race,v0,v1,...`, or line-delimited JSON
//! records `{"image_id":..,"identity_id":..,"gender":..,"race":..,"vector":[..]}`.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub image_id: String,
    pub identity_id: String,
    pub gender: String,
    pub race: String,
    pub vector: Vec<f64>,
}

/// Checks the corpus is non-empty, ids are unique and dimensions agree.
pub fn validate_corpus(corpus: &[EmbeddingRecord]) -> Result<usize> {
    let first = corpus.first().ok_or_else(|| Error::InvalidInput("embedding corpus is empty".into()))?;
    let dim = first.vector.len();
    if dim < 2 {
        return Err(Error::InvalidInput(format!("embedding dimension must be at least 2, got {dim}")));
    }
    let mut seen = std::collections::HashSet::new();
    for rec in corpus {
        if rec.vector.len() != dim {
            return Err(Error::InvalidInput(format!(
                "image `{}` has dimension {}, expected {dim}",
                rec.image_id,
                rec.vector.len()
            )));
        }
        if rec.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("image `{}` has a non-finite component", rec.image_id)));
        }
        if !seen.insert(rec.image_id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate image id `{}`", rec.image_id)));
        }
    }
    Ok(dim)
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let is_jsonl = matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "ndjson" | "json"));
    let corpus = if is_jsonl { parse_jsonl(file)? } else { parse_csv(file)? };
    validate_corpus(&corpus)?;
    Ok(corpus)
}

pub fn parse_jsonl(reader: impl Read) -> Result<Vec<EmbeddingRecord>> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io("<embeddings>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("embedding line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

pub fn parse_csv(reader: impl Read) -> Result<Vec<EmbeddingRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let expected = ["image_id", "identity_id", "gender", "race"];
    if header.len() < 6 || header.iter().take(4).ne(expected.iter().copied()) {
        return Err(Error::Parse(format!("embedding header must start with {}", expected.join(","))));
    }
    let mut out = Vec::new();
    for (n, record) in rdr.records().enumerate() {
        let record = record?;
        let vector = record
            .iter()
            .skip(4)
            .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(format!("embedding row {}: {e}", n + 2))))
            .collect::<Result<Vec<_>>>()?;
        out.push(EmbeddingRecord {
            image_id: record[0].to_string(),
            identity_id: record[1].to_string(),
            gender: record[2].to_string(),
            race: record[3].to_string(),
            vector,
        });
    }
    Ok(out)
}

pub fn write_embeddings_csv(path: &Path, corpus: &[EmbeddingRecord]) -> Result<()> {
    let dim = validate_corpus(corpus)?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<String> = ["image_id", "identity_id", "gender", "race"].iter().map(|s| s.to_string()).collect();
    header.extend((0..dim).map(|k| format!("v{k}")));
    w.write_record(&header)?;
    for rec in corpus {
        let mut row = vec![rec.image_id.clone(), rec.identity_id.clone(), rec.gender.clone(), rec.race.clone()];
        row.extend(rec.vector.iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
