use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One value per subject: an ability, a proportion correct or an external score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub label: String,
    pub subject_ids: Vec<String>,
    pub values: Vec<f64>,
}

impl ScoreSeries {
    pub fn new(label: impl Into<String>, subject_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if subject_ids.len() != values.len() {
            return Err(Error::InvalidInput(format!("{} ids for {} values", subject_ids.len(), values.len())));
        }
        let mut seen = HashSet::new();
        for (id, v) in subject_ids.iter().zip(&values) {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate subject id `{id}`")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("subject `{id}` has a non-finite value")));
            }
        }
        Ok(Self {
            label: label.into(),
            subject_ids,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, subject_id: &str) -> Option<f64> {
        self.subject_ids.iter().position(|s| s == subject_id).map(|k| self.values[k])
    }

    /// Both series' values in `self`'s order; the id sets must coincide.
    pub fn aligned_with(&self, other: &ScoreSeries) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.len() != other.len() {
            return Err(Error::SubjectMismatch(format!(
                "`{}` has {} subjects, `{}` has {}",
                self.label,
                self.len(),
                other.label,
                other.len()
            )));
        }
        let lookup: HashMap<&str, f64> = other.subject_ids.iter().map(String::as_str).zip(other.values.iter().copied()).collect();
        let mut y = Vec::with_capacity(self.len());
        for id in &self.subject_ids {
            let v = lookup
                .get(id.as_str())
                .ok_or_else(|| Error::SubjectMismatch(format!("subject `{id}` missing from `{}`", other.label)))?;
            y.push(*v);
        }
        Ok((self.values.clone(), y))
    }

    /// Two-column CSV: `subject_id,<label>`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 {
            return Err(Error::Parse(format!("score file needs 2 columns, found {}", headers.len())));
        }
        let label = headers[1].to_string();
        let (mut ids, mut values) = (Vec::new(), Vec::new());
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let v: f64 = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: `{}` is not a number", n + 2, &rec[1])))?;
            ids.push(rec[0].to_string());
            values.push(v);
        }
        Self::new(label, ids, values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_writer(file)
    }

    pub fn to_writer(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["subject_id", self.label.as_str()])?;
        for (id, v) in self.subject_ids.iter().zip(&self.values) {
            w.write_record([id.clone(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<score series>", e))
    }
}
