//! Subjects-by-items binary response data.
//!
//! The delimited file form has a header row of item ids (first cell names the
//! subject column), then one row per subject with cells `0`, `1` or `NA`.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    subject_ids: Vec<String>,
    item_ids: Vec<String>,
    /// Row-major, `None` is a missing cell.
    cells: Vec<Option<bool>>,
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate {what} id `{id}`")));
        }
    }
    Ok(())
}

impl ResponseMatrix {
    pub fn new(subject_ids: Vec<String>, item_ids: Vec<String>, cells: Vec<Option<bool>>) -> Result<Self> {
        check_unique(&subject_ids, "subject")?;
        check_unique(&item_ids, "item")?;
        if cells.len() != subject_ids.len() * item_ids.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} cells for {} subjects x {} items, got {}",
                subject_ids.len() * item_ids.len(),
                subject_ids.len(),
                item_ids.len(),
                cells.len()
            )));
        }
        Ok(Self {
            subject_ids,
            item_ids,
            cells,
        })
    }

    /// Builds a matrix from complete 0/1 rows.
    pub fn from_rows(subject_ids: Vec<String>, item_ids: Vec<String>, rows: &[Vec<u8>]) -> Result<Self> {
        let mut cells = Vec::with_capacity(rows.len() * item_ids.len());
        for row in rows {
            if row.len() != item_ids.len() {
                return Err(Error::InvalidInput("ragged response rows".into()));
            }
            for &v in row {
                cells.push(match v {
                    0 => Some(false),
                    1 => Some(true),
                    other => return Err(Error::InvalidInput(format!("response value {other} is not 0 or 1"))),
                });
            }
        }
        Self::new(subject_ids, item_ids, cells)
    }

    pub fn empty(item_ids: Vec<String>) -> Result<Self> {
        Self::new(Vec::new(), item_ids, Vec::new())
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn get(&self, subject: usize, item: usize) -> Option<bool> {
        self.cells[subject * self.item_ids.len() + item]
    }

    pub fn row(&self, subject: usize) -> &[Option<bool>] {
        let n = self.item_ids.len();
        &self.cells[subject * n..(subject + 1) * n]
    }

    pub fn column(&self, item: usize) -> impl Iterator<Item = Option<bool>> + '_ {
        (0..self.n_subjects()).map(move |s| self.get(s, item))
    }

    pub fn item_position(&self, item_id: &str) -> Option<usize> {
        self.item_ids.iter().position(|i| i == item_id)
    }

    /// Answered items of one subject as `(item_id, correct)` pairs.
    pub fn responses_of(&self, subject: usize) -> Vec<(&str, bool)> {
        self.row(subject)
            .iter()
            .zip(&self.item_ids)
            .filter_map(|(cell, id)| cell.map(|v| (id.as_str(), v)))
            .collect()
    }

    /// Restricts to the listed items, in the given order.
    pub fn select_items(&self, item_ids: &[String]) -> Result<Self> {
        let cols: Vec<usize> = item_ids
            .iter()
            .map(|id| self.item_position(id).ok_or_else(|| Error::UnknownItem(id.clone())))
            .collect::<Result<_>>()?;
        let mut cells = Vec::with_capacity(self.n_subjects() * cols.len());
        for s in 0..self.n_subjects() {
            cells.extend(cols.iter().map(|&c| self.get(s, c)));
        }
        Self::new(self.subject_ids.clone(), item_ids.to_vec(), cells)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.is_empty() {
            return Err(Error::Parse("response file has no header".into()));
        }
        let item_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut subject_ids = Vec::new();
        let mut cells = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != item_ids.len() + 1 {
                return Err(Error::Parse(format!("row {} has {} fields, expected {}", line + 2, record.len(), item_ids.len() + 1)));
            }
            subject_ids.push(record[0].to_string());
            for field in record.iter().skip(1) {
                cells.push(match field {
                    "1" => Some(true),
                    "0" => Some(false),
                    "NA" | "" => None,
                    other => return Err(Error::Parse(format!("row {}: bad cell `{other}`", line + 2))),
                });
            }
        }
        Self::new(subject_ids, item_ids, cells)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_writer(std::io::BufWriter::new(file))
    }

    pub fn to_writer(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["subject_id"];
        header.extend(self.item_ids.iter().map(String::as_str));
        w.write_record(&header)?;
        for (s, id) in self.subject_ids.iter().enumerate() {
            let mut rec = vec![id.as_str()];
            rec.extend(self.row(s).iter().map(|c| match c {
                Some(true) => "1",
                Some(false) => "0",
                None => "NA",
            }));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|k| format!("{prefix}{k}")).collect()
    }

    #[test]
    fn rejects_duplicates_and_bad_shapes() {
        assert!(ResponseMatrix::new(vec!["a".into(), "a".into()], ids("i", 1), vec![None, None]).is_err());
        assert!(ResponseMatrix::new(ids("s", 1), ids("i", 2), vec![None]).is_err());
        assert!(ResponseMatrix::from_rows(ids("s", 1), ids("i", 1), &[vec![2]]).is_err());
    }

    #[test]
    fn csv_roundtrip_with_missing() {
        let text = "subject_id,t1,t2,t3\ns1,1,0,NA\ns2,NA,1,1\n";
        let m = ResponseMatrix::from_reader(text.as_bytes()).unwrap();
        assert_eq!(m.n_subjects(), 2);
        assert_eq!(m.get(0, 2), None);
        assert_eq!(m.get(1, 1), Some(true));
        let mut out = Vec::new();
        m.to_writer(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn bad_cell_is_parse_error() {
        let text = "subject_id,t1\ns1,2\n";
        assert!(matches!(ResponseMatrix::from_reader(text.as_bytes()), Err(Error::Parse(_))));
    }

    #[test]
    fn select_items_reorders() {
        let m = ResponseMatrix::from_rows(ids("s", 1), ids("i", 3), &[vec![1, 0, 1]]).unwrap();
        let sub = m.select_items(&["i2".to_string(), "i1".to_string()]).unwrap();
        assert_eq!(sub.row(0), &[Some(true), Some(false)]);
        assert!(m.select_items(&["zz".to_string()]).is_err());
    }
}
