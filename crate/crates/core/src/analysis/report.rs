use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::compare::Comparison;
use super::correlation::Correlation;
use super::VarianceDecomposition;
use crate::error::{Error, Result};
use crate::schema::{self, REPORT_SCHEMA};

/// One row of an analysis report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub name: String,
    pub statistic: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl ReportEntry {
    pub fn value(name: impl Into<String>, statistic: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            statistic: statistic.into(),
            value,
            p: None,
            ci_low: None,
            ci_high: None,
            n: None,
        }
    }
}

/// A flat table of named statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub entries: Vec<ReportEntry>,
}

impl AnalysisReport {
    pub fn push(&mut self, entry: ReportEntry) {
        self.entries.push(entry);
    }

    pub fn push_correlation(&mut self, name: &str, c: &Correlation) {
        self.push(ReportEntry {
            p: Some(c.p),
            ci_low: Some(c.ci_low),
            ci_high: Some(c.ci_high),
            n: Some(c.n),
            ..ReportEntry::value(name, "pearson_r", c.r)
        });
    }

    pub fn push_comparison(&mut self, name: &str, c: &Comparison) {
        let statistic = match c.test {
            super::GroupTest::WilcoxonRankSum => "wilcoxon_w",
            super::GroupTest::WelchT => "welch_t",
            super::GroupTest::PairedT => "paired_t",
        };
        self.push(ReportEntry {
            p: Some(c.p),
            ci_low: c.ci.map(|ci| ci.0),
            ci_high: c.ci.map(|ci| ci.1),
            n: Some(c.n_a + c.n_b),
            ..ReportEntry::value(name, statistic, c.statistic)
        });
    }

    pub fn push_variance(&mut self, name: &str, d: &VarianceDecomposition) {
        self.push(ReportEntry::value(name, "sd_session_and_test", d.sd_session_and_test));
        self.push(ReportEntry::value(name, "sd_test_only", d.sd_test_only));
        self.push(ReportEntry::value(name, "sd_session", d.sd_session));
    }

    pub fn to_json(&self) -> Result<String> {
        schema::to_document(REPORT_SCHEMA, self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        schema::from_document(REPORT_SCHEMA, text, "<report>")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        schema::write_document(path, REPORT_SCHEMA, self)
    }

    /// Flat CSV with one row per entry; empty cells for absent fields.
    pub fn to_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["name", "statistic", "value", "p", "ci_low", "ci_high", "n"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.entries {
            w.write_record([
                e.name.clone(),
                e.statistic.clone(),
                e.value.to_string(),
                opt(e.p),
                opt(e.ci_low),
                opt(e.ci_high),
                e.n.map(|n| n.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<report>", e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_csv(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_csv() {
        let mut r = AnalysisReport::default();
        r.push(ReportEntry::value("fit", "aic", 210.0));
        r.push_variance("sessions", &super::super::decompose_sds(0.4, 0.31).unwrap());
        assert_eq!(AnalysisReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        let mut buf = Vec::new();
        r.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(1).unwrap().starts_with("fit,aic,210,,,,"));
    }
}
