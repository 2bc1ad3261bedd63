//! Versioned JSON documents.
//!
//! Every structured file carries a `schema` tag and an integer `version`
//! alongside its body. Readers refuse a document whose tag or version differs
//! from what they expect.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_SCHEMA: &str = "triadcal.model";
pub const BANK_SCHEMA: &str = "triadcal.item_bank";
pub const SUBSET_SCHEMA: &str = "triadcal.subset";
pub const TRIAD_SCHEMA: &str = "triadcal.triad";
pub const TRUTH_SCHEMA: &str = "triadcal.simulation_truth";
pub const REPORT_SCHEMA: &str = "triadcal.report";
pub const SESSION_EVENT_SCHEMA: &str = "triadcal.session_event";
pub const API_SCHEMA: &str = "triadcal.api";
pub const RUN_MANIFEST_SCHEMA: &str = "triadcal.run_manifest";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    schema: &'a str,
    version: u32,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

pub fn to_document<T: Serialize>(schema: &str, body: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&EnvelopeOut {
        schema,
        version: SCHEMA_VERSION,
        body,
    })?;
    text.push('\n');
    Ok(text)
}

/// Same as [`to_document`] but on a single line, for line-delimited streams.
pub fn to_record<T: Serialize>(schema: &str, body: &T) -> Result<String> {
    Ok(serde_json::to_string(&EnvelopeOut {
        schema,
        version: SCHEMA_VERSION,
        body,
    })?)
}

pub fn from_document<T: DeserializeOwned>(schema: &str, text: &str, origin: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("{origin}: {e}")))?;
    let header: Header = serde_json::from_value(value.clone()).map_err(|_| Error::SchemaMismatch {
        path: origin.to_string(),
        expected: format!("{schema} v{SCHEMA_VERSION}"),
        found: "no schema header".into(),
    })?;
    if header.schema != schema || header.version != SCHEMA_VERSION {
        return Err(Error::SchemaMismatch {
            path: origin.to_string(),
            expected: format!("{schema} v{SCHEMA_VERSION}"),
            found: format!("{} v{}", header.schema, header.version),
        });
    }
    serde_json::from_value(value).map_err(|e| Error::Parse(format!("{origin}: {e}")))
}

/// Peeks at the schema tag of a document without validating the body.
pub fn schema_of(text: &str) -> Option<String> {
    let first = text.lines().find(|l| !l.trim().is_empty())?;
    // line-delimited streams carry the tag on every line; documents on the whole text
    serde_json::from_str::<Header>(first)
        .or_else(|_| serde_json::from_str::<Header>(text))
        .ok()
        .map(|h| h.schema)
}

pub fn write_document<T: Serialize>(path: &Path, schema: &str, body: &T) -> Result<()> {
    std::fs::write(path, to_document(schema, body)?).map_err(|e| Error::io(path, e))
}

pub fn read_document<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_document(schema, &text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Body {
        x: i32,
    }

    #[test]
    fn refuses_other_versions() {
        let good = to_document("k", &Body { x: 3 }).unwrap();
        assert_eq!(from_document::<Body>("k", &good, "mem").unwrap(), Body { x: 3 });
        let bumped = good.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(from_document::<Body>("k", &bumped, "mem"), Err(Error::SchemaMismatch { .. })));
        assert!(matches!(from_document::<Body>("other", &good, "mem"), Err(Error::SchemaMismatch { .. })));
        assert_eq!(schema_of(&good).as_deref(), Some("k"));
    }
}
