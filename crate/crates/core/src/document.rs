//! Labeled documents and their JSONL form.
//!
//! One JSON object per line:
//! `{"id": str, "text": str, "codes": [str], "source": str, "weight": number?}`.
//! More than one code marks a document flagged with several plausible codes.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDocument {
    pub id: String,
    #[serde(default)]
    pub text: String,
    pub codes: Vec<String>,
    #[serde(default)]
    pub source: String,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

impl LabeledDocument {
    pub fn new(id: impl Into<String>, text: impl Into<String>, code: impl Into<String>) -> Self {
        LabeledDocument {
            id: id.into(),
            text: text.into(),
            codes: vec![code.into()],
            source: String::new(),
            weight: 1.0,
        }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    /// First listed code, used wherever a single code is needed (strata,
    /// confusion matrices).
    pub fn primary_code(&self) -> &str {
        self.codes.first().map(String::as_str).unwrap_or("")
    }
}

/// Reads documents from JSONL. Blank lines are skipped; codes must be
/// non-empty and weights positive.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<LabeledDocument>, DocumentError> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| DocumentError::Parse { line: i + 1, message };
        let doc: LabeledDocument = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if doc.codes.is_empty() {
            return Err(parse_err(format!("document {:?} has no codes", doc.id)));
        }
        if !(doc.weight > 0.0 && doc.weight.is_finite()) {
            return Err(parse_err(format!("document {:?} has non-positive weight", doc.id)));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_jsonl<W: Write>(mut writer: W, docs: &[LabeledDocument]) -> Result<(), DocumentError> {
    for doc in docs {
        serde_json::to_writer(&mut writer, doc).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
