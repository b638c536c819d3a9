//! JSONL corpus loading: one document object per line with required `id` and
//! `text` fields and optional `title`/`url`.

use std::io::BufRead;
use std::path::Path;

use crate::types::Document;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus line {line}: {reason}")]
    BadLine { line: usize, reason: String },
}

/// Loads every document, rejecting blank ids and empty text with the
/// offending line number.
pub fn load_corpus(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut documents = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let document: Document =
            serde_json::from_str(&line).map_err(|e| CorpusError::BadLine {
                line: line_no,
                reason: e.to_string(),
            })?;
        if document.doc_id.trim().is_empty() {
            return Err(CorpusError::BadLine {
                line: line_no,
                reason: "id must be nonempty".into(),
            });
        }
        if document.text.trim().is_empty() {
            return Err(CorpusError::BadLine {
                line: line_no,
                reason: format!("document {} has empty text", document.doc_id),
            });
        }
        documents.push(document);
    }
    Ok(documents)
}
