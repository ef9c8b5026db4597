//! Per-document extraction and the repository of extraction records.
//!
//! The canonical corpus is a JSON-lines file, one document per line:
//!
//! ```json
//! {"source":"pmc","doc_id":"ab12","title":"...","abstract":["..."],"body":["...","..."]}
//! ```
//!
//! Every paragraph (the title, each abstract paragraph, each body paragraph) is
//! scanned on its own. A disease is *at risk* in a document when some paragraph
//! mentions both the disease and a risk expression.

pub mod cord19;
mod repository;

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keyword::KeywordProcessor;
use crate::lexicon::{self, LexiconError, LexiconSources};
use crate::taxonomy::Taxonomy;

pub use repository::{
    DocumentSubset, IngestLogEntry, IngestReport, Repository, RepositoryStore, SubsetSpec,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unknown filter {0:?}")]
    UnknownFilter(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: std::path::PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
}

/// A document that could not be ingested. Collected, never fatal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentError {
    /// 1-based line in the corpus file, when read from one.
    pub line: Option<usize>,
    pub doc_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub source: String,
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_paragraphs: Vec<String>,
    pub body: Vec<String>,
}

impl Document {
    /// Title, abstract paragraphs, then body paragraphs.
    pub fn paragraphs(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.title.as_str())
            .chain(self.abstract_paragraphs.iter().map(String::as_str))
            .chain(self.body.iter().map(String::as_str))
    }

    pub fn key(&self) -> DocKey {
        DocKey::new(&self.source, &self.doc_id)
    }

    fn validate(&self) -> Result<(), String> {
        if self.source.trim().is_empty() {
            return Err("empty source".into());
        }
        if self.doc_id.trim().is_empty() {
            return Err("empty doc_id".into());
        }
        Ok(())
    }
}

/// Reads a JSON-lines corpus. Lines that fail to parse are reported and skipped.
pub fn read_corpus<R: BufRead>(reader: R) -> (Vec<Document>, Vec<DocumentError>) {
    let mut docs = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = match line {
            Ok(line) => line,
            Err(err) => {
                errors.push(DocumentError {
                    line: Some(i + 1),
                    doc_id: None,
                    message: err.to_string(),
                });
                continue;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Document>(&line) {
            Ok(doc) => docs.push(doc),
            Err(err) => errors.push(DocumentError {
                line: Some(i + 1),
                doc_id: None,
                message: err.to_string(),
            }),
        }
    }
    (docs, errors)
}

/// Repository key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DocKey {
    pub source: String,
    pub doc_id: String,
}

impl DocKey {
    pub fn new(source: &str, doc_id: &str) -> Self {
        Self {
            source: source.to_string(),
            doc_id: doc_id.to_string(),
        }
    }
}

/// What was found in one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocExtraction {
    pub source: String,
    pub doc_id: String,
    pub codes: BTreeSet<String>,
    /// Codes mentioned in a paragraph that also holds a risk expression.
    pub risk_codes: BTreeSet<String>,
    pub filter_flags: BTreeMap<String, bool>,
}

impl DocExtraction {
    pub fn key(&self) -> DocKey {
        DocKey::new(&self.source, &self.doc_id)
    }

    pub fn flag(&self, filter: &str) -> bool {
        self.filter_flags.get(filter).copied().unwrap_or(false)
    }
}

/// The three frozen matchers used during ingestion.
#[derive(Debug, Clone)]
pub struct Processors {
    pub disease: KeywordProcessor,
    pub risk: KeywordProcessor,
    pub filters: BTreeMap<String, KeywordProcessor>,
}

impl Processors {
    pub fn build(taxonomy: &Taxonomy, sources: &LexiconSources) -> Result<Self, LexiconError> {
        Ok(Self {
            disease: lexicon::build_disease_processor(taxonomy, sources)?,
            risk: lexicon::build_risk_processor(sources)?,
            filters: lexicon::build_filter_processors(sources)?,
        })
    }

    pub fn filter_names(&self) -> impl Iterator<Item = &str> {
        self.filters.keys().map(String::as_str)
    }
}

pub fn extract_document(doc: &Document, processors: &Processors) -> DocExtraction {
    let mut codes = BTreeSet::new();
    let mut risk_codes = BTreeSet::new();
    let mut filter_flags: BTreeMap<String, bool> =
        processors.filters.keys().map(|name| (name.clone(), false)).collect();

    for paragraph in doc.paragraphs() {
        let found = processors.disease.key_set(paragraph);
        if !found.is_empty() && processors.risk.contains_any(paragraph) {
            risk_codes.extend(found.iter().map(|c| c.to_string()));
        }
        codes.extend(found.into_iter().map(str::to_string));

        for (name, kp) in &processors.filters {
            let flag = filter_flags.get_mut(name).expect("flag initialised");
            if !*flag && kp.contains_any(paragraph) {
                *flag = true;
            }
        }
    }

    DocExtraction {
        source: doc.source.clone(),
        doc_id: doc.doc_id.clone(),
        codes,
        risk_codes,
        filter_flags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyword::KeywordProcessorBuilder;

    fn kp(pairs: &[(&str, &str)]) -> KeywordProcessor {
        let mut b = KeywordProcessorBuilder::new();
        for (s, k) in pairs {
            b.add_keyword(s, k).unwrap();
        }
        b.build()
    }

    fn processors() -> Processors {
        Processors {
            disease: kp(&[("diabetes", "D1"), ("pneumonia", "P1"), ("obesity", "O1")]),
            risk: kp(&[("risk factor", "RISK")]),
            filters: BTreeMap::from([("covid".to_string(), kp(&[("SARS-CoV-2", "covid")]))]),
        }
    }

    fn doc(title: &str, abstract_paragraphs: &[&str], body: &[&str]) -> Document {
        Document {
            source: "s".into(),
            doc_id: "d".into(),
            title: title.into(),
            abstract_paragraphs: abstract_paragraphs.iter().map(|s| s.to_string()).collect(),
            body: body.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn risk_is_paragraph_scoped() {
        let d = doc("", &["Diabetes is a known risk factor."], &["Pneumonia was observed."]);
        let e = extract_document(&d, &processors());
        assert_eq!(e.codes, BTreeSet::from(["D1".into(), "P1".into()]));
        assert_eq!(e.risk_codes, BTreeSet::from(["D1".into()]));
        assert!(!e.flag("covid"));
    }

    #[test]
    fn title_counts_as_paragraph() {
        let d = doc("SARS-CoV-2 and obesity", &[], &[]);
        let e = extract_document(&d, &processors());
        assert!(e.flag("covid"));
        assert_eq!(e.codes, BTreeSet::from(["O1".into()]));
    }

    #[test]
    fn empty_document() {
        let e = extract_document(&doc("", &[], &[]), &processors());
        assert!(e.codes.is_empty() && e.risk_codes.is_empty());
        assert_eq!(e.filter_flags.len(), 1);
    }

    #[test]
    fn corpus_reader_collects_errors() {
        let text = concat!(
            r#"{"source":"a","doc_id":"1","title":"t","abstract":[],"body":[]}"#,
            "\n\nnot json\n",
            r#"{"source":"a","doc_id":"2","title":"t","abstract":[],"body":[],"extra":1}"#,
            "\n"
        );
        let (docs, errors) = read_corpus(text.as_bytes());
        assert_eq!(docs.len(), 1);
        assert_eq!(errors.len(), 2);
        assert_eq!(errors[0].line, Some(3));
        assert_eq!(errors[1].line, Some(4));
    }
}
