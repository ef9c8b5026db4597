//! Converts the CORD-19 release layout (a `metadata.csv` table plus per-paper
//! full-text JSON files) into the canonical JSON-lines corpus.
//!
//! Recognised metadata columns: `cord_uid`, `sha`, `source_x`, `title`,
//! `abstract`, `full_text_file`, `pdf_json_files`, `pmc_json_files`. The data
//! source is `full_text_file` when present (older releases), otherwise the
//! first entry of `source_x`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use log::debug;
use serde::Deserialize;

use super::{Document, IngestError};

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ConvertStats {
    pub rows: usize,
    pub written: usize,
    pub with_full_text: usize,
    pub skipped: usize,
}

#[derive(Deserialize)]
struct Paragraph {
    text: String,
}

#[derive(Deserialize)]
struct FullText {
    #[serde(default)]
    #[serde(rename = "abstract")]
    abstract_paragraphs: Vec<Paragraph>,
    #[serde(default)]
    body_text: Vec<Paragraph>,
}

fn read_full_text(path: &Path) -> Option<FullText> {
    let text = std::fs::read_to_string(path).ok()?;
    match serde_json::from_str(&text) {
        Ok(ft) => Some(ft),
        Err(err) => {
            debug!("{}: {err}", path.display());
            None
        }
    }
}

fn candidate_paths(root: &Path, field: &HashMap<&str, &str>) -> Vec<PathBuf> {
    let mut paths = Vec::new();
    for column in ["pmc_json_files", "pdf_json_files"] {
        if let Some(list) = field.get(column) {
            paths.extend(
                list.split(';')
                    .map(str::trim)
                    .filter(|p| !p.is_empty())
                    .map(|p| root.join(p)),
            );
        }
    }
    if let (Some(dir), Some(shas)) = (field.get("full_text_file"), field.get("sha")) {
        if !dir.is_empty() {
            for sha in shas.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                let file = format!("{sha}.json");
                paths.push(root.join(dir).join(dir).join(&file));
                paths.push(root.join(dir).join("pdf_json").join(&file));
                paths.push(root.join(dir).join(&file));
            }
        }
    }
    paths
}

fn nonempty(paragraphs: Vec<Paragraph>) -> Vec<String> {
    paragraphs
        .into_iter()
        .map(|p| p.text.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Writes one canonical record per metadata row that has an identifier.
pub fn convert<R: Read, W: Write>(metadata: R, root: &Path, mut out: W) -> Result<ConvertStats, IngestError> {
    let mut stats = ConvertStats::default();
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(metadata);
    let corrupt = |line: usize, message: String| IngestError::Corrupt {
        path: PathBuf::from("metadata.csv"),
        line,
        message,
    };
    let headers = reader.headers().map_err(|e| corrupt(1, e.to_string()))?.clone();

    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| corrupt(i + 2, e.to_string()))?;
        stats.rows += 1;
        let field: HashMap<&str, &str> = headers.iter().zip(record.iter()).collect();
        let get = |name: &str| field.get(name).map(|v| v.trim()).unwrap_or_default();

        let doc_id = [get("cord_uid"), get("sha")]
            .into_iter()
            .find(|v| !v.is_empty())
            .map(|v| v.split(';').next().unwrap_or(v).trim().to_string());
        let Some(doc_id) = doc_id else {
            stats.skipped += 1;
            continue;
        };
        let source = if !get("full_text_file").is_empty() {
            get("full_text_file").to_string()
        } else {
            get("source_x")
                .split(';')
                .map(str::trim)
                .find(|s| !s.is_empty())
                .unwrap_or("unknown")
                .to_string()
        };

        let full_text = candidate_paths(root, &field)
            .iter()
            .find_map(|p| read_full_text(p));
        let (mut abstract_paragraphs, body) = match full_text {
            Some(ft) => {
                stats.with_full_text += 1;
                (nonempty(ft.abstract_paragraphs), nonempty(ft.body_text))
            }
            None => (Vec::new(), Vec::new()),
        };
        if abstract_paragraphs.is_empty() && !get("abstract").is_empty() {
            abstract_paragraphs.push(get("abstract").to_string());
        }

        let doc = Document {
            source,
            doc_id,
            title: get("title").to_string(),
            abstract_paragraphs,
            body,
        };
        let io = |e: std::io::Error| IngestError::Io {
            path: PathBuf::from("<output>"),
            source: e,
        };
        serde_json::to_writer(&mut out, &doc).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
        stats.written += 1;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converts_metadata_and_full_text() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("document_parses/pmc_json")).unwrap();
        std::fs::write(
            dir.path().join("document_parses/pmc_json/PMC1.xml.json"),
            r#"{"paper_id":"PMC1","metadata":{},"abstract":[],"body_text":[{"text":"Obesity is a risk factor.","section":"Intro"},{"text":"  "}]}"#,
        )
        .unwrap();
        let metadata = "cord_uid,sha,source_x,title,abstract,pdf_json_files,pmc_json_files\n\
            u1,,PMC; Medline,Obesity and COVID-19,An abstract.,,document_parses/pmc_json/PMC1.xml.json\n\
            u2,,WHO,Only metadata,,,\n\
            ,,WHO,No id,,,\n";
        let mut out = Vec::new();
        let stats = convert(metadata.as_bytes(), dir.path(), &mut out).unwrap();
        assert_eq!(stats, ConvertStats { rows: 3, written: 2, with_full_text: 1, skipped: 1 });

        let (docs, errors) = crate::ingest::read_corpus(out.as_slice());
        assert!(errors.is_empty());
        assert_eq!(docs[0].source, "PMC");
        assert_eq!(docs[0].abstract_paragraphs, ["An abstract."]);
        assert_eq!(docs[0].body, ["Obesity is a risk factor."]);
        assert_eq!(docs[1].doc_id, "u2");
        assert!(docs[1].abstract_paragraphs.is_empty() && docs[1].body.is_empty());
    }

    #[test]
    fn older_layout_uses_full_text_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("comm_use_subset/comm_use_subset")).unwrap();
        std::fs::write(
            dir.path().join("comm_use_subset/comm_use_subset/abc.json"),
            r#"{"abstract":[{"text":"Abstract paragraph."}],"body_text":[{"text":"Body."}]}"#,
        )
        .unwrap();
        let metadata = "cord_uid,sha,source_x,title,abstract,full_text_file\nx1,abc,PMC,T,ignored,comm_use_subset\n";
        let mut out = Vec::new();
        convert(metadata.as_bytes(), dir.path(), &mut out).unwrap();
        let (docs, _) = crate::ingest::read_corpus(out.as_slice());
        assert_eq!(docs[0].source, "comm_use_subset");
        assert_eq!(docs[0].abstract_paragraphs, ["Abstract paragraph."]);
        assert_eq!(docs[0].body, ["Body."]);
    }
}
