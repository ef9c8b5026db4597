use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{extract_document, DocExtraction, DocKey, Document, DocumentError, IngestError, Processors};

/// Counters for one ingested batch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub processed: usize,
    pub with_codes: usize,
    pub with_risk: usize,
    pub rejected: Vec<DocumentError>,
    /// Keys written by this batch, in first-seen order.
    #[serde(skip)]
    pub written: Vec<DocKey>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestLogEntry {
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub batch_size: usize,
    pub processed: usize,
    pub with_codes: usize,
    pub with_risk: usize,
    pub rejected: usize,
}

/// Document selection constraints. No constraint selects everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<String>,
}

impl SubsetSpec {
    pub fn all() -> Self {
        Self::default()
    }

    fn accepts(&self, record: &DocExtraction) -> bool {
        self.sources
            .as_ref()
            .is_none_or(|s| s.contains(&record.source))
            && self.filter.as_deref().is_none_or(|f| record.flag(f))
    }
}

/// The set C of selected documents, sorted by key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DocumentSubset {
    pub spec: SubsetSpec,
    pub keys: Vec<DocKey>,
}

impl DocumentSubset {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, key: &DocKey) -> bool {
        self.keys.binary_search(key).is_ok()
    }
}

/// Extraction records keyed by (source, doc_id). Re-ingesting a document
/// replaces its record.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Repository {
    records: BTreeMap<DocKey, DocExtraction>,
    titles: BTreeMap<DocKey, String>,
    filters: BTreeSet<String>,
    log: Vec<IngestLogEntry>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl Repository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl ExactSizeIterator<Item = &DocExtraction> {
        self.records.values()
    }

    pub fn get(&self, key: &DocKey) -> Option<&DocExtraction> {
        self.records.get(key)
    }

    pub fn title(&self, key: &DocKey) -> Option<&str> {
        self.titles.get(key).map(String::as_str)
    }

    /// Filters configured in any batch so far.
    pub fn filters(&self) -> &BTreeSet<String> {
        &self.filters
    }

    pub fn sources(&self) -> BTreeSet<&str> {
        self.records.keys().map(|k| k.source.as_str()).collect()
    }

    pub fn log(&self) -> &[IngestLogEntry] {
        &self.log
    }

    /// Stores a record directly, bypassing extraction.
    pub fn insert(&mut self, record: DocExtraction, title: impl Into<String>) {
        let key = record.key();
        self.filters.extend(record.filter_flags.keys().cloned());
        self.titles.insert(key.clone(), title.into());
        self.records.insert(key, record);
    }

    /// Extracts and stores every valid document of the batch. Invalid documents
    /// are reported, the rest of the batch still goes through.
    pub fn ingest_batch(&mut self, docs: Vec<Document>, processors: &Processors) -> IngestReport {
        let batch_size = docs.len();
        let mut report = IngestReport::default();
        let mut valid = Vec::with_capacity(docs.len());
        for doc in docs {
            match doc.validate() {
                Ok(()) => valid.push(doc),
                Err(message) => report.rejected.push(DocumentError {
                    line: None,
                    doc_id: Some(doc.doc_id.clone()),
                    message,
                }),
            }
        }

        let extracted: Vec<DocExtraction> = valid
            .par_iter()
            .map(|doc| extract_document(doc, processors))
            .collect();

        self.filters.extend(processors.filters.keys().cloned());
        let mut seen = BTreeSet::new();
        for (doc, record) in valid.into_iter().zip(extracted) {
            report.processed += 1;
            report.with_codes += usize::from(!record.codes.is_empty());
            report.with_risk += usize::from(!record.risk_codes.is_empty());
            let key = record.key();
            if seen.insert(key.clone()) {
                report.written.push(key.clone());
            }
            self.titles.insert(key.clone(), doc.title);
            self.records.insert(key, record);
        }

        self.log.push(IngestLogEntry {
            timestamp: now(),
            batch_size,
            processed: report.processed,
            with_codes: report.with_codes,
            with_risk: report.with_risk,
            rejected: report.rejected.len(),
        });
        report
    }

    pub fn select_subset(&self, spec: &SubsetSpec) -> Result<DocumentSubset, IngestError> {
        if let Some(filter) = &spec.filter {
            if !self.filters.contains(filter) {
                return Err(IngestError::UnknownFilter(filter.clone()));
            }
        }
        Ok(DocumentSubset {
            spec: spec.clone(),
            keys: self
                .records
                .iter()
                .filter(|(_, r)| spec.accepts(r))
                .map(|(k, _)| k.clone())
                .collect(),
        })
    }

    /// One JSON record per line, ordered by source then doc_id.
    pub fn snapshot_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for record in self.records.values() {
            serde_json::to_writer(&mut out, record).expect("records serialize");
            out.push(b'\n');
        }
        out
    }

    fn titles_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (key, title) in &self.titles {
            serde_json::to_writer(&mut out, &TitleLine { key: key.clone(), title: title.clone() })
                .expect("titles serialize");
            out.push(b'\n');
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct TitleLine {
    #[serde(flatten)]
    key: DocKey,
    title: String,
}

#[derive(Serialize, Deserialize)]
struct PendingLine {
    record: DocExtraction,
    title: String,
}

#[derive(Default, Serialize, Deserialize)]
struct Meta {
    filters: BTreeSet<String>,
}

/// On-disk layout of a repository directory.
///
/// * `snapshot.jsonl`: compacted records, one per line, sorted.
/// * `titles.jsonl`: document titles for traceback, sorted.
/// * `pending.jsonl`: records appended since the last compaction; replayed in order.
/// * `ingest_log.jsonl`: one line per ingested batch.
/// * `meta.json`: configured filter names.
#[derive(Debug, Clone)]
pub struct RepositoryStore {
    dir: PathBuf,
}

pub const SNAPSHOT_FILE: &str = "snapshot.jsonl";
const TITLES_FILE: &str = "titles.jsonl";
pub const PENDING_FILE: &str = "pending.jsonl";
const LOG_FILE: &str = "ingest_log.jsonl";
const META_FILE: &str = "meta.json";
const LOCK_FILE: &str = ".writer.lock";

struct WriterLock(PathBuf);

impl Drop for WriterLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

impl RepositoryStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
        move |source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn read_lines<T, F>(&self, name: &str, mut each: F) -> Result<(), IngestError>
    where
        T: serde::de::DeserializeOwned,
        F: FnMut(T),
    {
        let path = self.path(name);
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(Self::io_err(&path)(e)),
        };
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(Self::io_err(&path))?;
            if line.trim().is_empty() {
                continue;
            }
            let value = serde_json::from_str(&line).map_err(|e| IngestError::Corrupt {
                path: path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            each(value);
        }
        Ok(())
    }

    /// Loads snapshot plus pending records. A missing directory is an empty repository.
    pub fn open(&self) -> Result<Repository, IngestError> {
        let mut repo = Repository::new();
        self.read_lines(SNAPSHOT_FILE, |r: DocExtraction| {
            repo.records.insert(r.key(), r);
        })?;
        self.read_lines(TITLES_FILE, |t: TitleLine| {
            repo.titles.insert(t.key, t.title);
        })?;
        self.read_lines(PENDING_FILE, |p: PendingLine| {
            let key = p.record.key();
            repo.titles.insert(key.clone(), p.title);
            repo.records.insert(key, p.record);
        })?;
        self.read_lines(LOG_FILE, |e: IngestLogEntry| repo.log.push(e))?;
        let meta_path = self.path(META_FILE);
        if meta_path.is_file() {
            let text = fs::read_to_string(&meta_path).map_err(Self::io_err(&meta_path))?;
            let meta: Meta = serde_json::from_str(&text).map_err(|e| IngestError::Corrupt {
                path: meta_path.clone(),
                line: 1,
                message: e.to_string(),
            })?;
            repo.filters = meta.filters;
        }
        for record in repo.records.values() {
            repo.filters.extend(record.filter_flags.keys().cloned());
        }
        Ok(repo)
    }

    fn lock(&self) -> Result<WriterLock, IngestError> {
        fs::create_dir_all(&self.dir).map_err(Self::io_err(&self.dir))?;
        let path = self.path(LOCK_FILE);
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(Self::io_err(&path))?;
        Ok(WriterLock(path))
    }

    fn write_atomic(&self, name: &str, bytes: &[u8]) -> Result<(), IngestError> {
        let path = self.path(name);
        let tmp = self.path(&format!("{name}.tmp"));
        fs::write(&tmp, bytes).map_err(Self::io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(Self::io_err(&path))
    }

    fn write_meta(&self, repo: &Repository) -> Result<(), IngestError> {
        let meta = Meta {
            filters: repo.filters.clone(),
        };
        self.write_atomic(META_FILE, &serde_json::to_vec_pretty(&meta).expect("meta serializes"))
    }

    /// Appends the records written by a batch, and the batch's log line.
    pub fn append(&self, repo: &Repository, report: &IngestReport) -> Result<(), IngestError> {
        let _lock = self.lock()?;
        let pending = self.path(PENDING_FILE);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&pending)
            .map_err(Self::io_err(&pending))?;
        let mut out = BufWriter::new(file);
        for key in &report.written {
            let line = PendingLine {
                record: repo.records[key].clone(),
                title: repo.titles.get(key).cloned().unwrap_or_default(),
            };
            serde_json::to_writer(&mut out, &line).expect("pending serializes");
            out.write_all(b"\n").map_err(Self::io_err(&pending))?;
        }
        out.flush().map_err(Self::io_err(&pending))?;

        if let Some(entry) = repo.log.last() {
            let log = self.path(LOG_FILE);
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&log)
                .map_err(Self::io_err(&log))?;
            let mut line = serde_json::to_vec(entry).expect("log serializes");
            line.push(b'\n');
            file.write_all(&line).map_err(Self::io_err(&log))?;
        }
        self.write_meta(repo)
    }

    /// Rewrites the snapshot from `repo` and drops the pending log.
    pub fn compact(&self, repo: &Repository) -> Result<(), IngestError> {
        let _lock = self.lock()?;
        self.write_atomic(SNAPSHOT_FILE, &repo.snapshot_bytes())?;
        self.write_atomic(TITLES_FILE, &repo.titles_bytes())?;
        let pending = self.path(PENDING_FILE);
        if pending.exists() {
            fs::remove_file(&pending).map_err(Self::io_err(&pending))?;
        }
        self.write_meta(repo)
    }

    /// True while a writer (append or compaction) holds the directory.
    pub fn is_locked(&self) -> bool {
        self.path(LOCK_FILE).exists()
    }

    /// Number of pending (uncompacted) record lines.
    pub fn pending_len(&self) -> Result<usize, IngestError> {
        let mut n = 0;
        self.read_lines(PENDING_FILE, |_: serde_json::Value| n += 1)?;
        Ok(n)
    }
}
