//! An immutable, loaded repository: taxonomy, extraction records and color keys.

use std::path::{Path, PathBuf};
use std::time::SystemTime;

use anyhow::{bail, Context};
use riskmap_core::ingest::RepositoryStore;
use riskmap_core::{ParseOptions, Repository, Taxonomy};

use crate::colors::ColorTable;

/// Names of the taxonomy copy kept next to the records. Tab-separated exports
/// are stored as `.tsv`, comma-separated ones as `.csv`.
pub const TAXONOMY_FILES: [&str; 2] = ["taxonomy.tsv", "taxonomy.csv"];
pub const TAXONOMY_OPTIONS_FILE: &str = "taxonomy.toml";

pub struct Generation {
    /// Increases by one on every reload of a running server.
    pub id: u64,
    pub taxonomy: Taxonomy,
    pub repo: Repository,
    pub colors: ColorTable,
}

impl Generation {
    pub fn new(id: u64, taxonomy: Taxonomy, repo: Repository) -> Self {
        let colors = ColorTable::new(&taxonomy);
        Self {
            id,
            taxonomy,
            repo,
            colors,
        }
    }

    pub fn load(dir: &Path, id: u64) -> anyhow::Result<Self> {
        let taxonomy = load_taxonomy(dir)?;
        let repo = RepositoryStore::new(dir)
            .open()
            .with_context(|| format!("reading repository {}", dir.display()))?;
        Ok(Self::new(id, taxonomy, repo))
    }
}

pub fn taxonomy_path(dir: &Path) -> Option<PathBuf> {
    TAXONOMY_FILES.iter().map(|f| dir.join(f)).find(|p| p.is_file())
}

pub fn load_taxonomy(dir: &Path) -> anyhow::Result<Taxonomy> {
    let Some(path) = taxonomy_path(dir) else {
        bail!("{} holds no taxonomy; run `riskmap ingest` first", dir.display());
    };
    let options_path = dir.join(TAXONOMY_OPTIONS_FILE);
    let options = if options_path.is_file() {
        ParseOptions::load(&options_path).with_context(|| options_path.display().to_string())?
    } else {
        ParseOptions::default()
    };
    Taxonomy::load(&path, &options).with_context(|| path.display().to_string())
}

/// Sizes and modification times of the repository files; changes when a writer
/// touches the directory.
pub fn fingerprint(dir: &Path) -> Vec<(String, u64, Option<SystemTime>)> {
    let mut out = Vec::new();
    if let Ok(entries) = std::fs::read_dir(dir) {
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with('.') || name.ends_with(".tmp") {
                continue;
            }
            if let Ok(meta) = entry.metadata() {
                if meta.is_file() {
                    out.push((name, meta.len(), meta.modified().ok()));
                }
            }
        }
    }
    out.sort();
    out
}
