//! Command line: ingestion, reporting, export and the HTTP server.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use riskmap_core::ingest::{self, cord19, IngestReport, RepositoryStore};
use riskmap_core::keyword::tokenize;
use riskmap_core::lexicon::{self, LexiconConfig, LexiconSources};
use riskmap_core::{KeywordProcessor, ParseOptions, Processors, Taxonomy};
use serde::Serialize;

use crate::generation::{taxonomy_path, Generation, TAXONOMY_FILES, TAXONOMY_OPTIONS_FILE};
use crate::views::{self, Params, QuerySpec};

#[derive(Debug, Parser)]
#[command(name = "riskmap", version, about = "Mine diseases and diseases at risk from a document corpus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract diseases from a JSON-lines corpus into a repository.
    Ingest(IngestArgs),
    /// Print repository counters.
    Report {
        #[arg(long, env = "RISKMAP_REPO")]
        repo: PathBuf,
    },
    /// Fold pending records into the snapshot.
    Compact {
        #[arg(long, env = "RISKMAP_REPO")]
        repo: PathBuf,
    },
    /// Write the chart data as JSON files.
    Export(ExportArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Print the matches of one processor in a text.
    Match(MatchArgs),
    /// Convert a CORD-19 release (metadata.csv plus JSON parses) to the corpus format.
    ConvertCord19 {
        #[arg(long)]
        metadata: PathBuf,
        /// Directory the file paths in metadata.csv are relative to.
        #[arg(long)]
        root: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSON-lines corpus, one document per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Classification export (Code and Title columns, tab- or comma-separated).
    #[arg(long)]
    pub taxonomy: PathBuf,
    /// Lexicon configuration directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "RISKMAP_REPO")]
    pub repo: PathBuf,
    /// Documents per appended batch.
    #[arg(long, default_value_t = 5000)]
    pub batch_size: usize,
    /// Compact the repository after ingesting.
    #[arg(long)]
    pub compact: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, env = "RISKMAP_REPO")]
    pub repo: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated sources.
    #[arg(long)]
    pub sources: Option<String>,
    #[arg(long)]
    pub filter: Option<String>,
    /// Branch code or node id.
    #[arg(long)]
    pub branch: Option<String>,
    #[arg(long)]
    pub max_levels: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Gap normalization: separate or subset.
    #[arg(long)]
    pub norm: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "RISKMAP_REPO")]
    pub repo: PathBuf,
    #[arg(long, env = "RISKMAP_PORT", default_value_t = 8080)]
    pub port: u16,
    /// Static client assets served for every other path.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Seconds between checks for a changed repository; 0 disables reloading.
    #[arg(long, default_value_t = 10)]
    pub reload_secs: u64,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// disease, risk, or filter:NAME
    #[arg(long, default_value = "disease")]
    pub processor: String,
    pub text: String,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Ingest(args) => {
            let report = run_ingest(&args)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
        }
        Command::Report { repo } => write!(out, "{}", repo_report(&repo)?)?,
        Command::Compact { repo } => {
            let store = RepositoryStore::new(&repo);
            let pending = store.pending_len()?;
            store.compact(&store.open()?)?;
            writeln!(out, "compacted {pending} pending records")?;
        }
        Command::Export(args) => {
            for path in run_export(&args)? {
                writeln!(out, "{}", path.display())?;
            }
        }
        Command::Serve(args) => {
            let reload = (args.reload_secs > 0).then(|| Duration::from_secs(args.reload_secs));
            tokio::runtime::Runtime::new()?.block_on(crate::api::serve(
                &args.repo,
                args.port,
                args.static_dir.as_deref(),
                reload,
            ))?;
        }
        Command::Match(args) => {
            for line in run_match(&args)? {
                writeln!(out, "{line}")?;
            }
        }
        Command::ConvertCord19 { metadata, root, out: target } => {
            let root = root.unwrap_or_else(|| metadata.parent().unwrap_or(Path::new(".")).to_path_buf());
            let input = File::open(&metadata).with_context(|| metadata.display().to_string())?;
            let output = File::create(&target).with_context(|| target.display().to_string())?;
            let mut writer = BufWriter::new(output);
            let stats = cord19::convert(input, &root, &mut writer)?;
            writer.flush()?;
            writeln!(
                out,
                "rows {}, written {}, with full text {}, skipped {}",
                stats.rows, stats.written, stats.with_full_text, stats.skipped
            )?;
        }
    }
    Ok(())
}

fn parse_options(config: Option<&Path>) -> anyhow::Result<ParseOptions> {
    match config.map(|c| c.join(TAXONOMY_OPTIONS_FILE)).filter(|p| p.is_file()) {
        Some(path) => ParseOptions::load(&path).with_context(|| path.display().to_string()),
        None => Ok(ParseOptions::default()),
    }
}

fn lexicon_sources(config: Option<&Path>) -> anyhow::Result<LexiconSources> {
    match config {
        Some(dir) => Ok(LexiconConfig::from_dir(dir)?.load()?),
        None => Ok(LexiconSources::defaults()),
    }
}

/// Copies the classification next to the records. A repository keeps the
/// classification it was first built with.
fn install_taxonomy(args: &IngestArgs) -> anyhow::Result<()> {
    let bytes = std::fs::read(&args.taxonomy).with_context(|| args.taxonomy.display().to_string())?;
    let header = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    let name = if header.contains(&b'\t') { TAXONOMY_FILES[0] } else { TAXONOMY_FILES[1] };
    if let Some(existing) = taxonomy_path(&args.repo) {
        if std::fs::read(&existing)? != bytes {
            bail!(
                "{} was built with a different classification ({}); use a new repository directory",
                args.repo.display(),
                existing.display()
            );
        }
        return Ok(());
    }
    std::fs::write(args.repo.join(name), &bytes)?;
    if let Some(options) = args.config.as_ref().map(|c| c.join(TAXONOMY_OPTIONS_FILE)).filter(|p| p.is_file()) {
        std::fs::copy(options, args.repo.join(TAXONOMY_OPTIONS_FILE))?;
    }
    Ok(())
}

pub fn run_ingest(args: &IngestArgs) -> anyhow::Result<IngestReport> {
    if args.batch_size == 0 {
        bail!("--batch-size must be at least 1");
    }
    let options = parse_options(args.config.as_deref())?;
    let taxonomy = Taxonomy::load(&args.taxonomy, &options).with_context(|| args.taxonomy.display().to_string())?;
    let processors = Processors::build(&taxonomy, &lexicon_sources(args.config.as_deref())?)?;
    info!(
        "{} taxonomy nodes, {} disease surfaces, filters {:?}",
        taxonomy.len(),
        processors.disease.len(),
        processors.filter_names().collect::<Vec<_>>()
    );

    let corpus = File::open(&args.corpus).with_context(|| args.corpus.display().to_string())?;
    let (docs, errors) = ingest::read_corpus(BufReader::new(corpus));
    for err in &errors {
        warn!("{}: line {:?}: {}", args.corpus.display(), err.line, err.message);
    }

    std::fs::create_dir_all(&args.repo)?;
    install_taxonomy(args)?;
    let store = RepositoryStore::new(&args.repo);
    let mut repo = store.open()?;
    let mut total = IngestReport {
        rejected: errors,
        ..IngestReport::default()
    };
    let mut docs = docs.into_iter().peekable();
    while docs.peek().is_some() {
        let batch: Vec<_> = docs.by_ref().take(args.batch_size).collect();
        let report = repo.ingest_batch(batch, &processors);
        store.append(&repo, &report)?;
        info!("batch: {} processed, {} with codes", report.processed, report.with_codes);
        total.processed += report.processed;
        total.with_codes += report.with_codes;
        total.with_risk += report.with_risk;
        total.rejected.extend(report.rejected);
        total.written.extend(report.written);
    }
    if args.compact {
        store.compact(&repo)?;
    }
    Ok(total)
}

pub fn repo_report(dir: &Path) -> anyhow::Result<String> {
    let store = RepositoryStore::new(dir);
    let repo = store.open()?;
    let mut text = String::new();
    let mut line = |s: String| {
        text.push_str(&s);
        text.push('\n');
    };
    line(format!("documents: {}", repo.len()));
    line(format!("pending records: {}", store.pending_len()?));
    line(format!(
        "with codes: {}",
        repo.records().filter(|r| !r.codes.is_empty()).count()
    ));
    line(format!(
        "with risk: {}",
        repo.records().filter(|r| !r.risk_codes.is_empty()).count()
    ));
    for source in repo.sources() {
        line(format!(
            "source {source}: {}",
            repo.records().filter(|r| r.source == source).count()
        ));
    }
    for filter in repo.filters() {
        line(format!(
            "filter {filter}: {}",
            repo.records().filter(|r| r.flag(filter)).count()
        ));
    }
    for entry in repo.log() {
        line(format!(
            "batch at {}: size {}, processed {}, with codes {}, with risk {}, rejected {}",
            entry.timestamp, entry.batch_size, entry.processed, entry.with_codes, entry.with_risk, entry.rejected
        ));
    }
    Ok(text)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<PathBuf> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| path.display().to_string())?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(path)
}

/// Writes `taxonomy.json`, `shares.json`, `occurrences_found.json`,
/// `occurrences_at_risk.json` and `gap.json`, each holding the body the
/// matching endpoint would return.
pub fn run_export(args: &ExportArgs) -> anyhow::Result<Vec<PathBuf>> {
    let generation = Generation::load(&args.repo, 0)?;
    let params = Params {
        sources: args.sources.clone(),
        filter: args.filter.clone(),
        branch: args.branch.clone(),
        max_levels: args.max_levels.map(|v| v.to_string()),
        k: args.k.map(|v| v.to_string()),
        norm: args.norm.clone(),
        ..Params::default()
    };
    let spec = QuerySpec::parse(&params)?;
    std::fs::create_dir_all(&args.out)?;
    let mut written = vec![
        write_json(&args.out, "taxonomy.json", &views::taxonomy_view(&generation, &spec)?)?,
        write_json(&args.out, "shares.json", &views::shares_view(&generation, &spec)?)?,
    ];
    for (role, name) in [("found", "occurrences_found.json"), ("at_risk", "occurrences_at_risk.json")] {
        let spec = QuerySpec {
            role: Some(role.parse().expect("valid role")),
            ..spec.clone()
        };
        written.push(write_json(&args.out, name, &views::occurrences_view(&generation, &spec)?)?);
    }
    written.push(write_json(&args.out, "gap.json", &views::gap_view(&generation, &spec)?)?);
    Ok(written)
}

fn matcher(args: &MatchArgs) -> anyhow::Result<KeywordProcessor> {
    let sources = lexicon_sources(args.config.as_deref())?;
    let processor = match args.processor.as_str() {
        "disease" => {
            let Some(path) = &args.taxonomy else {
                bail!("--taxonomy is required for the disease processor");
            };
            let taxonomy = Taxonomy::load(path, &parse_options(args.config.as_deref())?)?;
            lexicon::build_disease_processor(&taxonomy, &sources)?
        }
        "risk" => lexicon::build_risk_processor(&sources)?,
        other => match other.strip_prefix("filter:") {
            Some(name) => match sources.filters.get(name) {
                Some(exprs) => lexicon::build_filter_processor(name, exprs)?,
                None => bail!("no filter named {name:?} in the configuration"),
            },
            None => bail!("unknown processor {other:?} (expected disease, risk or filter:NAME)"),
        },
    };
    Ok(processor)
}

/// One line per match: key, token span (end exclusive) and the matched text.
pub fn run_match(args: &MatchArgs) -> anyhow::Result<Vec<String>> {
    let processor = matcher(args)?;
    let tokens = tokenize(&args.text);
    Ok(processor
        .extract_keys(&args.text)
        .into_iter()
        .map(|m| {
            let surface = &args.text[tokens[m.start].start..tokens[m.end - 1].end];
            format!("{}\t{}..{}\t{}", m.key, m.start, m.end, surface)
        })
        .collect())
}
