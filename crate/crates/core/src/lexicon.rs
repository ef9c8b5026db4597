//! Builds the disease, risk and filter matchers from the classification and
//! configuration files.
//!
//! A configuration directory looks like this; every file is optional:
//!
//! ```text
//! config/
//!   taxonomy.toml            stop_title / discard_codes for the classification parser
//!   rewrite_rules.tsv        pattern<TAB>replacement, X is the slot (built-in default)
//!   synonyms.tsv             code<TAB>surface
//!   discard.txt              surfaces never fed to the disease matcher
//!   risk_expressions.txt     risk-factor expressions (built-in default)
//!   filters/<name>.txt       one topical filter per file, named after the file stem
//! ```
//!
//! All files are UTF-8, one entry per line, with `#` comments and blank lines ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::warn;
use thiserror::Error;

use crate::keyword::{normalize, token_strings, KeywordProcessor, KeywordProcessorBuilder};
use crate::taxonomy::Taxonomy;

/// Payload key of the risk-expression matcher.
pub const RISK_KEY: &str = "RISK";

pub const DEFAULT_REWRITE_RULES: &str = include_str!("../data/rewrite_rules.tsv");
pub const DEFAULT_RISK_EXPRESSIONS: &str = include_str!("../data/risk_expressions.txt");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("{file}:{line}: {message}")]
    ConfigParse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("lexicon {0:?} is empty")]
    EmptyLexicon(String),
    #[error("title {0:?} is empty once the text after the comma is removed")]
    ResultEmpty(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn parse_error(file: &str, line: usize, message: impl Into<String>) -> LexiconError {
    LexiconError::ConfigParse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

/// Keeps the part of a title before its first comma.
///
/// `"Coronavirus infection, unspecified site"` becomes `"Coronavirus infection"`.
pub fn truncate_title(title: &str) -> Result<String, LexiconError> {
    let head = match title.split_once(',') {
        Some((head, _)) => head.trim(),
        None => title.trim(),
    };
    if head.is_empty() {
        return Err(LexiconError::ResultEmpty(title.to_string()));
    }
    Ok(head.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Part {
    Word(String),
    Slot,
}

/// Whole-title rewrite with at most one `X` slot, e.g. `carcinoma of X` → `X cancer`.
/// The slot captures one or more tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteRule {
    prefix: Vec<String>,
    /// `Some(suffix)` when the pattern has a slot.
    suffix: Option<Vec<String>>,
    replacement: Vec<Part>,
}

const SLOT: &str = "X";

fn split_parts(text: &str) -> Vec<Part> {
    let mut parts = Vec::new();
    for piece in text.split_whitespace() {
        if piece == SLOT {
            parts.push(Part::Slot);
        } else {
            parts.extend(token_strings(piece).into_iter().map(Part::Word));
        }
    }
    parts
}

impl RewriteRule {
    pub fn new(pattern: &str, replacement: &str) -> Result<Self, String> {
        let pattern = split_parts(pattern);
        let replacement = split_parts(replacement);
        if pattern.is_empty() || pattern == [Part::Slot] {
            return Err("pattern needs at least one word".into());
        }
        if replacement.is_empty() {
            return Err("replacement is empty".into());
        }
        let slots = pattern.iter().filter(|p| **p == Part::Slot).count();
        if slots > 1 {
            return Err("pattern has more than one slot".into());
        }
        if slots == 0 && replacement.contains(&Part::Slot) {
            return Err("replacement uses a slot the pattern does not define".into());
        }
        let words = |parts: &[Part]| -> Vec<String> {
            parts
                .iter()
                .filter_map(|p| match p {
                    Part::Word(w) => Some(w.clone()),
                    Part::Slot => None,
                })
                .collect()
        };
        let (prefix, suffix) = match pattern.iter().position(|p| *p == Part::Slot) {
            Some(at) => (words(&pattern[..at]), Some(words(&pattern[at + 1..]))),
            None => (words(&pattern), None),
        };
        Ok(Self {
            prefix,
            suffix,
            replacement,
        })
    }

    /// Rewrites a token sequence, or `None` when the pattern does not cover it.
    pub fn apply(&self, tokens: &[String]) -> Option<Vec<String>> {
        let captured: &[String] = match &self.suffix {
            None => {
                if tokens != self.prefix.as_slice() {
                    return None;
                }
                &[]
            }
            Some(suffix) => {
                let fixed = self.prefix.len() + suffix.len();
                if tokens.len() <= fixed
                    || !tokens.starts_with(&self.prefix)
                    || !tokens.ends_with(suffix)
                {
                    return None;
                }
                &tokens[self.prefix.len()..tokens.len() - suffix.len()]
            }
        };
        let mut out = Vec::new();
        for part in &self.replacement {
            match part {
                Part::Word(w) => out.push(w.clone()),
                Part::Slot => out.extend(captured.iter().cloned()),
            }
        }
        Some(out)
    }
}

pub fn parse_rewrite_rules(text: &str, file: &str) -> Result<Vec<RewriteRule>, LexiconError> {
    content_lines(text)
        .map(|(line, content)| {
            let (pattern, replacement) = content
                .split_once('\t')
                .ok_or_else(|| parse_error(file, line, "expected pattern<TAB>replacement"))?;
            RewriteRule::new(pattern, replacement).map_err(|m| parse_error(file, line, m))
        })
        .collect()
}

/// The title itself plus every variant produced by a rule that applies.
/// Variants are in normalized (lowercase, single-spaced) form.
pub fn expand_synonyms(title: &str, rules: &[RewriteRule]) -> BTreeSet<String> {
    let tokens = token_strings(title);
    let mut out = BTreeSet::from([title.to_string()]);
    for rule in rules {
        if let Some(variant) = rule.apply(&tokens) {
            if variant != tokens {
                out.insert(variant.join(" "));
            }
        }
    }
    out
}

/// Non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            None
        } else {
            Some((i + 1, line))
        }
    })
}

fn expression_list(text: &str) -> Vec<String> {
    content_lines(text).map(|(_, l)| l.trim().to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynonymEntry {
    pub code: String,
    pub surface: String,
}

pub fn parse_synonyms(text: &str, file: &str) -> Result<Vec<SynonymEntry>, LexiconError> {
    content_lines(text)
        .map(|(line, content)| {
            let (code, surface) = content
                .split_once('\t')
                .ok_or_else(|| parse_error(file, line, "expected code<TAB>surface"))?;
            let (code, surface) = (code.trim(), surface.trim());
            if code.is_empty() || surface.is_empty() {
                return Err(parse_error(file, line, "empty code or surface"));
            }
            Ok(SynonymEntry {
                code: code.to_string(),
                surface: surface.to_string(),
            })
        })
        .collect()
}

/// Locations of the lexicon files.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexiconConfig {
    pub synonym_file: Option<PathBuf>,
    pub risk_expressions_file: Option<PathBuf>,
    /// Filter name → expression file.
    pub filter_expressions_files: BTreeMap<String, PathBuf>,
    pub rewrite_rules_file: Option<PathBuf>,
    pub discard_file: Option<PathBuf>,
}

impl LexiconConfig {
    /// Picks up whichever of the standard files exist in `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let dir = dir.as_ref();
        let existing = |name: &str| Some(dir.join(name)).filter(|p| p.is_file());
        let mut filters = BTreeMap::new();
        let filter_dir = dir.join("filters");
        if filter_dir.is_dir() {
            let entries = std::fs::read_dir(&filter_dir).map_err(|source| LexiconError::Io {
                path: filter_dir.clone(),
                source,
            })?;
            for entry in entries.flatten() {
                let path = entry.path();
                if path.extension().is_some_and(|e| e == "txt") {
                    if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                        filters.insert(stem.to_string(), path);
                    }
                }
            }
        }
        Ok(Self {
            synonym_file: existing("synonyms.tsv"),
            risk_expressions_file: existing("risk_expressions.txt"),
            filter_expressions_files: filters,
            rewrite_rules_file: existing("rewrite_rules.tsv"),
            discard_file: existing("discard.txt"),
        })
    }

    /// Reads every configured file. Missing rule and risk files fall back to
    /// the built-in defaults.
    pub fn load(&self) -> Result<LexiconSources, LexiconError> {
        let read = |path: &Path| {
            std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
                path: path.to_path_buf(),
                source,
            })
        };
        let rewrite_rules = match &self.rewrite_rules_file {
            Some(p) => parse_rewrite_rules(&read(p)?, &p.display().to_string())?,
            None => parse_rewrite_rules(DEFAULT_REWRITE_RULES, "<default rewrite rules>")?,
        };
        let synonyms = match &self.synonym_file {
            Some(p) => parse_synonyms(&read(p)?, &p.display().to_string())?,
            None => Vec::new(),
        };
        let discard = match &self.discard_file {
            Some(p) => expression_list(&read(p)?).iter().map(|s| normalize(s)).collect(),
            None => BTreeSet::new(),
        };
        let risk_expressions = match &self.risk_expressions_file {
            Some(p) => expression_list(&read(p)?),
            None => expression_list(DEFAULT_RISK_EXPRESSIONS),
        };
        let mut filters = BTreeMap::new();
        for (name, path) in &self.filter_expressions_files {
            filters.insert(name.clone(), expression_list(&read(path)?));
        }
        Ok(LexiconSources {
            rewrite_rules,
            synonyms,
            discard,
            risk_expressions,
            filters,
        })
    }
}

/// Parsed lexicon inputs.
#[derive(Debug, Clone, Default)]
pub struct LexiconSources {
    pub rewrite_rules: Vec<RewriteRule>,
    pub synonyms: Vec<SynonymEntry>,
    /// Normalized surfaces that must not reach the disease matcher.
    pub discard: BTreeSet<String>,
    pub risk_expressions: Vec<String>,
    pub filters: BTreeMap<String, Vec<String>>,
}

impl LexiconSources {
    /// Built-in rewrite rules and risk expressions, nothing else.
    pub fn defaults() -> Self {
        Self {
            rewrite_rules: parse_rewrite_rules(DEFAULT_REWRITE_RULES, "<default rewrite rules>")
                .expect("default rewrite rules parse"),
            risk_expressions: expression_list(DEFAULT_RISK_EXPRESSIONS),
            ..Self::default()
        }
    }
}

/// A synonym too short to be trusted: one token and fewer than five characters.
fn is_ambiguous_synonym(surface: &str) -> bool {
    let tokens = token_strings(surface);
    tokens.len() < 2 && tokens.iter().map(|t| t.chars().count()).sum::<usize>() < 5
}

/// Every (surface, code) pair fed to the disease matcher, in feed order.
pub fn disease_surfaces(taxonomy: &Taxonomy, sources: &LexiconSources) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    let keep = |surface: &str| {
        let norm = normalize(surface);
        !norm.is_empty() && !sources.discard.contains(&norm)
    };

    for node in taxonomy.nodes() {
        let Some(code) = node.catalog_code() else {
            continue;
        };
        let head = match truncate_title(&node.title) {
            Ok(head) => head,
            Err(err) => {
                warn!("{code}: {err}; keeping the full title");
                node.title.clone()
            }
        };
        for surface in expand_synonyms(&head, &sources.rewrite_rules) {
            if keep(&surface) {
                pairs.push((surface, code.to_string()));
            }
        }
    }

    for entry in &sources.synonyms {
        if !taxonomy.is_cataloged(&entry.code) {
            warn!("synonym {:?} refers to {}, which is not a catalog code", entry.surface, entry.code);
            continue;
        }
        if is_ambiguous_synonym(&entry.surface) {
            warn!("synonym {:?} for {} is too short, skipped", entry.surface, entry.code);
            continue;
        }
        if keep(&entry.surface) {
            pairs.push((entry.surface.clone(), entry.code.clone()));
        }
    }
    pairs
}

pub fn build_disease_processor(
    taxonomy: &Taxonomy,
    sources: &LexiconSources,
) -> Result<KeywordProcessor, LexiconError> {
    let mut builder = KeywordProcessorBuilder::new();
    for (surface, code) in disease_surfaces(taxonomy, sources) {
        // surfaces are non-empty after `keep`
        builder
            .add_keyword(&surface, &code)
            .expect("non-empty surface");
    }
    if builder.is_empty() {
        return Err(LexiconError::EmptyLexicon("disease".into()));
    }
    Ok(builder.build())
}

fn single_key_processor(name: &str, key: &str, expressions: &[String]) -> Result<KeywordProcessor, LexiconError> {
    let mut builder = KeywordProcessorBuilder::new();
    for expression in expressions {
        if let Err(err) = builder.add_keyword(expression, key) {
            warn!("{name}: {err}");
        }
    }
    if builder.is_empty() {
        return Err(LexiconError::EmptyLexicon(name.to_string()));
    }
    Ok(builder.build())
}

pub fn build_risk_processor(sources: &LexiconSources) -> Result<KeywordProcessor, LexiconError> {
    single_key_processor("risk", RISK_KEY, &sources.risk_expressions)
}

/// One matcher for the named filter; its single key is the filter name.
pub fn build_filter_processor(name: &str, expressions: &[String]) -> Result<KeywordProcessor, LexiconError> {
    single_key_processor(name, name, expressions)
}

pub fn build_filter_processors(
    sources: &LexiconSources,
) -> Result<BTreeMap<String, KeywordProcessor>, LexiconError> {
    sources
        .filters
        .iter()
        .map(|(name, exprs)| Ok((name.clone(), build_filter_processor(name, exprs)?)))
        .collect()
}
