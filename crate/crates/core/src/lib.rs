//! Corpus mining over a hierarchical disease classification.
//!
//! The pipeline has four stages:
//!
//! 1. [`taxonomy`] parses a two-column `Code`/`Title` export whose titles carry
//!    `- ` depth markers into an immutable tree.
//! 2. [`lexicon`] turns the coded diseases, a set of rewrite rules and a few
//!    expression lists into [`keyword::KeywordProcessor`]s.
//! 3. [`ingest`] runs the processors over each document paragraph by paragraph
//!    and keeps one [`ingest::DocExtraction`] per document in a [`ingest::Repository`].
//! 4. [`indicators`] counts documents per disease for a document subset and
//!    derives branch shares, occurrence rollups, document frequencies and gaps.

pub mod indicators;
pub mod ingest;
pub mod keyword;
pub mod lexicon;
pub mod taxonomy;

pub use indicators::{GapNormalization, IndicatorError, IndicatorTable, Role};
pub use ingest::{DocExtraction, DocKey, Document, DocumentSubset, Processors, Repository};
pub use keyword::{KeywordMatch, KeywordProcessor, KeywordProcessorBuilder};
pub use lexicon::{LexiconConfig, LexiconSources, RewriteRule};
pub use taxonomy::{NodeId, ParseOptions, RawRow, Taxonomy, TaxonomyError, TaxonomyNode};
