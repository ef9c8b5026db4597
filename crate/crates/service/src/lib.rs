//! HTTP API and command line over a repository of extraction records.
//!
//! A repository directory holds the records written by `riskmap ingest` and a
//! copy of the classification they were extracted with. The server loads it
//! into an immutable [`generation::Generation`] and swaps in a new one when the
//! directory changes.

pub mod api;
pub mod cli;
pub mod colors;
pub mod generation;
pub mod views;
