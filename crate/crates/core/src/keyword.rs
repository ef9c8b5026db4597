//! Phrasal keyword matching over word tokens.
//!
//! Text is split into tokens made of letters, digits, hyphens and apostrophes;
//! everything else separates tokens. Tokens are lowercased, so matching is
//! case-insensitive and any run of punctuation or whitespace between two words
//! is equivalent to a single space. `SARS-CoV-2` is one token and
//! `bronchopneumonia` never matches `pneumonia`.
//!
//! Keywords are inserted into a [`KeywordProcessorBuilder`] and frozen into a
//! [`KeywordProcessor`], an Aho-Corasick automaton whose alphabet is the token
//! vocabulary. Extraction reads every text token exactly once and reports
//! non-overlapping matches, choosing the longest keyword at the leftmost
//! starting token and resuming after it.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeywordError {
    #[error("surface {0:?} contains no word tokens")]
    EmptySurface(String),
}

/// A word token with its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: Cow<'a, str>,
    pub start: usize,
    pub end: usize,
}

pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '\''
}

/// Splits text into lowercase word tokens.
pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (is_word_char(c), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                tokens.push(make_token(text, s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(make_token(text, s, text.len()));
    }
    tokens
}

fn make_token(text: &str, start: usize, end: usize) -> Token<'_> {
    let raw = &text[start..end];
    let folded = if raw.chars().any(char::is_uppercase) {
        Cow::Owned(raw.to_lowercase())
    } else {
        Cow::Borrowed(raw)
    };
    Token {
        text: folded,
        start,
        end,
    }
}

/// Lowercase tokens of `text`, owned.
pub fn token_strings(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text.into_owned()).collect()
}

/// Canonical surface form: tokens joined by single spaces.
pub fn normalize(text: &str) -> String {
    token_strings(text).join(" ")
}

/// One match; `start..end` is a half-open range of token indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeywordMatch<'a> {
    pub key: &'a str,
    pub start: usize,
    pub end: usize,
}

/// Counters collected by [`KeywordProcessor::extract_keys_instrumented`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanStats {
    /// Tokens in the text.
    pub tokens: usize,
    /// Times a text token was read by the automaton.
    pub token_visits: usize,
    /// Failure links followed while reading tokens.
    pub failure_steps: usize,
}

/// Mutable keyword collection; call [`build`](Self::build) to get a matcher.
#[derive(Debug, Clone, Default)]
pub struct KeywordProcessorBuilder {
    entries: BTreeMap<Vec<String>, BTreeSet<String>>,
}

impl KeywordProcessorBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Maps `surface` to `key`. Returns `false` when the pair was already present.
    pub fn add_keyword(&mut self, surface: &str, key: &str) -> Result<bool, KeywordError> {
        let tokens = token_strings(surface);
        if tokens.is_empty() {
            return Err(KeywordError::EmptySurface(surface.to_string()));
        }
        Ok(self.entries.entry(tokens).or_default().insert(key.to_string()))
    }

    /// Number of distinct surface expressions.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn build(self) -> KeywordProcessor {
        KeywordProcessor::from_entries(self.entries)
    }
}

#[derive(Debug, Clone, Default)]
struct State {
    goto: HashMap<u32, u32>,
    fail: u32,
    /// Length in tokens of the path from the root.
    depth: u32,
    /// Interned keys accepted here, sorted by key text.
    outputs: Vec<u32>,
    /// Nearest state on the failure chain that has outputs.
    output_link: Option<u32>,
}

const ROOT: u32 = 0;

/// Frozen multi-pattern matcher. Immutable and `Sync`; share it freely.
#[derive(Debug, Clone)]
pub struct KeywordProcessor {
    vocab: HashMap<String, u32>,
    states: Vec<State>,
    keys: Vec<String>,
    entries: BTreeMap<Vec<String>, BTreeSet<String>>,
}

impl Default for KeywordProcessor {
    fn default() -> Self {
        KeywordProcessorBuilder::new().build()
    }
}

impl KeywordProcessor {
    fn from_entries(entries: BTreeMap<Vec<String>, BTreeSet<String>>) -> Self {
        let keys: Vec<String> = entries
            .values()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let key_ids: HashMap<&str, u32> = keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.as_str(), i as u32))
            .collect();

        let mut vocab: HashMap<String, u32> = HashMap::new();
        let mut states = vec![State::default()];
        for (tokens, surface_keys) in &entries {
            let mut cur = ROOT;
            for token in tokens {
                let next_vocab = vocab.len() as u32;
                let sym = *vocab.entry(token.clone()).or_insert(next_vocab);
                cur = match states[cur as usize].goto.get(&sym) {
                    Some(&next) => next,
                    None => {
                        let next = states.len() as u32;
                        let depth = states[cur as usize].depth + 1;
                        states.push(State {
                            depth,
                            ..State::default()
                        });
                        states[cur as usize].goto.insert(sym, next);
                        next
                    }
                };
            }
            let outputs = &mut states[cur as usize].outputs;
            outputs.extend(surface_keys.iter().map(|k| key_ids[k.as_str()]));
            outputs.sort_unstable();
        }

        // Failure links, breadth first.
        let mut queue: VecDeque<u32> = VecDeque::new();
        let root_children: Vec<u32> = states[ROOT as usize].goto.values().copied().collect();
        for child in root_children {
            states[child as usize].fail = ROOT;
            queue.push_back(child);
        }
        while let Some(state) = queue.pop_front() {
            let edges: Vec<(u32, u32)> = states[state as usize]
                .goto
                .iter()
                .map(|(&s, &n)| (s, n))
                .collect();
            for (sym, next) in edges {
                let mut f = states[state as usize].fail;
                let fail = loop {
                    if let Some(&t) = states[f as usize].goto.get(&sym) {
                        break t;
                    }
                    if f == ROOT {
                        break ROOT;
                    }
                    f = states[f as usize].fail;
                };
                states[next as usize].fail = fail;
                states[next as usize].output_link = if states[fail as usize].outputs.is_empty() {
                    states[fail as usize].output_link
                } else {
                    Some(fail)
                };
                queue.push_back(next);
            }
        }

        Self {
            vocab,
            states,
            keys,
            entries,
        }
    }

    /// Number of distinct surface expressions.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct payload keys, sorted.
    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    /// Surface (as normalized tokens) to keys, in surface order.
    pub fn surfaces(&self) -> impl Iterator<Item = (&[String], &BTreeSet<String>)> {
        self.entries.iter().map(|(t, k)| (t.as_slice(), k))
    }

    #[inline]
    fn step(&self, state: u32, token: &str, stats: &mut ScanStats) -> u32 {
        stats.token_visits += 1;
        let Some(&sym) = self.vocab.get(token) else {
            return ROOT;
        };
        let mut cur = state;
        loop {
            if let Some(&next) = self.states[cur as usize].goto.get(&sym) {
                return next;
            }
            if cur == ROOT {
                return ROOT;
            }
            cur = self.states[cur as usize].fail;
            stats.failure_steps += 1;
        }
    }

    #[inline]
    fn first_output(&self, state: u32) -> Option<u32> {
        let s = &self.states[state as usize];
        if s.outputs.is_empty() {
            s.output_link
        } else {
            Some(state)
        }
    }

    /// All non-overlapping leftmost-longest matches, in text order.
    /// A surface mapped to several keys yields one match per key over the same span.
    pub fn extract_keys(&self, text: &str) -> Vec<KeywordMatch<'_>> {
        self.extract_keys_instrumented(text).0
    }

    pub fn extract_keys_instrumented(&self, text: &str) -> (Vec<KeywordMatch<'_>>, ScanStats) {
        let tokens = tokenize(text);
        let mut stats = ScanStats {
            tokens: tokens.len(),
            ..ScanStats::default()
        };
        if self.entries.is_empty() {
            stats.token_visits = tokens.len();
            return (Vec::new(), stats);
        }

        // longest[start] = (end, accepting state) of the longest keyword starting there
        let mut longest: Vec<Option<(usize, u32)>> = vec![None; tokens.len()];
        let mut state = ROOT;
        for (i, token) in tokens.iter().enumerate() {
            state = self.step(state, &token.text, &mut stats);
            let mut out = self.first_output(state);
            while let Some(accepting) = out {
                let len = self.states[accepting as usize].depth as usize;
                let start = i + 1 - len;
                if longest[start].is_none_or(|(end, _)| end < i + 1) {
                    longest[start] = Some((i + 1, accepting));
                }
                out = self.states[accepting as usize].output_link;
            }
        }

        let mut matches = Vec::new();
        let mut i = 0;
        while i < longest.len() {
            match longest[i] {
                Some((end, accepting)) => {
                    for &key in &self.states[accepting as usize].outputs {
                        matches.push(KeywordMatch {
                            key: &self.keys[key as usize],
                            start: i,
                            end,
                        });
                    }
                    i = end;
                }
                None => i += 1,
            }
        }
        (matches, stats)
    }

    /// True iff [`extract_keys`](Self::extract_keys) would return something.
    /// Stops at the first keyword found.
    pub fn contains_any(&self, text: &str) -> bool {
        if self.entries.is_empty() {
            return false;
        }
        let mut stats = ScanStats::default();
        let mut state = ROOT;
        for token in tokenize(text) {
            state = self.step(state, &token.text, &mut stats);
            if self.first_output(state).is_some() {
                return true;
            }
        }
        false
    }

    /// Distinct keys found in `text`.
    pub fn key_set(&self, text: &str) -> BTreeSet<&str> {
        self.extract_keys(text).into_iter().map(|m| m.key).collect()
    }
}
