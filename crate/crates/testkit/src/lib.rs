//! Generators and brute-force oracles shared by the test suites.
//!
//! Nothing here calls into the matching, tree or counting code under test:
//! trees are generated as parent links and walked by following parents, text is
//! matched by trying every pattern at every offset, and counts are recomputed
//! by scanning every record.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;
use riskmap_core::ingest::{DocExtraction, Document};
use riskmap_core::lexicon::LexiconSources;
use riskmap_core::taxonomy::{NodeId, RawRow};

/// A tree built from random parent links, listed in document (pre-order) order.
#[derive(Debug, Clone)]
pub struct GeneratedTree {
    pub nodes: Vec<GenNode>,
}

#[derive(Debug, Clone)]
pub struct GenNode {
    pub row_index: u64,
    /// Index into `nodes`.
    pub parent: Option<usize>,
    pub title: String,
    pub code: Option<String>,
}

impl GeneratedTree {
    /// `n` nodes; each node carries a code with probability `code_prob`.
    pub fn random<R: Rng>(rng: &mut R, n: usize, code_prob: f64) -> Self {
        assert!(n > 0);
        // creation order, parent links into creation order
        let mut parents: Vec<Option<usize>> = vec![None];
        for i in 1..n {
            let parent = if rng.gen_bool(0.05) {
                None
            } else if rng.gen_bool(0.7) {
                Some(rng.gen_range(i.saturating_sub(5)..i))
            } else {
                Some(rng.gen_range(0..i))
            };
            parents.push(parent);
        }
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut roots = Vec::new();
        for (i, p) in parents.iter().enumerate() {
            match p {
                Some(p) => children[*p].push(i),
                None => roots.push(i),
            }
        }
        // pre-order
        let mut order = Vec::with_capacity(n);
        let mut stack: Vec<usize> = roots.iter().rev().copied().collect();
        while let Some(i) = stack.pop() {
            order.push(i);
            stack.extend(children[i].iter().rev().copied());
        }
        let mut doc_pos = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            doc_pos[i] = pos;
        }
        let words = ["alpha", "beta", "gamma", "delta", "kappa", "sigma", "omega"];
        let nodes = order
            .iter()
            .enumerate()
            .map(|(pos, &i)| GenNode {
                row_index: 10 + 3 * pos as u64,
                parent: parents[i].map(|p| doc_pos[p]),
                // occasional duplicate titles are deliberate
                title: if rng.gen_bool(0.1) {
                    words.choose(rng).unwrap().to_string()
                } else {
                    format!("{} disorder {i}", words.choose(rng).unwrap())
                },
                code: rng.gen_bool(code_prob).then(|| format!("C{i:04}")),
            })
            .collect();
        Self { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn id(&self, i: usize) -> NodeId {
        NodeId(self.nodes[i].row_index)
    }

    pub fn depth(&self, i: usize) -> usize {
        let mut d = 0;
        let mut cur = i;
        while let Some(p) = self.nodes[cur].parent {
            d += 1;
            cur = p;
        }
        d
    }

    pub fn path(&self, i: usize) -> Vec<String> {
        let mut path = vec![self.nodes[i].title.clone()];
        let mut cur = i;
        while let Some(p) = self.nodes[cur].parent {
            path.push(self.nodes[p].title.clone());
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn is_within(&self, i: usize, ancestor: usize) -> bool {
        let mut cur = Some(i);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.nodes[c].parent;
        }
        false
    }

    /// Raw export rows with `- ` depth markers.
    pub fn rows(&self) -> Vec<RawRow> {
        (0..self.len())
            .map(|i| RawRow {
                row_index: self.nodes[i].row_index,
                code: self.nodes[i].code.clone(),
                title: format!("{}{}", "- ".repeat(self.depth(i)), self.nodes[i].title),
            })
            .collect()
    }

    /// The node and its descendants, in document order.
    pub fn subtree(&self, i: usize) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.is_within(j, i)).collect()
    }

    pub fn coded_in(&self, branch: Option<usize>) -> BTreeSet<String> {
        (0..self.len())
            .filter(|&j| branch.is_none_or(|b| self.is_within(j, b)))
            .filter_map(|j| self.nodes[j].code.clone())
            .collect()
    }

    pub fn children(&self, i: Option<usize>) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.nodes[j].parent == i).collect()
    }

    pub fn codes(&self) -> Vec<String> {
        self.nodes.iter().filter_map(|n| n.code.clone()).collect()
    }
}

/// Word tokens as the matcher is meant to see them, via a regex.
pub fn oracle_tokens(text: &str) -> Vec<String> {
    thread_local! {
        static WORD: Regex = Regex::new(r"[\p{Alphabetic}\p{N}'\-]+").unwrap();
    }
    WORD.with(|re| re.find_iter(text).map(|m| m.as_str().to_lowercase()).collect())
}

/// Leftmost-longest, non-overlapping scan that tries every pattern at every token offset.
pub fn naive_extract(patterns: &[(String, String)], text: &str) -> Vec<(String, usize, usize)> {
    let pats: Vec<(Vec<String>, &str)> = patterns
        .iter()
        .map(|(s, k)| (oracle_tokens(s), k.as_str()))
        .filter(|(t, _)| !t.is_empty())
        .collect();
    let toks = oracle_tokens(text);
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let mut best = 0;
        let mut keys = BTreeSet::new();
        for (p, k) in &pats {
            if i + p.len() <= toks.len() && toks[i..i + p.len()] == p[..] {
                if p.len() > best {
                    best = p.len();
                    keys.clear();
                }
                if p.len() == best {
                    keys.insert(*k);
                }
            }
        }
        if best > 0 {
            out.extend(keys.into_iter().map(|k| (k.to_string(), i, i + best)));
            i += best;
        } else {
            i += 1;
        }
    }
    out
}

pub const SEPARATORS: [&str; 6] = [" ", "  ", ", ", "; ", "\n", " (" ];

/// Random vocabulary words `w0..w{size}`.
pub fn vocabulary(size: usize) -> Vec<String> {
    (0..size).map(|i| format!("w{i}")).collect()
}

/// A random phrase of 1..=max_len vocabulary words.
pub fn random_phrase<R: Rng>(rng: &mut R, vocab: &[String], max_len: usize) -> String {
    let len = rng.gen_range(1..=max_len);
    (0..len)
        .map(|_| vocab.choose(rng).unwrap().as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_case<R: Rng>(rng: &mut R, word: &str) -> String {
    match rng.gen_range(0..4) {
        0 => word.to_uppercase(),
        1 => {
            let mut c = word.chars();
            c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
        }
        _ => word.to_string(),
    }
}

/// Text of roughly `len` words: random vocabulary with planted phrases, random
/// casing and random separators.
pub fn random_text<R: Rng>(rng: &mut R, vocab: &[String], planted: &[String], len: usize) -> String {
    let mut words: Vec<String> = Vec::with_capacity(len);
    while words.len() < len {
        if !planted.is_empty() && rng.gen_bool(0.15) {
            words.extend(oracle_tokens(planted.choose(rng).unwrap()));
        } else {
            words.push(vocab.choose(rng).unwrap().clone());
        }
    }
    let mut text = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            text.push_str(SEPARATORS.choose(rng).unwrap());
        }
        text.push_str(&random_case(rng, w));
    }
    text
}

/// Lexicons used to plant mentions in synthetic documents.
#[derive(Debug, Clone, Default)]
pub struct SyntheticLexicon {
    /// (surface, code)
    pub diseases: Vec<(String, String)>,
    pub risk: Vec<String>,
    pub filters: BTreeMap<String, Vec<String>>,
}

pub fn random_document<R: Rng>(
    rng: &mut R,
    source: &str,
    doc_id: &str,
    lexicon: &SyntheticLexicon,
    filler: &[String],
) -> Document {
    let paragraph = |rng: &mut R| {
        let mut planted: Vec<String> = Vec::new();
        for _ in 0..rng.gen_range(0..3) {
            if let Some((s, _)) = lexicon.diseases.choose(rng) {
                planted.push(s.clone());
            }
        }
        if rng.gen_bool(0.3) {
            if let Some(r) = lexicon.risk.choose(rng) {
                planted.push(r.clone());
            }
        }
        for exprs in lexicon.filters.values() {
            if rng.gen_bool(0.1) {
                planted.push(exprs.choose(rng).unwrap().clone());
            }
        }
        let len = rng.gen_range(0..25);
        random_text(rng, filler, &planted, len)
    };
    let title = paragraph(rng);
    let abstract_paragraphs = (0..rng.gen_range(0..3)).map(|_| paragraph(rng)).collect();
    let body = (0..rng.gen_range(0..5)).map(|_| paragraph(rng)).collect();
    Document {
        source: source.to_string(),
        doc_id: doc_id.to_string(),
        title,
        abstract_paragraphs,
        body,
    }
}

/// Recomputes a document's extraction by naive scanning of each paragraph.
pub fn brute_extract(doc: &Document, lexicon: &SyntheticLexicon) -> DocExtraction {
    let risk: Vec<(String, String)> = lexicon.risk.iter().map(|r| (r.clone(), "RISK".into())).collect();
    let paragraphs: Vec<&str> = std::iter::once(doc.title.as_str())
        .chain(doc.abstract_paragraphs.iter().map(String::as_str))
        .chain(doc.body.iter().map(String::as_str))
        .collect();
    let mut codes = BTreeSet::new();
    let mut risk_codes = BTreeSet::new();
    let mut flags: BTreeMap<String, bool> = lexicon.filters.keys().map(|k| (k.clone(), false)).collect();
    for p in paragraphs {
        let here: BTreeSet<String> = naive_extract(&lexicon.diseases, p).into_iter().map(|m| m.0).collect();
        if !naive_extract(&risk, p).is_empty() {
            risk_codes.extend(here.iter().cloned());
        }
        codes.extend(here);
        for (name, exprs) in &lexicon.filters {
            let pats: Vec<(String, String)> = exprs.iter().map(|e| (e.clone(), name.clone())).collect();
            if !naive_extract(&pats, p).is_empty() {
                flags.insert(name.clone(), true);
            }
        }
    }
    DocExtraction {
        source: doc.source.clone(),
        doc_id: doc.doc_id.clone(),
        codes,
        risk_codes,
        filter_flags: flags,
    }
}

/// Document counts (found, at risk) per code over the given records.
pub fn brute_counts<'a, I>(records: I) -> (BTreeMap<String, u64>, BTreeMap<String, u64>)
where
    I: IntoIterator<Item = &'a DocExtraction>,
{
    let records: Vec<&DocExtraction> = records.into_iter().collect();
    let all_codes: BTreeSet<&String> = records.iter().flat_map(|r| r.codes.iter()).collect();
    let mut found = BTreeMap::new();
    let mut risk = BTreeMap::new();
    for code in all_codes {
        let nf = records.iter().filter(|r| r.codes.contains(code)).count() as u64;
        let nr = records.iter().filter(|r| r.risk_codes.contains(code)).count() as u64;
        if nf > 0 {
            found.insert(code.clone(), nf);
        }
        if nr > 0 {
            risk.insert(code.clone(), nr);
        }
    }
    (found, risk)
}

/// A random tree, a lexicon keyed by its codes, and a corpus mentioning them.
pub struct Scenario {
    pub tree: GeneratedTree,
    pub lexicon: SyntheticLexicon,
    pub docs: Vec<Document>,
}

impl Scenario {
    pub fn random<R: Rng>(rng: &mut R, nodes: usize, docs: usize) -> Self {
        let tree = GeneratedTree::random(rng, nodes, 0.4);
        // distinct one- or two-word surfaces; vocabulary disjoint from filler
        let lexicon = SyntheticLexicon {
            diseases: tree
                .codes()
                .iter()
                .enumerate()
                .map(|(i, code)| {
                    let surface = if i % 3 == 0 {
                        format!("morbus{i} syndrome")
                    } else {
                        format!("morbus{i}")
                    };
                    (surface, code.clone())
                })
                .collect(),
            risk: vec!["risk factor".into(), "risk factors".into(), "comorbidity".into()],
            filters: BTreeMap::from([("covid".to_string(), vec!["sars-cov-2".to_string(), "covid-19".to_string()])]),
        };
        let filler = vocabulary(40);
        let sources = ["alpha", "beta", "gamma"];
        let docs = (0..docs)
            .map(|i| random_document(rng, sources[i % sources.len()], &format!("doc{i:04}"), &lexicon, &filler))
            .collect();
        Self { tree, lexicon, docs }
    }

    /// Taxonomy rows in which each coded node is titled with its surface.
    pub fn rows(&self) -> Vec<RawRow> {
        let surface: BTreeMap<&str, &str> = self
            .lexicon
            .diseases
            .iter()
            .map(|(s, c)| (c.as_str(), s.as_str()))
            .collect();
        let mut rows = self.tree.rows();
        for (row, node) in rows.iter_mut().zip(&self.tree.nodes) {
            if let Some(code) = &node.code {
                let depth = row.title.len() - node.title.len();
                row.title = format!("{}{}", &row.title[..depth], surface[code.as_str()]);
            }
        }
        rows
    }

    /// Lexicon inputs without rewrite rules, so the surfaces are fed as they are.
    pub fn sources(&self) -> LexiconSources {
        LexiconSources {
            risk_expressions: self.lexicon.risk.clone(),
            filters: self.lexicon.filters.clone(),
            ..LexiconSources::default()
        }
    }
}
