//! Hierarchical classification parsed from a flat `Code`/`Title` export.
//!
//! The export lists nodes in document (pre-order) order. The depth of a node is
//! not a column of its own: it is encoded as a run of `- ` markers in front of
//! the title, so `- - Pneumonia` sits two levels below the chapter it belongs to.
//! Branch nodes usually have no code.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stable node identifier: the row index the node had in the raw export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One line of the raw export.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRow {
    pub row_index: u64,
    pub code: Option<String>,
    pub title: String,
}

impl RawRow {
    pub fn new(row_index: u64, code: Option<&str>, title: &str) -> Self {
        Self {
            row_index,
            code: code.map(str::to_string),
            title: title.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("row {row}: depth {depth} is more than one level below the previous row (depth {previous:?})")]
    MalformedDepth {
        row: NodeId,
        depth: usize,
        previous: Option<usize>,
    },
    #[error("code {code:?} appears on rows {first} and {second}")]
    DuplicateCode {
        code: String,
        first: NodeId,
        second: NodeId,
    },
    #[error("row index {0} appears twice")]
    DuplicateRow(NodeId),
    #[error("row {0}: title is empty once depth markers are removed")]
    EmptyTitle(NodeId),
    #[error("no classification rows to parse")]
    EmptyInput,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("missing column {0:?} in header")]
    MissingColumn(&'static str),
    #[error("invalid taxonomy config: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parse-time options. Both are configuration because the boundary branch and
/// the ambiguous entries depend on the classification release.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParseOptions {
    /// Rows from the first one whose stripped title equals this are dropped.
    #[serde(default)]
    pub stop_title: Option<String>,
    /// Codes kept in the tree but left out of the catalog set.
    #[serde(default)]
    pub discard_codes: BTreeSet<String>,
}

impl ParseOptions {
    /// Reads the `key = value` options file (TOML):
    ///
    /// ```toml
    /// stop_title = "External causes of morbidity or mortality"
    /// discard_codes = ["XX00"]
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self, TaxonomyError> {
        toml::from_str(text).map_err(|e| TaxonomyError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaxonomyNode {
    pub id: NodeId,
    pub code: Option<String>,
    pub title: String,
    pub depth: usize,
    /// Titles from the root down to this node; `path[depth] == title`.
    pub path: Vec<String>,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Code listed in the discard set; the node stays in the tree.
    pub discarded: bool,
}

impl TaxonomyNode {
    /// The code, if the node belongs to the catalog set.
    pub fn catalog_code(&self) -> Option<&str> {
        match &self.code {
            Some(code) if !self.discarded => Some(code),
            _ => None,
        }
    }
}

/// Splits the leading depth markers off a raw title.
///
/// Every `-` counts as one level and may be followed by spaces or tabs.
/// Leading whitespace before the first marker is ignored.
pub fn decode_depth(raw: &str) -> (usize, &str) {
    let mut rest = raw.trim_start();
    let mut depth = 0;
    while let Some(after) = rest.strip_prefix('-') {
        depth += 1;
        rest = after.trim_start_matches([' ', '\t']);
    }
    (depth, rest.trim())
}

/// Immutable classification tree.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    nodes: Vec<TaxonomyNode>,
    position: HashMap<NodeId, usize>,
    code_index: BTreeMap<String, NodeId>,
    /// Exclusive end of each node's subtree in document order.
    subtree_end: Vec<usize>,
    bfs_order: Vec<NodeId>,
    bfs_rank: Vec<usize>,
    roots: Vec<NodeId>,
}

/// A depth-limited view of a subtree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreeSlice {
    /// `None` when the slice covers the whole forest.
    pub root: Option<NodeId>,
    pub max_levels: usize,
    /// Retained nodes in document order.
    pub nodes: Vec<SliceNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SliceNode {
    pub id: NodeId,
    /// Parent inside the slice; `None` for the slice's top level.
    pub parent: Option<NodeId>,
    /// Level relative to the top of the slice.
    pub level: usize,
    /// Catalog codes of the node itself and of every cut descendant.
    pub attributed: Vec<String>,
    /// True when descendants of this node were cut away.
    pub truncated: bool,
}

impl TreeSlice {
    pub fn attributed_total(&self) -> usize {
        self.nodes.iter().map(|n| n.attributed.len()).sum()
    }
}

impl Taxonomy {
    /// Builds the tree from rows in document order.
    pub fn parse<I>(rows: I, options: &ParseOptions) -> Result<Self, TaxonomyError>
    where
        I: IntoIterator<Item = RawRow>,
    {
        let mut nodes: Vec<TaxonomyNode> = Vec::new();
        let mut position = HashMap::new();
        let mut code_index: BTreeMap<String, NodeId> = BTreeMap::new();
        // ancestors[d] = position of the most recent node at depth d
        let mut ancestors: Vec<usize> = Vec::new();

        for row in rows {
            let id = NodeId(row.row_index);
            let (depth, title) = decode_depth(&row.title);
            if title.is_empty() {
                return Err(TaxonomyError::EmptyTitle(id));
            }
            if options.stop_title.as_deref() == Some(title) {
                break;
            }
            let previous = nodes.last().map(|n| n.depth);
            let max_depth = previous.map_or(0, |d| d + 1);
            if depth > max_depth {
                return Err(TaxonomyError::MalformedDepth {
                    row: id,
                    depth,
                    previous,
                });
            }
            let pos = nodes.len();
            if position.insert(id, pos).is_some() {
                return Err(TaxonomyError::DuplicateRow(id));
            }
            let code = row
                .code
                .as_deref()
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .map(str::to_string);
            if let Some(code) = &code {
                if let Some(first) = code_index.insert(code.clone(), id) {
                    return Err(TaxonomyError::DuplicateCode {
                        code: code.clone(),
                        first,
                        second: id,
                    });
                }
            }

            ancestors.truncate(depth);
            let parent_pos = ancestors.last().copied();
            let mut path = parent_pos.map_or_else(Vec::new, |p| nodes[p].path.clone());
            path.push(title.to_string());
            let parent = parent_pos.map(|p| {
                nodes[p].children.push(id);
                nodes[p].id
            });
            ancestors.push(pos);

            let discarded = code
                .as_ref()
                .is_some_and(|c| options.discard_codes.contains(c));
            nodes.push(TaxonomyNode {
                id,
                code,
                title: title.to_string(),
                depth,
                path,
                parent,
                children: Vec::new(),
                discarded,
            });
        }

        if nodes.is_empty() {
            return Err(TaxonomyError::EmptyInput);
        }

        let subtree_end = compute_subtree_ends(&nodes);
        let roots: Vec<NodeId> = nodes
            .iter()
            .filter(|n| n.parent.is_none())
            .map(|n| n.id)
            .collect();

        let mut bfs_order = Vec::with_capacity(nodes.len());
        let mut queue: VecDeque<NodeId> = roots.iter().copied().collect();
        while let Some(id) = queue.pop_front() {
            bfs_order.push(id);
            queue.extend(nodes[position[&id]].children.iter().copied());
        }
        let mut bfs_rank = vec![0; nodes.len()];
        for (rank, id) in bfs_order.iter().enumerate() {
            bfs_rank[position[id]] = rank;
        }

        Ok(Self {
            nodes,
            position,
            code_index,
            subtree_end,
            bfs_order,
            bfs_rank,
            roots,
        })
    }

    /// Reads a delimiter-separated export with `Code` and `Title` columns.
    /// The delimiter is a tab when the header line contains one, a comma otherwise.
    pub fn from_reader<R: Read>(mut reader: R, options: &ParseOptions) -> Result<Self, TaxonomyError> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
        let header = text.lines().next().unwrap_or_default();
        let delimiter = if header.contains('\t') { b'\t' } else { b',' };

        let mut csv = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .flexible(true)
            .from_reader(text.as_bytes());
        let headers = csv.headers()?.clone();
        let column = |name: &'static str| {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
                .ok_or(TaxonomyError::MissingColumn(name))
        };
        let code_col = column("Code")?;
        let title_col = column("Title")?;

        let mut rows = Vec::new();
        for (index, record) in csv.records().enumerate() {
            let record = record?;
            let title = record.get(title_col).unwrap_or_default();
            if title.trim().is_empty() && record.iter().all(|f| f.trim().is_empty()) {
                continue;
            }
            rows.push(RawRow {
                row_index: index as u64,
                code: record.get(code_col).map(str::to_string),
                title: title.to_string(),
            });
        }
        Self::parse(rows, options)
    }

    pub fn load(path: impl AsRef<Path>, options: &ParseOptions) -> Result<Self, TaxonomyError> {
        Self::from_reader(std::fs::File::open(path)?, options)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in document order.
    pub fn nodes(&self) -> &[TaxonomyNode] {
        &self.nodes
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn get(&self, id: NodeId) -> Option<&TaxonomyNode> {
        self.position.get(&id).map(|&p| &self.nodes[p])
    }

    pub fn node(&self, id: NodeId) -> Result<&TaxonomyNode, TaxonomyError> {
        self.get(id).ok_or(TaxonomyError::UnknownNode(id))
    }

    /// Looks up any code, including discarded ones.
    pub fn by_code(&self, code: &str) -> Option<&TaxonomyNode> {
        self.code_index.get(code).and_then(|id| self.get(*id))
    }

    /// True when `code` belongs to the catalog set (coded and not discarded).
    pub fn is_cataloged(&self, code: &str) -> bool {
        self.by_code(code).is_some_and(|n| !n.discarded)
    }

    pub fn bfs_order(&self) -> &[NodeId] {
        &self.bfs_order
    }

    pub fn bfs_ordinal(&self, id: NodeId) -> Option<usize> {
        self.position.get(&id).map(|&p| self.bfs_rank[p])
    }

    /// Position of the node in document order.
    pub fn position(&self, id: NodeId) -> Result<usize, TaxonomyError> {
        self.position
            .get(&id)
            .copied()
            .ok_or(TaxonomyError::UnknownNode(id))
    }

    /// Document-order positions covered by a branch, or by the whole forest.
    pub fn subtree_range(&self, branch: Option<NodeId>) -> Result<Range<usize>, TaxonomyError> {
        match branch {
            None => Ok(0..self.nodes.len()),
            Some(id) => {
                let p = self.position(id)?;
                Ok(p..self.subtree_end[p])
            }
        }
    }

    /// The branch and all its descendants, in document order.
    pub fn subtree(&self, branch: NodeId) -> Result<Vec<NodeId>, TaxonomyError> {
        let range = self.subtree_range(Some(branch))?;
        Ok(self.nodes[range].iter().map(|n| n.id).collect())
    }

    /// Catalog codes within a branch, or within the whole classification.
    pub fn coded_diseases(&self, branch: Option<NodeId>) -> Result<BTreeSet<String>, TaxonomyError> {
        let range = self.subtree_range(branch)?;
        Ok(self.nodes[range]
            .iter()
            .filter_map(|n| n.catalog_code().map(str::to_string))
            .collect())
    }

    /// The depth-0 ancestor of a node.
    pub fn top_branch(&self, id: NodeId) -> Result<NodeId, TaxonomyError> {
        let mut node = self.node(id)?;
        while let Some(parent) = node.parent {
            node = self.node(parent)?;
        }
        Ok(node.id)
    }

    /// Children of a branch, or the roots when no branch is given.
    pub fn children_of(&self, branch: Option<NodeId>) -> Result<&[NodeId], TaxonomyError> {
        match branch {
            None => Ok(&self.roots),
            Some(id) => Ok(&self.node(id)?.children),
        }
    }

    /// Keeps at most `max_levels` levels of a branch (the branch itself being
    /// the first level). Catalog codes below the cut are attributed to their
    /// deepest retained ancestor.
    ///
    /// With no branch the whole forest is sliced and every root is a top-level node.
    pub fn truncate_to_depth(
        &self,
        branch: Option<NodeId>,
        max_levels: usize,
    ) -> Result<TreeSlice, TaxonomyError> {
        let max_levels = max_levels.max(1);
        let range = self.subtree_range(branch)?;
        let base_depth = branch.map_or(0, |_| self.nodes[range.start].depth);

        let mut out: Vec<SliceNode> = Vec::new();
        // last_at_level[l] = index in `out` of the latest retained node at level l
        let mut last_at_level: Vec<usize> = Vec::with_capacity(max_levels);
        for node in &self.nodes[range] {
            let level = node.depth - base_depth;
            if level < max_levels {
                last_at_level.truncate(level);
                let parent = last_at_level.last().map(|&i| out[i].id);
                last_at_level.push(out.len());
                out.push(SliceNode {
                    id: node.id,
                    parent,
                    level,
                    attributed: node.catalog_code().map(str::to_string).into_iter().collect(),
                    truncated: false,
                });
            } else {
                let holder = last_at_level[max_levels - 1];
                out[holder].truncated = true;
                if let Some(code) = node.catalog_code() {
                    out[holder].attributed.push(code.to_string());
                }
            }
        }

        Ok(TreeSlice {
            root: branch,
            max_levels,
            nodes: out,
        })
    }
}

fn compute_subtree_ends(nodes: &[TaxonomyNode]) -> Vec<usize> {
    let mut ends = vec![nodes.len(); nodes.len()];
    let mut open: Vec<usize> = Vec::new();
    for (pos, node) in nodes.iter().enumerate() {
        while let Some(&top) = open.last() {
            if nodes[top].depth >= node.depth {
                ends[top] = pos;
                open.pop();
            } else {
                break;
            }
        }
        open.push(pos);
    }
    ends
}
