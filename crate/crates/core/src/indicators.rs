//! Document counts per disease and the branch-level indicators built on them.
//!
//! For a document subset C, `n_found(d)` counts the documents of C mentioning
//! disease d and `n_risk(d)` those mentioning it next to a risk expression.
//! Three disease sets follow: the catalog (every coded node), the diseases
//! found in C, and the diseases at risk in C.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{DocumentSubset, Repository, SubsetSpec};
use crate::taxonomy::{NodeId, Taxonomy, TaxonomyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Catalog,
    Found,
    AtRisk,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Catalog, Role::Found, Role::AtRisk];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Catalog => "catalog",
            Role::Found => "found",
            Role::AtRisk => "at_risk",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "catalog" => Ok(Role::Catalog),
            "found" => Ok(Role::Found),
            "at_risk" | "at-risk" => Ok(Role::AtRisk),
            other => Err(format!("unknown role {other:?} (expected catalog, found or at_risk)")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IndicatorError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("the document subset is empty")]
    EmptySubset,
    #[error("role {0} has no document counts")]
    NotCounted(Role),
    #[error("k must be at least 1")]
    InvalidK,
}

impl From<TaxonomyError> for IndicatorError {
    fn from(err: TaxonomyError) -> Self {
        match err {
            TaxonomyError::UnknownNode(id) => IndicatorError::UnknownNode(id),
            other => unreachable!("taxonomy lookups only fail on unknown nodes: {other}"),
        }
    }
}

/// Per-disease document counts for one subset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IndicatorTable {
    pub subset: SubsetSpec,
    /// |C|
    pub subset_size: usize,
    /// Documents of C with at least one catalog code.
    pub docs_with_code: usize,
    /// Documents of C with at least one code at risk.
    pub docs_with_risk: usize,
    pub n_found: BTreeMap<String, u64>,
    pub n_risk: BTreeMap<String, u64>,
}

impl IndicatorTable {
    /// Counts documents of `subset`. Codes outside the catalog are ignored.
    pub fn build(repo: &Repository, taxonomy: &Taxonomy, subset: &DocumentSubset) -> Self {
        let mut table = IndicatorTable {
            subset: subset.spec.clone(),
            subset_size: subset.len(),
            ..Self::default()
        };
        for key in &subset.keys {
            let Some(record) = repo.get(key) else {
                continue;
            };
            let mut any_code = false;
            for code in record.codes.iter().filter(|c| taxonomy.is_cataloged(c)) {
                *table.n_found.entry(code.clone()).or_default() += 1;
                any_code = true;
            }
            let mut any_risk = false;
            for code in record.risk_codes.iter().filter(|c| taxonomy.is_cataloged(c)) {
                *table.n_risk.entry(code.clone()).or_default() += 1;
                any_risk = true;
            }
            table.docs_with_code += usize::from(any_code);
            table.docs_with_risk += usize::from(any_risk);
        }
        table
    }

    /// n(d) for a counted role.
    pub fn count(&self, role: Role, code: &str) -> Result<u64, IndicatorError> {
        let counts = match role {
            Role::Found => &self.n_found,
            Role::AtRisk => &self.n_risk,
            Role::Catalog => return Err(IndicatorError::NotCounted(role)),
        };
        Ok(counts.get(code).copied().unwrap_or(0))
    }

    /// The disease set for a role.
    pub fn members(&self, taxonomy: &Taxonomy, role: Role) -> BTreeSet<String> {
        match role {
            Role::Catalog => taxonomy.coded_diseases(None).expect("whole tree"),
            Role::Found => self.n_found.keys().cloned().collect(),
            Role::AtRisk => self.n_risk.keys().cloned().collect(),
        }
    }

    fn is_member(&self, role: Role, code: &str) -> bool {
        match role {
            Role::Catalog => true,
            Role::Found => self.n_found.contains_key(code),
            Role::AtRisk => self.n_risk.contains_key(code),
        }
    }

    /// n(d) / |C|.
    pub fn doc_frequency(&self, code: &str, role: Role) -> Result<f64, IndicatorError> {
        let n = self.count(role, code)?;
        if self.subset_size == 0 {
            return Err(IndicatorError::EmptySubset);
        }
        Ok(n as f64 / self.subset_size as f64)
    }
}

/// Membership count per document position, for catalog codes in the role's set.
fn member_flags(table: &IndicatorTable, taxonomy: &Taxonomy, role: Role) -> Vec<usize> {
    taxonomy
        .nodes()
        .iter()
        .map(|n| match n.catalog_code() {
            Some(code) if table.is_member(role, code) => 1,
            _ => 0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareRow {
    pub node: NodeId,
    /// Diseases of the role's set inside this child's subtree.
    pub count: usize,
    pub share: f64,
}

/// Shares of a branch's children within one disease set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchShares {
    /// `None` for the whole classification; the children are then the roots.
    pub parent: Option<NodeId>,
    pub role: Role,
    /// Diseases of the role's set inside the parent's subtree.
    pub total: usize,
    /// 1 when the parent itself carries a code of the set.
    pub own_count: usize,
    pub own_share: f64,
    /// No disease of the set under the parent; every share is 0.
    pub empty: bool,
    pub rows: Vec<ShareRow>,
}

/// Share of each child: |child subtree ∩ S| / |parent subtree ∩ S|.
pub fn branch_share(
    table: &IndicatorTable,
    taxonomy: &Taxonomy,
    parent: Option<NodeId>,
    role: Role,
) -> Result<BranchShares, IndicatorError> {
    let flags = member_flags(table, taxonomy, role);
    let range = taxonomy.subtree_range(parent)?;
    let total: usize = flags[range.clone()].iter().sum();
    let own_count = match parent {
        Some(_) => flags[range.start],
        None => 0,
    };
    let ratio = |count: usize| if total == 0 { 0.0 } else { count as f64 / total as f64 };

    let mut rows = Vec::new();
    for &child in taxonomy.children_of(parent)? {
        let count = flags[taxonomy.subtree_range(Some(child))?].iter().sum();
        rows.push(ShareRow {
            node: child,
            count,
            share: ratio(count),
        });
    }
    Ok(BranchShares {
        parent,
        role,
        total,
        own_count,
        own_share: ratio(own_count),
        empty: total == 0,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RollupNode {
    pub node: NodeId,
    pub parent: Option<NodeId>,
    /// n(d) of the node's own code, 0 if uncoded.
    pub own: u64,
    /// Σ n(d) over every catalog code in the node's subtree.
    pub value: u64,
}

/// Occurrence rollup of a branch, nodes in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rollup {
    pub root: Option<NodeId>,
    pub role: Role,
    pub total: u64,
    pub nodes: Vec<RollupNode>,
}

impl Rollup {
    pub fn value_of(&self, node: NodeId) -> Option<u64> {
        self.nodes.iter().find(|n| n.node == node).map(|n| n.value)
    }
}

fn own_counts(table: &IndicatorTable, taxonomy: &Taxonomy, role: Role) -> Result<Vec<u64>, IndicatorError> {
    if role == Role::Catalog {
        return Err(IndicatorError::NotCounted(role));
    }
    taxonomy
        .nodes()
        .iter()
        .map(|n| match n.catalog_code() {
            Some(code) => table.count(role, code),
            None => Ok(0),
        })
        .collect()
}

pub fn branch_occurrences(
    table: &IndicatorTable,
    taxonomy: &Taxonomy,
    parent: Option<NodeId>,
    role: Role,
) -> Result<Rollup, IndicatorError> {
    let own = own_counts(table, taxonomy, role)?;
    let range = taxonomy.subtree_range(parent)?;
    let nodes = taxonomy.nodes();
    let mut value: Vec<u64> = own[range.clone()].to_vec();
    // children come after their parent in document order
    for pos in range.clone().rev() {
        if pos == range.start && parent.is_some() {
            continue;
        }
        if let Some(p) = nodes[pos].parent {
            let ppos = taxonomy.position(p)?;
            value[ppos - range.start] += value[pos - range.start];
        }
    }

    let out: Vec<RollupNode> = range
        .clone()
        .map(|pos| RollupNode {
            node: nodes[pos].id,
            parent: if parent.is_some() && pos == range.start {
                None
            } else {
                nodes[pos].parent
            },
            own: own[pos],
            value: value[pos - range.start],
        })
        .collect();
    let total = out.iter().filter(|n| n.parent.is_none()).map(|n| n.value).sum();
    Ok(Rollup {
        root: parent,
        role,
        total,
        nodes: out,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreemapNode {
    pub node: NodeId,
    pub parent: Option<NodeId>,
    pub level: usize,
    /// Full subtree rollup; equals `own` plus the children's values.
    pub value: u64,
    /// Occurrences of the node's own code plus those of cut descendants.
    pub own: u64,
    pub truncated: bool,
}

/// Depth-limited occurrence tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Treemap {
    pub root: Option<NodeId>,
    pub role: Role,
    pub max_levels: usize,
    pub total: u64,
    pub nodes: Vec<TreemapNode>,
}

pub fn treemap(
    table: &IndicatorTable,
    taxonomy: &Taxonomy,
    parent: Option<NodeId>,
    role: Role,
    max_levels: usize,
) -> Result<Treemap, IndicatorError> {
    let rollup = branch_occurrences(table, taxonomy, parent, role)?;
    let slice = taxonomy.truncate_to_depth(parent, max_levels)?;
    let values: BTreeMap<NodeId, u64> = rollup.nodes.iter().map(|n| (n.node, n.value)).collect();
    let nodes = slice
        .nodes
        .into_iter()
        .map(|n| {
            let own = n
                .attributed
                .iter()
                .map(|code| table.count(role, code))
                .sum::<Result<u64, _>>()?;
            Ok(TreemapNode {
                node: n.id,
                parent: n.parent,
                level: n.level,
                value: values[&n.id],
                own,
                truncated: n.truncated,
            })
        })
        .collect::<Result<Vec<_>, IndicatorError>>()?;
    Ok(Treemap {
        root: parent,
        role,
        max_levels: slice.max_levels,
        total: rollup.total,
        nodes,
    })
}

/// How the two frequencies of a gap are normalised.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapNormalization {
    /// n_found / |docs with a code|, n_risk / |docs with a risk code|.
    #[default]
    Separate,
    /// Both over |C|. Gaps are then never positive.
    Subset,
}

impl FromStr for GapNormalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "separate" => Ok(Self::Separate),
            "subset" => Ok(Self::Subset),
            other => Err(format!("unknown gap normalization {other:?} (expected separate or subset)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub code: String,
    pub n_found: u64,
    pub n_risk: u64,
    pub freq_found: f64,
    pub freq_risk: f64,
    /// freq_risk − freq_found
    pub gap: f64,
}

/// Found diseases ranked by descending gap, ties by code; at most `k` rows.
pub fn gap_ranking(
    table: &IndicatorTable,
    k: usize,
    normalization: GapNormalization,
) -> Result<Vec<GapRow>, IndicatorError> {
    if k == 0 {
        return Err(IndicatorError::InvalidK);
    }
    let (found_den, risk_den) = match normalization {
        GapNormalization::Separate => (table.docs_with_code, table.docs_with_risk),
        GapNormalization::Subset => (table.subset_size, table.subset_size),
    };
    if found_den == 0 || risk_den == 0 {
        return Err(IndicatorError::EmptySubset);
    }
    let mut rows: Vec<GapRow> = table
        .n_found
        .iter()
        .map(|(code, &n_found)| {
            let n_risk = table.n_risk.get(code).copied().unwrap_or(0);
            let freq_found = n_found as f64 / found_den as f64;
            let freq_risk = n_risk as f64 / risk_den as f64;
            GapRow {
                code: code.clone(),
                n_found,
                n_risk,
                freq_found,
                freq_risk,
                gap: freq_risk - freq_found,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.gap.total_cmp(&a.gap).then_with(|| a.code.cmp(&b.code)));
    rows.truncate(k);
    Ok(rows)
}
