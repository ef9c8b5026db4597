//! Response bodies. Each view is a pure function of a generation and a query,
//! so the HTTP handlers and the `export` command serialize the same values.

use std::collections::BTreeSet;

use riskmap_core::indicators::{
    self, BranchShares, GapNormalization, IndicatorError, IndicatorTable, Role,
};
use riskmap_core::ingest::{DocKey, IngestError, SubsetSpec};
use riskmap_core::{NodeId, TaxonomyNode};
use serde::{Deserialize, Serialize};

use crate::colors::ColorKey;
use crate::generation::Generation;

pub const DEFAULT_MAX_LEVELS: usize = 3;
pub const DEFAULT_K: usize = 20;
pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ApiError {
    UnknownBranch(String),
    UnknownCode(String),
    BadParams(String),
}

impl ApiError {
    pub fn kind(&self) -> &'static str {
        match self {
            ApiError::UnknownBranch(_) => "UnknownBranch",
            ApiError::UnknownCode(_) => "UnknownCode",
            ApiError::BadParams(_) => "BadParams",
        }
    }

    pub fn message(&self) -> String {
        match self {
            ApiError::UnknownBranch(b) => format!("no branch with code or node id {b:?}"),
            ApiError::UnknownCode(c) => format!("{c:?} is not a catalog code"),
            ApiError::BadParams(m) => m.clone(),
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl std::error::Error for ApiError {}

impl From<IndicatorError> for ApiError {
    fn from(err: IndicatorError) -> Self {
        match err {
            IndicatorError::UnknownNode(id) => ApiError::UnknownBranch(id.to_string()),
            other => ApiError::BadParams(other.to_string()),
        }
    }
}

impl From<IngestError> for ApiError {
    fn from(err: IngestError) -> Self {
        ApiError::BadParams(err.to_string())
    }
}

/// Query string as received. Every field is optional text; `QuerySpec::parse`
/// validates it.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Comma-separated source names.
    pub sources: Option<String>,
    pub filter: Option<String>,
    /// A code or a numeric node id.
    pub branch: Option<String>,
    pub role: Option<String>,
    pub max_levels: Option<String>,
    pub k: Option<String>,
    pub norm: Option<String>,
    pub code: Option<String>,
    pub cursor: Option<String>,
    pub limit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySpec {
    pub subset: SubsetSpec,
    pub branch: Option<String>,
    pub role: Option<Role>,
    pub max_levels: usize,
    pub k: usize,
    pub norm: GapNormalization,
}

impl Default for QuerySpec {
    fn default() -> Self {
        Self {
            subset: SubsetSpec::all(),
            branch: None,
            role: None,
            max_levels: DEFAULT_MAX_LEVELS,
            k: DEFAULT_K,
            norm: GapNormalization::default(),
        }
    }
}

fn positive(name: &str, value: &Option<String>, default: usize) -> Result<usize, ApiError> {
    match value.as_deref().map(str::trim) {
        None | Some("") => Ok(default),
        Some(text) => match text.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(ApiError::BadParams(format!("{name} must be a positive integer, got {text:?}"))),
        },
    }
}

fn nonblank(value: &Option<String>) -> Option<String> {
    value
        .as_deref()
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
}

impl QuerySpec {
    pub fn parse(params: &Params) -> Result<Self, ApiError> {
        let sources = nonblank(&params.sources).map(|s| {
            s.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect::<BTreeSet<_>>()
        });
        let role = nonblank(&params.role)
            .map(|r| r.parse::<Role>().map_err(ApiError::BadParams))
            .transpose()?;
        let norm = nonblank(&params.norm)
            .map(|n| n.parse::<GapNormalization>().map_err(ApiError::BadParams))
            .transpose()?
            .unwrap_or_default();
        Ok(Self {
            subset: SubsetSpec {
                sources,
                filter: nonblank(&params.filter),
            },
            branch: nonblank(&params.branch),
            role,
            max_levels: positive("max_levels", &params.max_levels, DEFAULT_MAX_LEVELS)?,
            k: positive("k", &params.k, DEFAULT_K)?,
            norm,
        })
    }
}

/// Resolves a branch given as a code or as a numeric node id.
pub fn resolve_branch(generation: &Generation, branch: Option<&str>) -> Result<Option<NodeId>, ApiError> {
    let Some(branch) = branch else {
        return Ok(None);
    };
    let taxonomy = &generation.taxonomy;
    if let Some(node) = taxonomy.by_code(branch) {
        return Ok(Some(node.id));
    }
    match branch.parse::<u64>() {
        Ok(raw) if taxonomy.get(NodeId(raw)).is_some() => Ok(Some(NodeId(raw))),
        _ => Err(ApiError::UnknownBranch(branch.to_string())),
    }
}

fn table(generation: &Generation, spec: &QuerySpec) -> Result<IndicatorTable, ApiError> {
    let subset = generation.repo.select_subset(&spec.subset)?;
    Ok(IndicatorTable::build(&generation.repo, &generation.taxonomy, &subset))
}

/// Fields shared by every node in every response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeRef {
    pub node_id: NodeId,
    pub code: Option<String>,
    pub title: String,
    pub depth: usize,
    pub bfs_ordinal: usize,
    pub color: ColorKey,
}

impl NodeRef {
    pub fn new(generation: &Generation, node: &TaxonomyNode) -> Self {
        Self {
            node_id: node.id,
            code: node.code.clone(),
            title: node.title.clone(),
            depth: node.depth,
            bfs_ordinal: generation.taxonomy.bfs_ordinal(node.id).expect("node of this taxonomy"),
            color: generation.colors.get(node.id),
        }
    }

    fn of(generation: &Generation, id: NodeId) -> Self {
        Self::new(generation, generation.taxonomy.get(id).expect("node of this taxonomy"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaxonomyViewNode {
    #[serde(flatten)]
    pub node: NodeRef,
    pub parent: Option<NodeId>,
    /// Level inside the slice, the top being 0.
    pub level: usize,
    pub truncated: bool,
    /// Catalog codes counted at this node: its own and those of cut descendants.
    pub attributed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaxonomyView {
    pub generation: u64,
    pub branch: Option<NodeRef>,
    pub max_levels: usize,
    /// BFS order.
    pub nodes: Vec<TaxonomyViewNode>,
}

pub fn taxonomy_view(generation: &Generation, spec: &QuerySpec) -> Result<TaxonomyView, ApiError> {
    let branch = resolve_branch(generation, spec.branch.as_deref())?;
    let slice = generation
        .taxonomy
        .truncate_to_depth(branch, spec.max_levels)
        .map_err(|e| ApiError::BadParams(e.to_string()))?;
    let mut nodes: Vec<TaxonomyViewNode> = slice
        .nodes
        .into_iter()
        .map(|n| TaxonomyViewNode {
            node: NodeRef::of(generation, n.id),
            parent: n.parent,
            level: n.level,
            truncated: n.truncated,
            attributed: n.attributed,
        })
        .collect();
    nodes.sort_by_key(|n| n.node.bfs_ordinal);
    Ok(TaxonomyView {
        generation: generation.id,
        branch: branch.map(|b| NodeRef::of(generation, b)),
        max_levels: slice.max_levels,
        nodes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoleShare {
    pub count: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoleSummary {
    pub role: Role,
    pub total: usize,
    pub own_count: usize,
    pub own_share: f64,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharesRow {
    #[serde(flatten)]
    pub node: NodeRef,
    pub catalog: RoleShare,
    pub found: RoleShare,
    pub at_risk: RoleShare,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharesView {
    pub generation: u64,
    pub branch: Option<NodeRef>,
    pub subset_size: usize,
    /// Catalog, found, at risk.
    pub roles: Vec<RoleSummary>,
    /// Children of the branch (roots without one), BFS order.
    pub rows: Vec<SharesRow>,
}

pub fn shares_view(generation: &Generation, spec: &QuerySpec) -> Result<SharesView, ApiError> {
    let branch = resolve_branch(generation, spec.branch.as_deref())?;
    let table = table(generation, spec)?;
    let per_role: Vec<BranchShares> = Role::ALL
        .iter()
        .map(|&role| indicators::branch_share(&table, &generation.taxonomy, branch, role))
        .collect::<Result<_, _>>()?;
    let share = |shares: &BranchShares, i: usize| RoleShare {
        count: shares.rows[i].count,
        share: shares.rows[i].share,
    };
    let mut rows: Vec<SharesRow> = per_role[0]
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| SharesRow {
            node: NodeRef::of(generation, row.node),
            catalog: share(&per_role[0], i),
            found: share(&per_role[1], i),
            at_risk: share(&per_role[2], i),
        })
        .collect();
    rows.sort_by_key(|r| r.node.bfs_ordinal);
    Ok(SharesView {
        generation: generation.id,
        branch: branch.map(|b| NodeRef::of(generation, b)),
        subset_size: table.subset_size,
        roles: per_role
            .iter()
            .map(|s| RoleSummary {
                role: s.role,
                total: s.total,
                own_count: s.own_count,
                own_share: s.own_share,
                empty: s.empty,
            })
            .collect(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OccurrenceNode {
    #[serde(flatten)]
    pub node: NodeRef,
    pub parent: Option<NodeId>,
    pub level: usize,
    pub value: u64,
    pub own: u64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OccurrencesView {
    pub generation: u64,
    pub branch: Option<NodeRef>,
    pub role: Role,
    pub max_levels: usize,
    pub subset_size: usize,
    pub total: u64,
    /// BFS order.
    pub nodes: Vec<OccurrenceNode>,
}

/// Treemap input; the role defaults to `found`.
pub fn occurrences_view(generation: &Generation, spec: &QuerySpec) -> Result<OccurrencesView, ApiError> {
    let role = spec.role.unwrap_or(Role::Found);
    if role == Role::Catalog {
        return Err(ApiError::BadParams("occurrences need role found or at_risk".into()));
    }
    let branch = resolve_branch(generation, spec.branch.as_deref())?;
    let table = table(generation, spec)?;
    let tm = indicators::treemap(&table, &generation.taxonomy, branch, role, spec.max_levels)?;
    let mut nodes: Vec<OccurrenceNode> = tm
        .nodes
        .into_iter()
        .map(|n| OccurrenceNode {
            node: NodeRef::of(generation, n.node),
            parent: n.parent,
            level: n.level,
            value: n.value,
            own: n.own,
            truncated: n.truncated,
        })
        .collect();
    nodes.sort_by_key(|n| n.node.bfs_ordinal);
    Ok(OccurrencesView {
        generation: generation.id,
        branch: branch.map(|b| NodeRef::of(generation, b)),
        role,
        max_levels: tm.max_levels,
        subset_size: table.subset_size,
        total: tm.total,
        nodes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapViewRow {
    #[serde(flatten)]
    pub node: NodeRef,
    pub n_found: u64,
    pub n_risk: u64,
    pub freq_found: f64,
    pub freq_risk: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapView {
    pub generation: u64,
    pub k: usize,
    pub normalization: GapNormalization,
    pub subset_size: usize,
    pub docs_with_code: usize,
    pub docs_with_risk: usize,
    /// A normalizing set is empty; `rows` is then empty too.
    pub empty: bool,
    pub rows: Vec<GapViewRow>,
}

pub fn gap_view(generation: &Generation, spec: &QuerySpec) -> Result<GapView, ApiError> {
    let table = table(generation, spec)?;
    let (rows, empty) = match indicators::gap_ranking(&table, spec.k, spec.norm) {
        Ok(rows) => (rows, false),
        Err(IndicatorError::EmptySubset) => (Vec::new(), true),
        Err(other) => return Err(other.into()),
    };
    let rows = rows
        .into_iter()
        .map(|r| GapViewRow {
            node: NodeRef::new(
                generation,
                generation.taxonomy.by_code(&r.code).expect("counted codes are cataloged"),
            ),
            n_found: r.n_found,
            n_risk: r.n_risk,
            freq_found: r.freq_found,
            freq_risk: r.freq_risk,
            gap: r.gap,
        })
        .collect();
    Ok(GapView {
        generation: generation.id,
        k: spec.k,
        normalization: spec.norm,
        subset_size: table.subset_size,
        docs_with_code: table.docs_with_code,
        docs_with_risk: table.docs_with_risk,
        empty,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DocumentRow {
    pub source: String,
    pub doc_id: String,
    pub title: String,
    pub at_risk: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DocumentsPage {
    pub generation: u64,
    pub disease: NodeRef,
    /// Documents of the subset mentioning the code, over all pages.
    pub total: usize,
    pub limit: usize,
    pub documents: Vec<DocumentRow>,
    /// Pass as `cursor` to get the next page; absent on the last page.
    pub next_cursor: Option<String>,
}

/// Opaque cursor: hex of the JSON pair `[source, doc_id]` of the last row served.
pub fn encode_cursor(key: &DocKey) -> String {
    hex::encode(serde_json::to_vec(&(&key.source, &key.doc_id)).expect("strings serialize"))
}

pub fn decode_cursor(cursor: &str) -> Result<DocKey, ApiError> {
    let bad = || ApiError::BadParams(format!("malformed cursor {cursor:?}"));
    let bytes = hex::decode(cursor).map_err(|_| bad())?;
    let (source, doc_id): (String, String) = serde_json::from_slice(&bytes).map_err(|_| bad())?;
    Ok(DocKey { source, doc_id })
}

pub fn documents_view(generation: &Generation, params: &Params) -> Result<DocumentsPage, ApiError> {
    let spec = QuerySpec::parse(params)?;
    let code = nonblank(&params.code).ok_or_else(|| ApiError::BadParams("code is required".into()))?;
    if !generation.taxonomy.is_cataloged(&code) {
        return Err(ApiError::UnknownCode(code));
    }
    let limit = positive("limit", &params.limit, DEFAULT_PAGE)?.min(MAX_PAGE);
    let after = nonblank(&params.cursor).map(|c| decode_cursor(&c)).transpose()?;

    let subset = generation.repo.select_subset(&spec.subset)?;
    let matching: Vec<&DocKey> = subset
        .keys
        .iter()
        .filter(|k| generation.repo.get(k).is_some_and(|r| r.codes.contains(&code)))
        .collect();
    // keys are sorted, so the page starts right after the cursor
    let start = match &after {
        Some(after) => matching.partition_point(|k| *k <= after),
        None => 0,
    };
    let page = &matching[start..(start + limit).min(matching.len())];
    let documents: Vec<DocumentRow> = page
        .iter()
        .map(|k| DocumentRow {
            source: k.source.clone(),
            doc_id: k.doc_id.clone(),
            title: generation.repo.title(k).unwrap_or_default().to_string(),
            at_risk: generation.repo.get(k).is_some_and(|r| r.risk_codes.contains(&code)),
        })
        .collect();
    let next_cursor = (start + page.len() < matching.len()).then(|| encode_cursor(page.last().expect("non-empty page")));
    Ok(DocumentsPage {
        generation: generation.id,
        disease: NodeRef::new(generation, generation.taxonomy.by_code(&code).expect("cataloged")),
        total: matching.len(),
        limit,
        documents,
        next_cursor,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MetaView {
    pub generation: u64,
    pub documents: usize,
    pub sources: Vec<String>,
    pub filters: Vec<String>,
    pub taxonomy_nodes: usize,
    pub catalog_size: usize,
    pub default_max_levels: usize,
}

/// What the client needs to populate its selectors.
pub fn meta_view(generation: &Generation) -> MetaView {
    MetaView {
        generation: generation.id,
        documents: generation.repo.len(),
        sources: generation.repo.sources().into_iter().map(str::to_string).collect(),
        filters: generation.repo.filters().iter().cloned().collect(),
        taxonomy_nodes: generation.taxonomy.len(),
        catalog_size: generation.taxonomy.coded_diseases(None).map(|s| s.len()).unwrap_or(0),
        default_max_levels: DEFAULT_MAX_LEVELS,
    }
}
