#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::rngs::StdRng;
use rand::SeedableRng;
use riskmap_core::indicators::{self, GapNormalization, IndicatorTable, Role};
use riskmap_core::ingest::{DocExtraction, SubsetSpec};
use riskmap_core::{NodeId, ParseOptions, Processors, RawRow, Repository, Taxonomy};
use riskmap_service::api::{router, AppState};
use riskmap_service::generation::Generation;
use riskmap_testkit::Scenario;
use serde_json::{json, Value};
use tower::ServiceExt;

/// Three chapters, eight catalog codes.
///
/// ```text
/// 1  Diseases of the respiratory system
/// 2    Lung infections
/// 3      CA40 Pneumonia
/// 4      CA20 Bronchitis
/// 5    CA23 Asthma
/// 6  Endocrine, nutritional or metabolic diseases
/// 7    5B81 Obesity
/// 8    5A10 Diabetes mellitus
/// 9      5A11 Type 2 diabetes mellitus
/// 10 Diseases of the circulatory system
/// 11   BA00 Hypertensive diseases
/// 12     BA00.0 Essential hypertension
/// ```
pub fn fixture_taxonomy() -> Taxonomy {
    Taxonomy::parse(
        [
            RawRow::new(1, None, "Diseases of the respiratory system"),
            RawRow::new(2, None, "- Lung infections"),
            RawRow::new(3, Some("CA40"), "- - Pneumonia"),
            RawRow::new(4, Some("CA20"), "- - Bronchitis"),
            RawRow::new(5, Some("CA23"), "- Asthma"),
            RawRow::new(6, None, "Endocrine, nutritional or metabolic diseases"),
            RawRow::new(7, Some("5B81"), "- Obesity"),
            RawRow::new(8, Some("5A10"), "- Diabetes mellitus"),
            RawRow::new(9, Some("5A11"), "- - Type 2 diabetes mellitus"),
            RawRow::new(10, None, "Diseases of the circulatory system"),
            RawRow::new(11, Some("BA00"), "- Hypertensive diseases"),
            RawRow::new(12, Some("BA00.0"), "- - Essential hypertension"),
        ],
        &ParseOptions::default(),
    )
    .unwrap()
}

/// Ten documents: (doc_id, source, codes, risk codes, covid flag).
pub const FIXTURE_DOCS: [(&str, &str, &[&str], &[&str], bool); 10] = [
    ("d01", "pmc", &["CA40", "5B81"], &["5B81"], true),
    ("d02", "pmc", &["CA40"], &[], true),
    ("d03", "pmc", &["5A11", "BA00"], &["5A11", "BA00"], true),
    ("d04", "medline", &["5B81", "5A11"], &["5B81", "5A11"], true),
    ("d05", "medline", &["CA23"], &[], false),
    ("d06", "medline", &[], &[], false),
    ("d07", "who", &["CA40", "BA00.0"], &[], true),
    ("d08", "who", &["5B81"], &[], false),
    ("d09", "who", &[], &[], true),
    ("d10", "pmc", &["5A10"], &[], false),
];

pub fn fixture_repository() -> Repository {
    let mut repo = Repository::new();
    for (id, source, codes, risk, covid) in FIXTURE_DOCS {
        let set = |c: &[&str]| c.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        repo.insert(
            DocExtraction {
                source: source.into(),
                doc_id: id.into(),
                codes: set(codes),
                risk_codes: set(risk),
                filter_flags: BTreeMap::from([("covid".to_string(), covid)]),
            },
            format!("Document {id}"),
        );
    }
    repo
}

pub fn fixture_generation() -> Generation {
    Generation::new(0, fixture_taxonomy(), fixture_repository())
}

pub fn pneumonia_generation() -> Generation {
    let taxonomy = Taxonomy::parse(
        [
            RawRow::new(6856, None, "Diseases of the respiratory system"),
            RawRow::new(7002, None, "- Lung infections"),
            RawRow::new(7003, Some("CA40"), "- - Pneumonia"),
        ],
        &ParseOptions::default(),
    )
    .unwrap();
    Generation::new(0, taxonomy, Repository::new())
}

/// A random classification and corpus pushed through the real extraction.
pub fn scenario_generation(seed: u64, nodes: usize, docs: usize) -> (Scenario, Generation) {
    let mut rng = StdRng::seed_from_u64(seed);
    let scenario = Scenario::random(&mut rng, nodes, docs);
    let taxonomy = Taxonomy::parse(scenario.rows(), &ParseOptions::default()).unwrap();
    let processors = Processors::build(&taxonomy, &scenario.sources()).unwrap();
    let mut repo = Repository::new();
    repo.ingest_batch(scenario.docs.clone(), &processors);
    (scenario, Generation::new(0, taxonomy, repo))
}

pub fn app(generation: Generation) -> Router {
    router(AppState::new(generation))
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let response = app
        .clone()
        .oneshot(Request::builder().uri(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

pub async fn get_ok(app: &Router, uri: &str) -> Value {
    let (status, body) = get(app, uri).await;
    assert_eq!(status, StatusCode::OK, "{uri}: {body}");
    body
}

/// Every response equals a direct computation on the same snapshot.
pub async fn assert_fidelity(seed: u64) {
    {
        let (scenario, generation) = scenario_generation(seed, 60, 80);
        let tree = &scenario.tree;
        let ids: Vec<NodeId> = (0..tree.len()).step_by(7).map(|i| tree.id(i)).collect();
        let taxonomy = generation.taxonomy.clone();
        let repo = generation.repo.clone();
        let app = app(generation);

        for spec in [
            SubsetSpec::all(),
            SubsetSpec { sources: Some(["alpha".to_string(), "gamma".to_string()].into()), filter: None },
            SubsetSpec { sources: None, filter: Some("covid".into()) },
        ] {
            let subset = repo.select_subset(&spec).unwrap();
            let table = IndicatorTable::build(&repo, &taxonomy, &subset);
            let mut query = String::new();
            if let Some(s) = &spec.sources {
                query.push_str(&format!("&sources={}", s.iter().cloned().collect::<Vec<_>>().join(",")));
            }
            if let Some(f) = &spec.filter {
                query.push_str(&format!("&filter={f}"));
            }

            for branch in std::iter::once(None).chain(ids.iter().map(|&i| Some(i))) {
                let b = branch.map(|id| format!("&branch={}", id.0)).unwrap_or_default();

                let body = get_ok(&app, &format!("/indicators/shares?max_levels=3{query}{b}")).await;
                for (r, role) in Role::ALL.iter().enumerate() {
                    let direct = indicators::branch_share(&table, &taxonomy, branch, *role).unwrap();
                    assert_eq!(body["roles"][r]["total"], direct.total);
                    assert_eq!(body["roles"][r]["own_share"], direct.own_share);
                    assert_eq!(body["roles"][r]["empty"], direct.empty);
                    let got: Vec<(u64, u64, f64)> = body["rows"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|row| {
                            (
                                row["node_id"].as_u64().unwrap(),
                                row[role.as_str()]["count"].as_u64().unwrap(),
                                row[role.as_str()]["share"].as_f64().unwrap(),
                            )
                        })
                        .collect();
                    let want: Vec<(u64, u64, f64)> =
                        direct.rows.iter().map(|row| (row.node.0, row.count as u64, row.share)).collect();
                    assert_eq!(got, want, "seed {seed} role {role}");
                }

                for role in [Role::Found, Role::AtRisk] {
                    for levels in [1, 3] {
                        let uri = format!("/indicators/occurrences?role={role}&max_levels={levels}{query}{b}");
                        let body = get_ok(&app, &uri).await;
                        let direct = indicators::treemap(&table, &taxonomy, branch, role, levels).unwrap();
                        assert_eq!(body["total"], direct.total);
                        let mut got: Vec<Value> = body["nodes"]
                            .as_array()
                            .unwrap()
                            .iter()
                            .map(|n| json!([n["node_id"], n["parent"], n["level"], n["value"], n["own"], n["truncated"]]))
                            .collect();
                        let mut want: Vec<Value> = direct
                            .nodes
                            .iter()
                            .map(|n| json!([n.node, n.parent, n.level, n.value, n.own, n.truncated]))
                            .collect();
                        got.sort_by_key(|v| v[0].as_u64());
                        want.sort_by_key(|v| v[0].as_u64());
                        assert_eq!(got, want, "{uri}");
                    }
                }

                let body = get_ok(&app, &format!("/taxonomy?max_levels=2{b}")).await;
                let slice = taxonomy.truncate_to_depth(branch, 2).unwrap();
                let mut got: Vec<Value> = body["nodes"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|n| json!([n["node_id"], n["parent"], n["level"], n["attributed"], n["truncated"]]))
                    .collect();
                let mut want: Vec<Value> = slice
                    .nodes
                    .iter()
                    .map(|n| json!([n.id, n.parent, n.level, n.attributed, n.truncated]))
                    .collect();
                let ordinals: Vec<u64> = body["nodes"].as_array().unwrap().iter().map(|n| n["bfs_ordinal"].as_u64().unwrap()).collect();
                assert!(ordinals.windows(2).all(|w| w[0] < w[1]), "BFS order");
                got.sort_by_key(|v| v[0].as_u64());
                want.sort_by_key(|v| v[0].as_u64());
                assert_eq!(got, want);
            }

            let body = get_ok(&app, &format!("/indicators/gap?k=1000{query}")).await;
            match indicators::gap_ranking(&table, 1000, GapNormalization::Separate) {
                Ok(rows) => {
                    let got: Vec<(String, f64)> = body["rows"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|r| (r["code"].as_str().unwrap().to_string(), r["gap"].as_f64().unwrap()))
                        .collect();
                    let want: Vec<(String, f64)> = rows.iter().map(|r| (r.code.clone(), r.gap)).collect();
                    assert_eq!(got, want);
                }
                Err(_) => assert_eq!(body["empty"], true),
            }

            for code in taxonomy.coded_diseases(None).unwrap() {
                let body = get_ok(&app, &format!("/documents?code={code}&limit=1000{query}")).await;
                let n_found = table.count(Role::Found, &code).unwrap();
                assert_eq!(body["total"], n_found);
                assert_eq!(body["documents"].as_array().unwrap().len() as u64, n_found);
                let at_risk = body["documents"].as_array().unwrap().iter().filter(|d| d["at_risk"] == true).count() as u64;
                assert_eq!(at_risk, table.count(Role::AtRisk, &code).unwrap());
            }
        }
    }
}

