mod common;

use std::collections::BTreeSet;

use axum::http::StatusCode;
use common::*;
use riskmap_service::api::AppState;
use riskmap_service::generation::Generation;
use riskmap_service::views::{self, Params, QuerySpec};
use serde_json::{json, Value};

#[tokio::test]
async fn taxonomy_of_the_pneumonia_rows() {
    let app = app(pneumonia_generation());
    let body = get_ok(&app, "/taxonomy").await;
    let nodes = body["nodes"].as_array().unwrap();
    assert_eq!(nodes.len(), 3);
    assert_eq!(nodes[2]["code"], "CA40");
    assert_eq!(nodes[2]["title"], "Pneumonia");
    assert_eq!(nodes[2]["depth"], 2);
    assert_eq!(nodes[2]["parent"], 7002);
    assert_eq!(body["max_levels"], 3);

    let body = get_ok(&app, "/taxonomy?max_levels=1").await;
    let nodes = body["nodes"].as_array().unwrap();
    assert_eq!(nodes.len(), 1);
    assert_eq!(nodes[0]["node_id"], 6856);
    assert_eq!(nodes[0]["truncated"], true);
    assert_eq!(nodes[0]["attributed"], json!(["CA40"]));

    let body = get_ok(&app, "/taxonomy?branch=7002").await;
    assert_eq!(body["branch"]["title"], "Lung infections");
    assert_eq!(body["nodes"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn errors_carry_kind_and_status() {
    let app = app(fixture_generation());
    for (uri, status, kind) in [
        ("/taxonomy?branch=XX99", StatusCode::NOT_FOUND, "UnknownBranch"),
        ("/taxonomy?branch=999", StatusCode::NOT_FOUND, "UnknownBranch"),
        ("/taxonomy?max_levels=0", StatusCode::BAD_REQUEST, "BadParams"),
        ("/taxonomy?max_levels=two", StatusCode::BAD_REQUEST, "BadParams"),
        ("/taxonomy?depth=2", StatusCode::BAD_REQUEST, "BadParams"),
        ("/indicators/shares?filter=flu", StatusCode::BAD_REQUEST, "BadParams"),
        ("/indicators/shares?branch=nope", StatusCode::NOT_FOUND, "UnknownBranch"),
        ("/indicators/occurrences?role=catalog", StatusCode::BAD_REQUEST, "BadParams"),
        ("/indicators/occurrences?role=sick", StatusCode::BAD_REQUEST, "BadParams"),
        ("/indicators/gap?k=0", StatusCode::BAD_REQUEST, "BadParams"),
        ("/indicators/gap?norm=joint", StatusCode::BAD_REQUEST, "BadParams"),
        ("/documents", StatusCode::BAD_REQUEST, "BadParams"),
        ("/documents?code=ZZ00", StatusCode::NOT_FOUND, "UnknownCode"),
        ("/documents?code=CA40&cursor=zz", StatusCode::BAD_REQUEST, "BadParams"),
        ("/documents?code=CA40&limit=0", StatusCode::BAD_REQUEST, "BadParams"),
    ] {
        let (got, body) = get(&app, uri).await;
        assert_eq!(got, status, "{uri}: {body}");
        assert_eq!(body["error"], kind, "{uri}");
        assert!(body["message"].is_string());
    }
}

#[tokio::test]
async fn fixture_shares_side_by_side() {
    let app = app(fixture_generation());
    let body = get_ok(&app, "/indicators/shares").await;
    assert_eq!(body["subset_size"], 10);
    let rows = body["rows"].as_array().unwrap();
    let titles: Vec<&str> = rows.iter().map(|r| r["title"].as_str().unwrap()).collect();
    assert_eq!(
        titles,
        [
            "Diseases of the respiratory system",
            "Endocrine, nutritional or metabolic diseases",
            "Diseases of the circulatory system"
        ]
    );
    let counts = |role: &str| rows.iter().map(|r| r[role]["count"].as_u64().unwrap()).collect::<Vec<_>>();
    assert_eq!(counts("catalog"), [3, 3, 2]);
    assert_eq!(counts("found"), [2, 3, 2]);
    assert_eq!(counts("at_risk"), [0, 2, 1]);
    assert_eq!(rows[1]["at_risk"]["share"], 2.0 / 3.0);
    let totals: Vec<u64> = body["roles"].as_array().unwrap().iter().map(|r| r["total"].as_u64().unwrap()).collect();
    assert_eq!(totals, [8, 7, 3]);

    // coded branch: its own code takes a share
    let body = get_ok(&app, "/indicators/shares?branch=BA00").await;
    assert_eq!(body["roles"][0]["own_share"], 0.5);
    assert_eq!(body["rows"][0]["catalog"]["share"], 0.5);

    // nothing at risk under respiratory
    let body = get_ok(&app, "/indicators/shares?branch=1").await;
    assert_eq!(body["roles"][2]["empty"], true);
    assert!(body["rows"].as_array().unwrap().iter().all(|r| r["at_risk"]["share"] == 0.0));
}

#[tokio::test]
async fn fixture_occurrences_and_gap() {
    let app = app(fixture_generation());
    let body = get_ok(&app, "/indicators/occurrences?role=found&max_levels=2").await;
    let value = |title: &str| {
        body["nodes"]
            .as_array()
            .unwrap()
            .iter()
            .find(|n| n["title"] == title)
            .map(|n| (n["value"].as_u64().unwrap(), n["own"].as_u64().unwrap()))
    };
    assert_eq!(body["total"], 12);
    assert_eq!(value("Diseases of the respiratory system"), Some((4, 0)));
    assert_eq!(value("Lung infections"), Some((3, 3)));
    assert_eq!(value("Diabetes mellitus"), Some((3, 3)));
    assert_eq!(value("Hypertensive diseases"), Some((2, 2)));
    assert_eq!(value("Pneumonia"), None);

    let body = get_ok(&app, "/indicators/occurrences?role=at_risk&sources=nowhere").await;
    assert_eq!(body["subset_size"], 0);
    assert_eq!(body["total"], 0);
    assert!(body["nodes"].as_array().unwrap().iter().all(|n| n["value"] == 0));

    let body = get_ok(&app, "/indicators/gap?k=3").await;
    let codes: Vec<&str> = body["rows"].as_array().unwrap().iter().map(|r| r["code"].as_str().unwrap()).collect();
    assert_eq!(codes, ["5A11", "5B81", "BA00"]);
    assert_eq!(body["docs_with_code"], 8);
    assert_eq!(body["docs_with_risk"], 3);

    let body = get_ok(&app, "/indicators/gap?k=100").await;
    assert_eq!(body["rows"].as_array().unwrap().len(), 7);

    let body = get_ok(&app, "/indicators/gap?sources=who&filter=covid").await;
    assert_eq!(body["empty"], true);
    assert_eq!(body["rows"], json!([]));
}

#[tokio::test]
async fn documents_traceback_and_pagination() {
    let app = app(fixture_generation());
    let body = get_ok(&app, "/documents?code=5B81").await;
    let rows: Vec<(String, bool)> = body["documents"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| (d["doc_id"].as_str().unwrap().to_string(), d["at_risk"].as_bool().unwrap()))
        .collect();
    assert_eq!(rows, [("d04".into(), true), ("d01".into(), true), ("d08".into(), false)]);
    assert_eq!(body["total"], 3);
    assert_eq!(body["documents"][1]["title"], "Document d01");
    assert!(body["next_cursor"].is_null());

    let body = get_ok(&app, "/documents?code=CA20").await;
    assert_eq!(body["total"], 0);
    assert_eq!(body["documents"], json!([]));

    let mut seen = Vec::new();
    let mut uri = "/documents?code=CA40&limit=1".to_string();
    loop {
        let page = get_ok(&app, &uri).await;
        assert_eq!(page["total"], 3);
        seen.extend(page["documents"].as_array().unwrap().iter().map(|d| d["doc_id"].clone()));
        match page["next_cursor"].as_str() {
            Some(c) => uri = format!("/documents?code=CA40&limit=1&cursor={c}"),
            None => break,
        }
    }
    assert_eq!(seen, [json!("d01"), json!("d02"), json!("d07")]);

    let body = get_ok(&app, "/documents?code=CA40&sources=pmc,%20who&filter=covid").await;
    assert_eq!(body["total"], 3);
    let body = get_ok(&app, "/documents?code=CA40&sources=medline").await;
    assert_eq!(body["total"], 0);
}

fn node_colors(value: &Value, out: &mut Vec<(u64, Value)>) {
    match value {
        Value::Object(map) => {
            if let (Some(id), Some(color)) = (map.get("node_id"), map.get("color")) {
                out.push((id.as_u64().unwrap(), color.clone()));
            }
            map.values().for_each(|v| node_colors(v, out));
        }
        Value::Array(items) => items.iter().for_each(|v| node_colors(v, out)),
        _ => {}
    }
}

#[tokio::test]
async fn colors_agree_across_endpoints_and_reloads() {
    let (_, generation) = scenario_generation(11, 80, 60);
    let again = scenario_generation(11, 80, 60).1;
    let app = app(generation);
    let app2 = common::app(again);
    let mut colors = Vec::new();
    for uri in [
        "/taxonomy?max_levels=10",
        "/indicators/shares",
        "/indicators/occurrences?role=found&max_levels=10",
        "/indicators/occurrences?role=at_risk",
        "/indicators/gap?k=50",
    ] {
        node_colors(&get_ok(&app, uri).await, &mut colors);
        node_colors(&get_ok(&app2, uri).await, &mut colors);
    }
    let mut by_node = std::collections::BTreeMap::new();
    for (id, color) in colors {
        let first = by_node.entry(id).or_insert_with(|| color.clone());
        assert_eq!(*first, color, "node {id}");
    }
    let distinct: BTreeSet<String> = by_node.values().map(|c| c.to_string()).collect();
    assert_eq!(distinct.len(), by_node.len(), "keys are unique per node");
}

/// Every response equals a direct computation on the same snapshot.
#[tokio::test]
async fn responses_match_in_process_computation() {
    for seed in 0..6u64 {
        assert_fidelity(seed).await;
    }
}

#[tokio::test]
async fn export_views_equal_endpoint_bodies() {
    let generation = fixture_generation();
    let spec = QuerySpec::parse(&Params { branch: Some("6".into()), ..Params::default() }).unwrap();
    let view = serde_json::to_value(views::shares_view(&generation, &spec).unwrap()).unwrap();
    let app = app(generation);
    assert_eq!(get_ok(&app, "/indicators/shares?branch=6").await, view);
}

#[tokio::test]
async fn replaced_generation_serves_new_requests() {
    let state = AppState::new(fixture_generation());
    let app = riskmap_service::api::router(state.clone());
    let held = state.generation();
    assert_eq!(get_ok(&app, "/meta").await["documents"], 10);
    state.replace(Generation::new(1, fixture_taxonomy(), riskmap_core::Repository::new()));
    let meta = get_ok(&app, "/meta").await;
    assert_eq!(meta["generation"], 1);
    assert_eq!(meta["documents"], 0);
    // a request that started on the old generation still sees it whole
    assert_eq!(held.repo.len(), 10);
}
