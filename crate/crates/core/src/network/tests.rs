use serde_json::{json, Value};

use super::*;

fn base() -> Value {
    json!({
        "arrivals": {
            "base_rate": 60.0,
            "clandestine_probability": 0.01,
            "soft_fraction": 0.5,
            "commodity_mix": {"general": 1.0}
        },
        "nodes": [
            {"id": 1, "kind": "Source"},
            {"id": 2, "kind": "ProbRouter"},
            {"id": 3, "kind": "ServiceShed", "sensor": "PMMW", "servers": 1,
             "service_time": {"family": "Constant", "value": 1.0}},
            {"id": 4, "kind": "ServiceShed", "sensor": "HBD", "servers": 1,
             "service_time": {"family": "Constant", "value": 1.0}},
            {"id": 9, "kind": "Sink"}
        ],
        "edges": [
            {"from": 1, "to": 2},
            {"from": 2, "to": 3, "probability": 0.5},
            {"from": 2, "to": 4, "probability": 0.5},
            {"from": 3, "to": 9},
            {"from": 4, "to": 9}
        ],
        "drm": {"default": {"tp": 0.5, "fp": 0.0}}
    })
}

fn compile(v: Value) -> Result<Model, ScenarioError> {
    Scenario::from_json(&v.to_string())?.validate()
}

fn violations(v: Value) -> Vec<String> {
    match compile(v) {
        Err(e) => e.violations().iter().map(|v| v.to_string()).collect(),
        Ok(_) => panic!("expected validation failure"),
    }
}

#[test]
fn shipped_scenario_validates() {
    let model = Model::calais_default();
    assert_eq!(model.scenario.name, "calais-default");
    assert!(model.graph.berth.is_some());
    assert_eq!(model.mix.clandestine_probability, 0.003);
}

#[test]
fn base_fixture_validates() {
    let m = compile(base()).unwrap();
    assert_eq!(m.graph.entries.len(), 1);
    assert_eq!(m.graph.shed_indices().count(), 2);
}

#[test]
fn router_probabilities_must_sum_to_one() {
    let mut v = base();
    v["edges"][2]["probability"] = json!(0.6);
    let errs = violations(v);
    assert!(
        errs.iter().any(|e| e.starts_with("node 2:") && e.contains("sum to 1")),
        "{errs:?}"
    );
}

#[test]
fn jump_label_needs_a_target() {
    let mut v = base();
    v["nodes"][1] = json!({"id": 2, "kind": "Jump", "target": "nowhere"});
    v["edges"] = json!([{"from": 1, "to": 2}, {"from": 3, "to": 9}, {"from": 4, "to": 9}]);
    let errs = violations(v);
    assert!(errs.iter().any(|e| e.contains("`nowhere` has no target")), "{errs:?}");
}

#[test]
fn duplicate_jump_labels_are_rejected() {
    let mut v = base();
    v["jumps"] = json!([{"label": "a", "target": 3}, {"label": "a", "target": 4}]);
    let errs = violations(v);
    assert!(errs.iter().any(|e| e.contains("more than one target")), "{errs:?}");
}

#[test]
fn side_filters_must_cover_both_sides() {
    let mut v = base();
    v["edges"][1] = json!({"from": 2, "to": 3, "probability": 1.0, "side": "Soft"});
    v["edges"][2] = json!({"from": 2, "to": 4, "probability": 1.0, "side": "Soft"});
    let errs = violations(v);
    assert!(
        errs.iter()
            .any(|e| e.starts_with("node 2:") && e.contains("hard/clear")),
        "{errs:?}"
    );
}

#[test]
fn cycles_outside_the_berth_are_rejected() {
    let mut v = base();
    v["edges"][3] = json!({"from": 3, "to": 2});
    let errs = violations(v);
    assert!(errs.iter().any(|e| e.contains("cycle")), "{errs:?}");
}

#[test]
fn cycles_through_the_berth_are_allowed() {
    let mut v = base();
    v["nodes"]
        .as_array_mut()
        .unwrap()
        .push(json!({"id": 5, "kind": "Berth"}));
    v["edges"][3] = json!({"from": 3, "to": 5});
    v["edges"]
        .as_array_mut()
        .unwrap()
        .push(json!({"from": 5, "to": 2, "probability": 0.5}));
    v["edges"]
        .as_array_mut()
        .unwrap()
        .push(json!({"from": 5, "to": 9, "probability": 0.5}));
    v["berth"] = json!({
        "mode": "Recheck",
        "dwell_time": {"family": "Constant", "value": 5.0},
        "squads": [{"check_interval": {"family": "Constant", "value": 1.0}}]
    });
    compile(v).unwrap();
}

#[test]
fn berth_node_needs_a_berth_section() {
    let mut v = base();
    v["nodes"]
        .as_array_mut()
        .unwrap()
        .push(json!({"id": 5, "kind": "Berth"}));
    v["edges"][3] = json!({"from": 3, "to": 5});
    v["edges"].as_array_mut().unwrap().push(json!({"from": 5, "to": 9}));
    let errs = violations(v);
    assert!(errs.iter().any(|e| e.contains("no `berth` section")), "{errs:?}");
}

#[test]
fn structural_rules_are_all_reported() {
    let mut v = base();
    let nodes = v["nodes"].as_array_mut().unwrap();
    nodes.push(json!({"id": 3, "kind": "Sink"}));
    nodes.push(json!({"id": 7, "kind": "Sink"}));
    v["edges"].as_array_mut().unwrap().push(json!({"from": 9, "to": 1}));
    let errs = violations(v);
    assert!(errs.iter().any(|e| e.contains("duplicate node id")), "{errs:?}");
    assert!(
        errs.iter().any(|e| e.contains("Sink nodes cannot have outgoing")),
        "{errs:?}"
    );
    assert!(
        errs.iter().any(|e| e.contains("Source nodes cannot have inbound")),
        "{errs:?}"
    );
}

#[test]
fn unreachable_nodes_are_reported() {
    let mut v = base();
    v["nodes"].as_array_mut().unwrap().push(json!({
        "id": 8, "kind": "ServiceShed", "servers": 1,
        "service_time": {"family": "Constant", "value": 1.0}
    }));
    v["edges"].as_array_mut().unwrap().push(json!({"from": 8, "to": 9}));
    let errs = violations(v);
    assert!(
        errs.iter().any(|e| e == "node 8: not reachable from any Source"),
        "{errs:?}"
    );
}

#[test]
fn shortest_queue_candidates_must_be_sheds() {
    let mut v = base();
    v["nodes"][1] = json!({"id": 2, "kind": "ShortestQueueRouter"});
    v["edges"].as_array_mut().unwrap().push(json!({"from": 2, "to": 9}));
    let errs = violations(v);
    assert!(errs.iter().any(|e| e.contains("not a ServiceShed")), "{errs:?}");
}

#[test]
fn arrival_and_run_settings_are_checked() {
    let mut v = base();
    v["arrivals"]["commodity_mix"] = json!({"general": 0.5, "wood": 0.4});
    v["arrivals"]["soft_fraction"] = json!(1.5);
    v["arrivals"]["profile"] = json!([1.0, 2.0]);
    v["run"] = json!({"confidence": 1.0});
    let errs = violations(v);
    for needle in ["commodity_mix sums", "soft_fraction", "168 hourly", "confidence"] {
        assert!(errs.iter().any(|e| e.contains(needle)), "{needle}: {errs:?}");
    }
}

#[test]
fn drm_problems_surface_as_violations() {
    let mut v = base();
    v["drm"]["entries"] = json!([
        {"level": 2, "sensor": "PMMW", "commodity": "general", "tp": 0.8, "fp": 0.1},
        {"level": 2, "sensor": "PMMW", "commodity": "general", "tp": 0.7, "fp": 0.1},
        {"level": 3, "sensor": "HBD", "commodity": "general", "tp": 1.2, "fp": 0.1}
    ]);
    let errs = violations(v);
    assert!(errs.iter().any(|e| e.contains("duplicates")), "{errs:?}");
    assert!(
        errs.iter().any(|e| e.contains("requires field `containment`")),
        "{errs:?}"
    );
    assert!(errs.iter().any(|e| e.contains("outside [0,1]")), "{errs:?}");
}

#[test]
fn station_profiles_follow_the_drm() {
    let mut v = base();
    v["arrivals"]["commodity_mix"] = json!({"general": 0.5, "wood": 0.5});
    v["drm"]["entries"] = json!([
        {"level": 2, "sensor": "PMMW", "commodity": "wood", "tp": 0.3, "fp": 0.6},
        {"level": 3, "sensor": "PMMW", "commodity": "general", "containment": "hard", "tp": 0.9, "fp": 0.0}
    ]);
    let m = compile(v).unwrap();
    let shed = m.graph.shed(m.graph.index_of(3).unwrap()).unwrap();
    let st = shed.screening.as_ref().unwrap();
    // commodities are ordered by label: general = 0, wood = 1
    assert_eq!(st.profile(Side::Soft, 0), DetectionProfile::new(0.5, 0.0));
    assert_eq!(st.profile(Side::Hard, 0), DetectionProfile::new(0.9, 0.0));
    assert_eq!(st.profile(Side::Soft, 1), DetectionProfile::new(0.3, 0.6));
    assert_eq!(st.profile(Side::Hard, 1), DetectionProfile::new(0.3, 0.6));
}

#[test]
fn source_shares_are_normalised() {
    let mut v = base();
    v["nodes"][0] = json!({"id": 1, "kind": "Source", "share": 3.0});
    v["nodes"]
        .as_array_mut()
        .unwrap()
        .push(json!({"id": 6, "kind": "Source", "share": 1.0}));
    v["edges"].as_array_mut().unwrap().push(json!({"from": 6, "to": 3}));
    let m = compile(v).unwrap();
    let shares: Vec<f64> = m.source_shares().into_iter().map(|(_, s)| s).collect();
    assert_eq!(shares, vec![0.75, 0.25]);
}

#[test]
fn find_cycle_reports_a_closed_walk() {
    let mut v = base();
    v["edges"][3] = json!({"from": 3, "to": 2});
    let s = Scenario::from_json(&v.to_string()).unwrap();
    // bypass validation to inspect the raw graph
    let err = s.validate().unwrap_err();
    let msg = err
        .violations()
        .iter()
        .find(|v| v.rule.contains("cycle"))
        .unwrap()
        .rule
        .clone();
    let ids: Vec<&str> = msg
        .trim_start_matches("cycle outside the Berth: ")
        .split(" -> ")
        .collect();
    assert_eq!(ids.first(), ids.last());
    assert!(ids.len() >= 3);
}
