use std::collections::BTreeSet;

use super::*;
use crate::perception::{MockPerceiver, Perceiver};

const GOLDEN: &str = include_str!("../../../../fixtures/golden/world.json");

fn golden() -> WorldSpec {
    load_world(GOLDEN).expect("golden world loads")
}

fn center_of(world: &World, content: &str) -> AtomicAction {
    let r = world.render();
    let e = r.elements.iter().find(|e| e.content == content).unwrap_or_else(|| panic!("{content} not on screen"));
    AtomicAction::Tap { x: e.center.0 as i32, y: e.center.1 as i32 }
}

fn open(name: &str) -> AtomicAction {
    AtomicAction::OpenApp { name: name.into() }
}

#[test]
fn golden_world_has_three_apps() {
    let spec = golden();
    assert_eq!(spec.apps.len(), 3);
    assert_eq!(spec.app("walmart").unwrap().screens.len(), 4);
}

#[test]
fn dangling_rule_target_is_reported() {
    let mut doc: serde_json::Value = serde_json::from_str(GOLDEN).unwrap();
    doc["apps"][0]["rules"][0]["to"] = "checkout_v2".into();
    assert_eq!(load_world(&doc.to_string()), Err(WorldError::DanglingScreen("Walmart/checkout_v2".into())));
}

#[test]
fn out_of_screen_bounds_are_a_schema_error() {
    let mut doc: serde_json::Value = serde_json::from_str(GOLDEN).unwrap();
    doc["apps"][1]["screens"]["home"]["elements"][0]["bounds"] = serde_json::json!([0, 0, 400, 10]);
    assert!(matches!(load_world(&doc.to_string()), Err(WorldError::SchemaError { .. })));
}

#[test]
fn tap_inside_search_opens_search_and_outside_changes_nothing() {
    let mut w = World::new(golden(), FaultPolicy::none());
    w.step(&open("Walmart"));
    assert_eq!(w.location().screen, "home");
    w.step(&AtomicAction::Tap { x: 355, y: 770 });
    assert_eq!(w.location().screen, "home");
    let tap = center_of(&w, "Search Walmart");
    w.step(&tap);
    assert_eq!(w.location(), &Location { app: "Walmart".into(), screen: "search".into() });
}

#[test]
fn walmart_topology_includes_the_close_edge_back_to_the_product() {
    let mut w = World::new(golden(), FaultPolicy::none());
    w.step(&open("Walmart"));
    w.step(&center_of(&w, "Search Walmart"));
    w.step(&AtomicAction::Type { text: "headphones".into() });
    w.step(&AtomicAction::Enter);
    w.step(&center_of(&w, "Sony Headphones $59"));
    assert_eq!(w.location().screen, "product");
    w.step(&center_of(&w, "Add to cart"));
    w.step(&center_of(&w, "Cart (1)"));
    assert_eq!(w.location().screen, "cart");
    w.step(&center_of(&w, "X"));
    assert_eq!(w.location().screen, "product");
    let screens: BTreeSet<_> = w.facts().visited.into_iter().filter(|(a, _)| a == "Walmart").map(|(_, s)| s).collect();
    assert_eq!(screens.len(), 4);
}

#[test]
fn home_switch_and_back_semantics() {
    let mut w = World::new(golden(), FaultPolicy::none());
    w.step(&open("Maps"));
    w.step(&center_of(&w, "Search here"));
    w.step(&AtomicAction::Home);
    assert_eq!(w.foreground_app(), LAUNCHER);
    w.step(&open("Notes"));
    w.step(&AtomicAction::SwitchApp);
    assert_eq!(w.location(), &Location { app: "Maps".into(), screen: "search".into() });
    w.step(&AtomicAction::Back);
    assert_eq!(w.location().screen, "home");
    w.step(&AtomicAction::Back);
    assert_eq!(w.foreground_app(), LAUNCHER);
    w.step(&AtomicAction::Wait);
    assert_eq!(w.steps(), 8);
}

#[test]
fn launcher_icons_open_every_app() {
    let spec = golden();
    for app in &spec.apps {
        let mut w = World::new(spec.clone(), FaultPolicy::none());
        w.step(&center_of(&w, &app.name));
        assert_eq!(w.location(), &Location { app: app.name.clone(), screen: app.initial.clone() });
    }
}

fn tap_run(seed: u64) -> Vec<usize> {
    let mut w = World::new(golden(), FaultPolicy { seed, p_noop: 0.3, p_misroute: 0.0 });
    for i in 0..100 {
        w.step(&AtomicAction::Tap { x: i * 7 % 360, y: i * 13 % 780 });
    }
    w.faults().iter().map(|f| f.step).collect()
}

#[test]
fn seeded_noop_faults_repeat_exactly() {
    let a = tap_run(42);
    assert_eq!(a, tap_run(42));
    assert!(!a.is_empty() && a.len() < 100);
    assert_ne!(a, tap_run(43));
}

#[test]
fn zero_probabilities_never_inject() {
    let mut w = World::new(golden(), FaultPolicy { seed: 9, p_noop: 0.0, p_misroute: 0.0 });
    w.step(&open("Walmart"));
    for _ in 0..50 {
        w.step(&center_of(&w, "Search Walmart"));
        w.step(&AtomicAction::Back);
    }
    assert!(w.faults().is_empty());
}

#[test]
fn declared_misroute_goes_to_the_declared_screen() {
    let mut w = World::new(golden(), FaultPolicy { seed: 1, p_noop: 0.0, p_misroute: 1.0 });
    w.step(&open("Walmart"));
    w.step(&center_of(&w, "Search Walmart"));
    assert_eq!(w.location().screen, "cart");
    assert_eq!(w.faults()[0].kind, FaultKind::Misroute);
}

#[test]
fn rendering_is_deterministic_and_distinguishes_screens() {
    let spec = golden();
    let mut digests = BTreeSet::new();
    let mut w = World::new(spec.clone(), FaultPolicy::none());
    let first = w.render();
    assert_eq!(first.png, w.render().png);
    digests.insert(crate::perception::image_digest(&first.png));
    for app in &spec.apps {
        for screen in app.screens.keys() {
            w.location = Location { app: app.name.clone(), screen: screen.clone() };
            let r = w.render();
            assert!(digests.insert(crate::perception::image_digest(&r.png)), "{}/{screen}", app.name);
        }
    }
    assert_eq!(digests.len(), 10);
}

#[test]
fn mock_perception_returns_the_declared_elements() {
    let mut w = World::new(golden(), FaultPolicy::none());
    w.step(&open("Maps"));
    let r = w.render();
    let p = MockPerceiver.perceive(&r.png).unwrap();
    let got: Vec<_> = p.elements.iter().map(|e| (e.content.as_str(), e.center)).collect();
    assert_eq!(got, vec![("Maps", (110, 60)), ("Search here", (180, 120)), ("Saved places", (180, 180))]);
    assert_eq!(p.screen_size, (360, 780));
}

#[test]
fn templates_and_conditional_elements_follow_world_vars() {
    let mut w = World::new(golden(), FaultPolicy::none());
    w.step(&open("Walmart"));
    w.step(&center_of(&w, "Search Walmart"));
    assert!(!w.facts().visible.iter().any(|v| v.contains("Sony")));
    w.step(&AtomicAction::Type { text: "headphones".into() });
    w.step(&AtomicAction::Enter);
    let visible = w.facts().visible;
    assert!(visible.contains(&"Query: headphones".to_string()), "{visible:?}");
    assert!(visible.contains(&"Sony Headphones $59".to_string()));
}
