//! The Walmart shopping chain as a committed FSM document.
//!
//! Set `FSM_FIXTURE_BLESS=1` to rewrite the committed files after an
//! intentional format change.

mod common;

use fsm_agent::condition::{Condition, Predicate};
use fsm_agent::device::AtomicAction;
use fsm_agent::fsm::{export_fsm, find_recovery_target, import_fsm_json, AppFsm, ExportFormat, TaskJournal, UiState};
use fsm_agent::verdict::Verdict;

/// Homepage -> Search -> Item Detail -> Cart, with the cart's close button
/// leading back to the item.
fn walmart_chain() -> AppFsm {
    let mut fsm = AppFsm::new("Walmart");
    let screens = [
        ("Homepage of Walmart", "The Walmart homepage with a search bar.", "The search page."),
        ("Search Page of Walmart", "Search results for headphones.", "The item detail page."),
        ("Item Detail Page in Walmart", "Sony headphones with an Add to cart button.", "The cart."),
        ("Cart Page of Walmart", "The cart with one item.", "The order confirmation."),
    ];
    let mut ids = Vec::new();
    for (step, (beacon, description, next)) in screens.iter().enumerate() {
        let mut state = UiState::new("Walmart", beacon, step).unwrap();
        state.description = description.to_string();
        state.predicted_next = next.to_string();
        let id = fsm.upsert_state(state).unwrap();
        fsm.mark_verified(&id, &Verdict::success()).unwrap();
        ids.push(id);
    }
    let cart_has_item = Condition::with_predicate(
        "The cart holds one item",
        Predicate::VarAtLeast { var: "cart".into(), value: 1 },
    );
    let edges = [
        (0, AtomicAction::Tap { x: 180, y: 120 }, 1, Condition::text("The search page is open"), Condition::default()),
        (1, AtomicAction::Tap { x: 180, y: 180 }, 2, Condition::default(), Condition::default()),
        (2, AtomicAction::Tap { x: 300, y: 60 }, 3, cart_has_item, Condition::default()),
        (3, AtomicAction::Tap { x: 30, y: 60 }, 2, Condition::default(), Condition::default()),
    ];
    for (step, (from, action, to, pre_next, post)) in edges.into_iter().enumerate() {
        fsm.record_transition(&ids[from], action, &ids[to], pre_next, post, step + 1).unwrap();
    }
    fsm
}

fn check(name: &str, actual: &str) {
    let path = common::local_fixture("fsm").join(name);
    if std::env::var_os("FSM_FIXTURE_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} differs from the committed fixture");
}

#[test]
fn chain_matches_the_committed_documents() {
    let fsm = walmart_chain();
    assert_eq!(fsm.state_count(), 4);
    assert_eq!(fsm.transitions().len(), 4);
    check("walmart.json", &export_fsm(&fsm, ExportFormat::Json).unwrap());
    check("walmart.dot", &export_fsm(&fsm, ExportFormat::Dot).unwrap());
}

#[test]
fn committed_json_imports_back_to_the_same_graph() {
    let doc = std::fs::read_to_string(common::local_fixture("fsm").join("walmart.json")).unwrap();
    let fsm = import_fsm_json(&doc).unwrap();
    assert_eq!(fsm, walmart_chain());
    fsm.validate().unwrap();
}

#[test]
fn dot_has_one_line_per_node_and_edge() {
    let dot = export_fsm(&walmart_chain(), ExportFormat::Dot).unwrap();
    assert_eq!(dot.lines().filter(|l| l.contains("[label=") && !l.contains("->")).count(), 4);
    assert_eq!(dot.lines().filter(|l| l.contains("->")).count(), 4);
    assert!(dot.starts_with("digraph \"Walmart\" {"));
}

#[test]
fn back_edge_gives_the_cart_a_way_home() {
    let fsm = walmart_chain();
    let home = fsm.lookup_beacon("Homepage of Walmart").unwrap().clone();
    let cart = fsm.lookup_beacon("Cart Page of Walmart").unwrap().clone();
    assert_eq!(fsm.out_degree(&cart), 1);
    // with no journal, recency is the node's last sighting: the cart itself
    let target = find_recovery_target(&fsm, &TaskJournal::new(), &cart).unwrap();
    assert_eq!(target.target, cart);
    assert!(target.path.is_empty());
    assert_eq!(fsm.initial(), Some(&home));
}
