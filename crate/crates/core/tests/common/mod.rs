//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fsm_agent::condition::Condition;
use fsm_agent::device::AtomicAction;
use fsm_agent::eval::TaskRecord;
use fsm_agent::fsm::{AppFsm, JournalEntry, StateId, TaskJournal, UiState};
use fsm_agent::verdict::Verdict;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn golden_dir() -> PathBuf {
    repo_root().join("fixtures/golden")
}

pub fn golden_archive() -> PathBuf {
    golden_dir().join("archive")
}

pub fn spa_suite_dir() -> PathBuf {
    repo_root().join("fixtures/spa_bench")
}

pub fn local_fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

// ---------------------------------------------------------------------------
// Action accuracy oracle

/// What a reference step means, independent of how it is worded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Tap(String),
    Type(String),
    Open(String),
    Enter,
    Home,
    Back,
}

const TARGETS: [&str; 6] = ["Search", "Cart", "Maps", "Notes", "Checkout", "Venice"];

pub fn random_step(rng: &mut impl Rng) -> Step {
    let t = TARGETS[rng.random_range(0..TARGETS.len())].to_string();
    match rng.random_range(0..6) {
        0 => Step::Tap(t),
        1 => Step::Type(t),
        2 => Step::Open(t),
        3 => Step::Enter,
        4 => Step::Home,
        _ => Step::Back,
    }
}

/// One of several surface forms of the same step.
pub fn word(step: &Step, rng: &mut impl Rng) -> String {
    let v = rng.random_range(0..3);
    match step {
        Step::Tap(t) => [format!("tap '{t}'"), format!("Tap on the {t}"), format!("click {}", t.to_uppercase())][v].clone(),
        Step::Type(t) => [format!("type '{t}'"), format!("Type('{t}')"), format!("input {}", t.to_lowercase())][v].clone(),
        Step::Open(t) => [format!("open {t} app"), format!("Open_App('{t}')"), format!("launch {t}")][v].clone(),
        Step::Enter => ["tap enter", "Enter()", "press enter"][v].into(),
        Step::Home => ["press home button", "Home()", "go home"][v].into(),
        Step::Back => ["press back", "Back()", "go back"][v].into(),
    }
}

/// Longest common subsequence by memoised recursion.
pub fn lcs_oracle(a: &[Step], b: &[Step]) -> usize {
    fn go(a: &[Step], b: &[Step], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

// ---------------------------------------------------------------------------
// Recovery target oracle

pub struct RandomFsm {
    pub fsm: AppFsm,
    pub journal: TaskJournal,
    pub ids: Vec<StateId>,
}

/// Up to 20 states with random edges, verified flags and visit history.
pub fn random_fsm(seed: u64) -> RandomFsm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=20);
    let mut fsm = AppFsm::new("Rand");
    let mut ids = Vec::new();
    for i in 0..n {
        let step = rng.random_range(0..50);
        let id = fsm.upsert_state(UiState::new("Rand", &format!("Screen {i}"), step).unwrap()).unwrap();
        if rng.random_bool(0.4) {
            fsm.mark_verified(&id, &Verdict::success()).unwrap();
        }
        ids.push(id);
    }
    let edges = rng.random_range(0..=2 * n);
    for e in 0..edges {
        let from = &ids[rng.random_range(0..n)];
        let to = &ids[rng.random_range(0..n)];
        let action = AtomicAction::Tap { x: e as i32, y: rng.random_range(0..3) };
        fsm.record_transition(from, action, to, Condition::default(), Condition::default(), e).unwrap();
    }
    let mut journal = TaskJournal::new();
    let mut step = 0;
    for _ in 0..rng.random_range(0..30) {
        step += rng.random_range(1..5);
        let id = ids[rng.random_range(0..n)].clone();
        journal
            .append(JournalEntry {
                step,
                app: "Rand".into(),
                state: id,
                action: AtomicAction::Wait,
                verdict: Verdict::success(),
                verified: true,
            })
            .unwrap();
    }
    RandomFsm { fsm, journal, ids }
}

/// Undirected hop distances from `start` over recorded edges.
pub fn distances(fsm: &AppFsm, start: &StateId) -> BTreeMap<StateId, usize> {
    let mut dist = BTreeMap::from([(start.clone(), 0)]);
    let mut queue = VecDeque::from([start.clone()]);
    while let Some(cur) = queue.pop_front() {
        let d = dist[&cur];
        for t in fsm.transitions() {
            for (a, b) in [(&t.from, &t.to), (&t.to, &t.from)] {
                if a == &cur && !dist.contains_key(b) {
                    dist.insert(b.clone(), d + 1);
                    queue.push_back(b.clone());
                }
            }
        }
    }
    dist
}

/// Most recent time a state was seen, from the node or the journal.
pub fn recency(fsm: &AppFsm, journal: &TaskJournal, id: &StateId) -> usize {
    let node = fsm.state(id).map_or(0, |s| s.last_seen_step);
    let landed = journal.entries.iter().filter(|e| &e.state == id).map(|e| e.step).max().unwrap_or(0);
    node.max(landed)
}

/// Enumerates every verified reachable state, ranks by (recency desc,
/// distance asc, id asc) and returns the winner with its distance.
pub fn recovery_oracle(fsm: &AppFsm, journal: &TaskJournal, failed_at: &StateId) -> Option<(StateId, usize)> {
    let dist = distances(fsm, failed_at);
    let mut candidates: Vec<(usize, usize, StateId)> = fsm
        .states()
        .filter(|s| s.verified)
        .filter_map(|s| dist.get(&s.id).map(|d| (recency(fsm, journal, &s.id), *d, s.id.clone())))
        .collect();
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    candidates.into_iter().next().map(|(_, d, id)| (id, d))
}

// ---------------------------------------------------------------------------
// Metric reproduction

/// Raw counts of one published table row: (num, den) for SS, AA, TR, SR, RS.
pub struct PublishedRow {
    pub name: &'static str,
    pub counts: [(u64, u64); 5],
    pub percents: [f64; 5],
}

pub const PUBLISHED: [PublishedRow; 4] = [
    PublishedRow {
        name: "Mobile-Eval-E, proposed agent",
        counts: [(168, 195), (303, 364), (4, 25), (21, 25), (23, 32)],
        percents: [86.15, 83.24, 16.00, 84.00, 71.88],
    },
    PublishedRow {
        name: "Mobile-Eval-E, Mobile-Agent-E + Evo",
        counts: [(154, 195), (279, 364), (6, 25), (18, 25), (33, 49)],
        percents: [78.97, 76.65, 24.00, 72.00, 67.34],
    },
    PublishedRow {
        name: "SPA-Bench, proposed agent",
        counts: [(117, 132), (221, 262), (4, 20), (16, 20), (42, 63)],
        percents: [88.64, 84.35, 20.00, 80.00, 66.67],
    },
    PublishedRow {
        name: "SPA-Bench, Mobile-Agent-E + Evo",
        counts: [(106, 132), (204, 262), (5, 20), (15, 20), (37, 70)],
        percents: [80.30, 77.86, 25.00, 75.00, 52.86],
    },
];

/// Splits `total` into `n` near-equal parts.
fn spread(total: u64, n: u64) -> Vec<u64> {
    (0..n).map(|i| total / n + u64::from(i < total % n)).collect()
}

/// Fills `caps` greedily with `num`, never exceeding a cap.
fn fill(num: u64, caps: &[u64]) -> Vec<u64> {
    let mut left = num;
    caps.iter()
        .map(|&c| {
            let v = c.min(left);
            left -= v;
            v
        })
        .collect()
}

/// Per-task records whose sums are exactly the row's counts. SR and TR
/// share the task denominator.
pub fn records_for(row: &PublishedRow) -> Vec<TaskRecord> {
    let [ss, aa, tr, sr, rs] = row.counts;
    let n = sr.1;
    assert_eq!(tr.1, n);
    assert!(sr.0 + tr.0 <= n);
    let rubric_tot = spread(ss.1, n);
    let rubric_ok = fill(ss.0, &rubric_tot);
    let ref_tot = spread(aa.1, n);
    let ref_ok = fill(aa.0, &ref_tot);
    let failed = spread(rs.1, n);
    let recovered = fill(rs.0, &failed);
    (0..n as usize)
        .map(|i| TaskRecord {
            task_id: format!("task_{i:02}"),
            success: (i as u64) < sr.0,
            terminated: (i as u64) >= n - tr.0,
            rubrics_fulfilled: rubric_ok[i],
            rubrics_total: rubric_tot[i],
            actions_matched: ref_ok[i],
            actions_reference: ref_tot[i],
            failed_subtasks: failed[i],
            recovered_subtasks: recovered[i],
        })
        .collect()
}
