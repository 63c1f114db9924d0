use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{AppFsm, StateId, TaskJournal, Transition};
use crate::device::AtomicAction;

/// One hop of a recovery path. A reversed hop walks a recorded edge
/// backwards, which on a device means pressing Back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathHop {
    pub transition: Transition,
    pub reversed: bool,
}

impl PathHop {
    pub fn from(&self) -> &StateId {
        if self.reversed { &self.transition.to } else { &self.transition.from }
    }

    pub fn to(&self) -> &StateId {
        if self.reversed { &self.transition.from } else { &self.transition.to }
    }

    pub fn action(&self) -> AtomicAction {
        if self.reversed { AtomicAction::Back } else { self.transition.action.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTarget {
    pub target: StateId,
    pub path: Vec<PathHop>,
}

/// Picks the most recently seen verified state connected to `failed_at`
/// and one shortest recorded path to it.
///
/// Edges may be walked in either direction. Ties on recency break on path
/// length, then on the id. Returns `None` if `failed_at` is unknown or no
/// verified state is connected to it.
pub fn find_recovery_target(
    fsm: &AppFsm,
    journal: &TaskJournal,
    failed_at: &StateId,
) -> Option<RecoveryTarget> {
    fsm.state(failed_at)?;

    // forward edges first, then reversed ones, each in recording order
    let mut adjacency: BTreeMap<&StateId, Vec<(usize, bool)>> = BTreeMap::new();
    for (i, t) in fsm.transitions().iter().enumerate() {
        adjacency.entry(&t.from).or_default().push((i, false));
    }
    for (i, t) in fsm.transitions().iter().enumerate() {
        adjacency.entry(&t.to).or_default().push((i, true));
    }

    let mut dist: BTreeMap<&StateId, usize> = BTreeMap::from([(failed_at, 0)]);
    let mut parent: BTreeMap<&StateId, (usize, bool)> = BTreeMap::new();
    let mut queue = VecDeque::from([failed_at]);
    while let Some(cur) = queue.pop_front() {
        let d = dist[cur];
        for &(i, reversed) in adjacency.get(cur).into_iter().flatten() {
            let t = &fsm.transitions()[i];
            let next = if reversed { &t.from } else { &t.to };
            if !dist.contains_key(next) {
                dist.insert(next, d + 1);
                parent.insert(next, (i, reversed));
                queue.push_back(next);
            }
        }
    }

    let recency = |id: &StateId| {
        let seen = fsm.state(id).map_or(0, |s| s.last_seen_step);
        journal.last_step_of(fsm.app(), id).map_or(seen, |j| j.max(seen))
    };
    let target = dist
        .iter()
        .filter(|(id, _)| fsm.state(id).is_some_and(|s| s.verified))
        .min_by(|(a, da), (b, db)| {
            recency(b)
                .cmp(&recency(a))
                .then(da.cmp(db))
                .then(a.cmp(b))
        })
        .map(|(id, _)| (*id).clone())?;

    let mut path = Vec::new();
    let mut cur = &target;
    while cur != failed_at {
        let (i, reversed) = parent[cur];
        let t = &fsm.transitions()[i];
        path.push(PathHop { transition: t.clone(), reversed });
        cur = if reversed { &t.to } else { &t.from };
    }
    path.reverse();
    Some(RecoveryTarget { target, path })
}
