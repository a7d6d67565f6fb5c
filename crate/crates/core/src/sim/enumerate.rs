//! Exact scoring by exhaustive enumeration of fault branches.
//!
//! The search branches lazily: a run is re-attempted with the fault knowledge
//! gathered so far, and only when the forwarding logic actually consults an
//! undecided fault does the branch split. Deterministic faults (probability
//! 0 or 1) are answered in place and never double the branch count, and under
//! permanent crashes an edge last seen alive at slot `j` is still alive at
//! slot `i` with probability `(1 - p)^(i - j)`.

use std::cell::Cell;
use std::collections::BTreeMap;

use crate::compiled::Compiled;
use crate::model::{FaultModel, Scenario};
use crate::sim::{arrived_count, step_indexed, SimError};

pub(crate) const DEFAULT_BRANCH_CAP: u64 = 1 << 24;

/// What is known about a permanently crashable edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LastKnown {
    Unknown,
    /// Observed active during the given 1-based slot.
    AliveAt(u32),
    Crashed,
}

#[derive(Debug, Clone)]
struct Node {
    prob: f64,
    /// Slots already completed.
    slot: u32,
    pos: Vec<u32>,
    /// Permanent runs only: per-edge knowledge carried across slots.
    perm: Vec<LastKnown>,
    /// Crash resolutions for the slot currently being attempted.
    slot_active: BTreeMap<usize, bool>,
    /// Omission resolutions for the slot currently being attempted.
    slot_fate: BTreeMap<(usize, usize), bool>,
}

#[derive(Debug, Clone, Copy)]
enum Query {
    Active(usize),
    Fate(usize, usize),
}

enum Attempt {
    Completed(Vec<u32>),
    Need(Query),
}

/// Probability that at least `guarantee` messages arrive by the timeout,
/// by exhaustive enumeration (capped at 2^24 fault branch points).
pub fn score_enumerate(s: &Scenario) -> Result<f64, SimError> {
    score_enumerate_capped(s, DEFAULT_BRANCH_CAP)
}

pub(crate) fn score_enumerate_capped(s: &Scenario, cap: u64) -> Result<f64, SimError> {
    let comp = Compiled::new(s)?;
    let dist = slots_to_target(&comp);
    let ell = s.guarantee as usize;
    let perm_len = if s.fault_model == FaultModel::Permanent {
        comp.ne
    } else {
        0
    };
    let mut stack = vec![Node {
        prob: 1.0,
        slot: 0,
        pos: comp.msg_source.iter().map(|&v| v as u32).collect(),
        perm: vec![LastKnown::Unknown; perm_len],
        slot_active: BTreeMap::new(),
        slot_fate: BTreeMap::new(),
    }];
    let mut score = 0.0;
    let mut branch_points: u64 = 0;
    while let Some(node) = stack.pop() {
        // Arrived messages never leave their target, so the count is sticky.
        if arrived_count(&comp, &node.pos) >= ell {
            score += node.prob;
            continue;
        }
        if node.slot == s.timeout {
            continue;
        }
        let remaining = s.timeout - node.slot;
        let potential = node
            .pos
            .iter()
            .enumerate()
            .filter(|&(m, &v)| dist[m][v as usize] <= remaining)
            .count();
        if potential < ell {
            continue;
        }
        match attempt(&comp, s.fault_model, &node)? {
            Attempt::Completed(pos) => {
                let mut next = node;
                next.slot += 1;
                next.pos = pos;
                if !next.perm.is_empty() {
                    for (&e, &active) in &next.slot_active {
                        next.perm[e] = if active {
                            LastKnown::AliveAt(next.slot)
                        } else {
                            LastKnown::Crashed
                        };
                    }
                }
                next.slot_active.clear();
                next.slot_fate.clear();
                stack.push(next);
            }
            Attempt::Need(q) => {
                branch_points += 1;
                if branch_points > cap {
                    return Err(SimError::TooManyBranches {
                        explored: branch_points,
                        cap,
                    });
                }
                let p_yes = match q {
                    Query::Active(e) => match s.fault_model {
                        FaultModel::Temporary => 1.0 - comp.p_crash[e],
                        FaultModel::Permanent => {
                            let since = match node.perm[e] {
                                LastKnown::Unknown => node.slot + 1,
                                LastKnown::AliveAt(j) => node.slot + 1 - j,
                                LastKnown::Crashed => unreachable!("crashed edges never re-queried"),
                            };
                            (1.0 - comp.p_crash[e]).powi(since as i32)
                        }
                    },
                    Query::Fate(_, e) => 1.0 - comp.p_omit[e],
                };
                for yes in [false, true] {
                    let mut child = node.clone();
                    child.prob *= if yes { p_yes } else { 1.0 - p_yes };
                    match q {
                        Query::Active(e) => {
                            child.slot_active.insert(e, yes);
                        }
                        Query::Fate(m, e) => {
                            child.slot_fate.insert((m, e), yes);
                        }
                    }
                    stack.push(child);
                }
            }
        }
    }
    Ok(score)
}

/// Re-run one slot with current knowledge; stop at the first undecided fault.
fn attempt(comp: &Compiled, model: FaultModel, node: &Node) -> Result<Attempt, SimError> {
    let missing: Cell<Option<Query>> = Cell::new(None);
    let mut pos = node.pos.clone();
    let res = step_indexed(
        comp,
        &mut pos,
        &mut |e| {
            if missing.get().is_some() {
                return true;
            }
            let p = comp.p_crash[e];
            let known = if p <= 0.0 {
                Some(true)
            } else if p >= 1.0 {
                Some(false)
            } else if model == FaultModel::Permanent && node.perm[e] == LastKnown::Crashed {
                Some(false)
            } else {
                node.slot_active.get(&e).copied()
            };
            known.unwrap_or_else(|| {
                missing.set(Some(Query::Active(e)));
                true
            })
        },
        &mut |m, e| {
            if missing.get().is_some() {
                return true;
            }
            let p = comp.p_omit[e];
            let known = if p <= 0.0 {
                Some(true)
            } else if p >= 1.0 {
                Some(false)
            } else {
                node.slot_fate.get(&(m, e)).copied()
            };
            known.unwrap_or_else(|| {
                missing.set(Some(Query::Fate(m, e)));
                true
            })
        },
    );
    match missing.get() {
        // Speculative answers may have produced a bogus error; the children
        // re-run the slot and any real error resurfaces deterministically.
        Some(q) => Ok(Attempt::Need(q)),
        None => {
            res?;
            Ok(Attempt::Completed(pos))
        }
    }
}

/// `dist[m][v]`: fewest slots message `m` needs from `v` to its target
/// (`u32::MAX` if unreachable). Lower bound used to prune hopeless branches.
fn slots_to_target(comp: &Compiled) -> Vec<Vec<u32>> {
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); comp.nv];
    for e in 0..comp.ne {
        incoming[comp.edge_to[e]].push(comp.edge_from[e]);
    }
    (0..comp.nm)
        .map(|m| {
            let mut dist = vec![u32::MAX; comp.nv];
            let mut queue = std::collections::VecDeque::new();
            dist[comp.msg_target[m]] = 0;
            queue.push_back(comp.msg_target[m]);
            while let Some(v) = queue.pop_front() {
                for &u in &incoming[v] {
                    if dist[u] == u32::MAX {
                        dist[u] = dist[v] + 1;
                        queue.push_back(u);
                    }
                }
            }
            dist
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;

    #[test]
    fn unit_link_score_is_exact() {
        let s = fixtures::unit_link();
        let score = score_enumerate(&s).unwrap();
        assert!((score - 0.855).abs() < 1e-12, "{score}");
    }

    #[test]
    fn parallel_links_cover_both_fault_models() {
        let s = fixtures::parallel_two(FaultModel::Temporary, 0.5);
        assert!((score_enumerate(&s).unwrap() - 0.75).abs() < 1e-12);
        let s = fixtures::parallel_two(FaultModel::Permanent, 0.1);
        assert!((score_enumerate(&s).unwrap() - 0.99).abs() < 1e-12);
    }

    #[test]
    fn deterministic_faults_do_not_branch() {
        let mut sure = fixtures::unit_link();
        sure.network.edges[0].p_crash = 0.0;
        sure.network.edges[0].p_omit = 0.0;
        // Cap of zero branch points: still fine, nothing is uncertain.
        assert_eq!(score_enumerate_capped(&sure, 0).unwrap(), 1.0);
        let mut dead = fixtures::unit_link();
        dead.network.edges[0].p_crash = 1.0;
        assert_eq!(score_enumerate_capped(&dead, 0).unwrap(), 0.0);
    }

    #[test]
    fn branch_cap_is_enforced() {
        let s = fixtures::parallel_two(FaultModel::Temporary, 0.5);
        let err = score_enumerate_capped(&s, 1).unwrap_err();
        assert!(
            matches!(err, SimError::TooManyBranches { explored: 2, cap: 1 }),
            "{err}"
        );
    }

    #[test]
    fn permanent_crashes_condition_on_last_sighting() {
        // One link, two slots: arrival needs the edge alive when used, and a
        // slot-1 omission forces a retry whose crash draw is conditional.
        let mut s = fixtures::unit_link();
        s.fault_model = FaultModel::Permanent;
        s.timeout = 2;
        s.network.edges[0].p_crash = 0.3;
        s.network.edges[0].p_omit = 0.2;
        let expected = 0.7 * 0.8 + 0.7 * 0.2 * 0.7 * 0.8;
        let score = score_enumerate(&s).unwrap();
        assert!((score - expected).abs() < 1e-12, "{score} vs {expected}");

        let mut s = fixtures::unit_link();
        s.timeout = 2;
        s.network.edges[0].p_crash = 0.3;
        s.network.edges[0].p_omit = 0.2;
        let expected = 0.56 + (1.0 - 0.56) * 0.56;
        let score = score_enumerate(&s).unwrap();
        assert!((score - expected).abs() < 1e-12, "{score} vs {expected}");
    }

    #[test]
    fn hopeless_branches_are_pruned_without_changing_the_score() {
        // Two messages, guarantee 2, but m2's target is unreachable: score 0
        // without exploring any fault branch.
        let mut s = fixtures::unit_link();
        s.network.vertices.push("w".into());
        s.messages.push(crate::model::MessageSpec {
            id: "m2".into(),
            source: "v".into(),
            target: "w".into(),
        });
        s.guarantee = 2;
        for prio in s.scheme.msg_priority.values_mut() {
            prio.push("m2".into());
        }
        let mut per = std::collections::BTreeMap::new();
        per.insert("u".to_string(), vec!["e1".to_string()]);
        s.scheme.edge_pref.insert("m2".into(), per);
        s.scheme.msg_priority.insert("w".into(), vec!["m1".into(), "m2".into()]);
        assert_eq!(score_enumerate_capped(&s, 0).unwrap(), 0.0);
    }
}
