//! Scheme constructors: greedy hot-potato routing and compiled
//! time-triggered schedules.
//!
//! Both builders emit plain rule lists over the documented assertion forms,
//! so their output can be serialized, inspected, and validated like any
//! hand-written scheme.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{Assertion, EdgeTerm, ForwardingScheme, MsgTerm, Rule, SchemeError, SetBody, SetDef, SetKind};
use crate::model::Scenario;

fn present(m: &str) -> Assertion {
    Assertion::Present(MsgTerm::Id(m.to_string()))
}

fn active(j: u32) -> Assertion {
    Assertion::Active(EdgeTerm::Index(j))
}

fn in_msgs(set: &str, t: MsgTerm) -> Assertion {
    Assertion::InMsgSet(set.to_string(), t)
}

fn in_edges(set: &str, t: EdgeTerm) -> Assertion {
    Assertion::InEdgeSet(set.to_string(), t)
}

fn priority(t: MsgTerm, set: &str) -> Assertion {
    Assertion::Priority(t, set.to_string())
}

fn prefers(m: MsgTerm, e: EdgeTerm, set: &str) -> Assertion {
    Assertion::Prefers(m, e, set.to_string())
}

/// Rules that make a message wait for its single preferred active edge.
///
/// For every index `j` the set `claim<j>` collects the queued messages whose
/// top-ranked active edge is the `j`-th one; a message is forwarded there only
/// while it outranks everyone else with the same claim, so lower-priority
/// messages hold position instead of deflecting elsewhere.
pub(crate) fn waiting_rules(
    message_ids: &[String],
    max_degree: usize,
) -> (Vec<SetDef>, Vec<Rule>) {
    let mut sets = vec![SetDef {
        name: "act".into(),
        kind: SetKind::Edges,
        body: SetBody::Comprehension(Assertion::Active(EdgeTerm::Elem)),
    }];
    let mut rules = Vec::new();
    for j in 1..=max_degree as u32 {
        let claim = format!("claim{j}");
        sets.push(SetDef {
            name: claim.clone(),
            kind: SetKind::Messages,
            body: SetBody::Comprehension(Assertion::and(
                Assertion::Present(MsgTerm::Elem),
                prefers(MsgTerm::Elem, EdgeTerm::Index(j), "act"),
            )),
        });
        for m in message_ids {
            rules.push(Rule {
                guard: Assertion::and_all(vec![
                    present(m),
                    active(j),
                    prefers(MsgTerm::Id(m.clone()), EdgeTerm::Index(j), "act"),
                    priority(MsgTerm::Id(m.clone()), &claim),
                ]),
                message: m.clone(),
                edge_index: j,
            });
        }
    }
    (sets, rules)
}

/// Greedy rules: in round `i` the top remaining message takes its preferred
/// remaining active edge; unclaimed edges pass to the next round.
fn hot_potato_rules(message_ids: &[String], max_degree: usize) -> (Vec<SetDef>, Vec<Rule>) {
    let rounds = message_ids.len().min(max_degree);
    let mut sets = Vec::new();
    let mut rules = Vec::new();
    if rounds == 0 {
        return (sets, rules);
    }
    sets.push(SetDef {
        name: "q1".into(),
        kind: SetKind::Messages,
        body: SetBody::Comprehension(Assertion::Present(MsgTerm::Elem)),
    });
    sets.push(SetDef {
        name: "t1".into(),
        kind: SetKind::Edges,
        body: SetBody::Comprehension(Assertion::Active(EdgeTerm::Elem)),
    });
    for i in 2..=rounds {
        let (q_prev, t_prev) = (format!("q{}", i - 1), format!("t{}", i - 1));
        sets.push(SetDef {
            name: format!("q{i}"),
            kind: SetKind::Messages,
            body: SetBody::Comprehension(Assertion::and(
                in_msgs(&q_prev, MsgTerm::Elem),
                Assertion::Not(Box::new(priority(MsgTerm::Elem, &q_prev))),
            )),
        });
        // An edge survives to round i if nobody from round i-1 claims it.
        let claimed = Assertion::or_all(
            message_ids
                .iter()
                .map(|m| {
                    Assertion::and(
                        priority(MsgTerm::Id(m.clone()), &q_prev),
                        prefers(MsgTerm::Id(m.clone()), EdgeTerm::Elem, &t_prev),
                    )
                })
                .collect(),
        );
        sets.push(SetDef {
            name: format!("t{i}"),
            kind: SetKind::Edges,
            body: SetBody::Comprehension(Assertion::and(
                in_edges(&t_prev, EdgeTerm::Elem),
                Assertion::Not(Box::new(claimed)),
            )),
        });
    }
    for i in 1..=rounds {
        let (q, t) = (format!("q{i}"), format!("t{i}"));
        for m in message_ids {
            for j in 1..=max_degree as u32 {
                rules.push(Rule {
                    guard: Assertion::and_all(vec![
                        priority(MsgTerm::Id(m.clone()), &q),
                        in_edges(&t, EdgeTerm::Index(j)),
                        prefers(MsgTerm::Id(m.clone()), EdgeTerm::Index(j), &t),
                    ]),
                    message: m.clone(),
                    edge_index: j,
                });
            }
        }
    }
    (sets, rules)
}

/// Shortest hop-distance to `target` within the subgraph `edges`, by reverse
/// breadth-first search. Vertices that cannot reach the target are absent.
fn dag_distances(
    edges: &[(String, String)],
    target: &str,
) -> BTreeMap<String, u32> {
    let mut preds: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (from, to) in edges {
        preds.entry(to.as_str()).or_default().push(from.as_str());
    }
    let mut dist = BTreeMap::new();
    dist.insert(target.to_string(), 0u32);
    let mut frontier = VecDeque::from([target]);
    while let Some(v) = frontier.pop_front() {
        let d = dist[v];
        for &p in preds.get(v).into_iter().flatten() {
            if !dist.contains_key(p) {
                dist.insert(p.to_string(), d + 1);
                frontier.push_back(p);
            }
        }
    }
    dist
}

fn has_cycle(edges: &[(String, String)]) -> bool {
    let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut indeg: BTreeMap<&str, usize> = BTreeMap::new();
    for (from, to) in edges {
        out.entry(from.as_str()).or_default().push(to.as_str());
        indeg.entry(from.as_str()).or_insert(0);
        *indeg.entry(to.as_str()).or_insert(0) += 1;
    }
    let mut ready: Vec<&str> = indeg
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&v, _)| v)
        .collect();
    let mut seen = 0usize;
    while let Some(v) = ready.pop() {
        seen += 1;
        for &w in out.get(v).into_iter().flatten() {
            let d = indeg.get_mut(w).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(w);
            }
        }
    }
    seen != indeg.len()
}

/// Build a greedy scheme from a primary path and a fallback edge set per
/// message.
///
/// `first_choice[m]` is an edge-id path from the message's source to its
/// target; `fallbacks[m]` is a set of edges forming an acyclic subgraph in
/// which every vertex — including every vertex of the primary path — can
/// reach the target. Preferences put the primary path first, then fallback
/// edges by how close they get to the target; priorities follow message
/// declaration order.
pub fn build_hot_potato(
    scenario: &Scenario,
    first_choice: &BTreeMap<String, Vec<String>>,
    fallbacks: &BTreeMap<String, Vec<String>>,
) -> Result<ForwardingScheme, SchemeError> {
    let net = &scenario.network;
    let edge_by_id: BTreeMap<&str, &crate::model::Edge> =
        net.edges.iter().map(|e| (e.id.as_str(), e)).collect();
    let lookup_edge = |id: &str, message: &str| -> Result<&crate::model::Edge, SchemeError> {
        edge_by_id
            .get(id)
            .copied()
            .ok_or_else(|| SchemeError::PathInvalid {
                message: message.to_string(),
                reason: format!("unknown edge {id:?}"),
            })
    };

    let mut edge_pref: BTreeMap<String, BTreeMap<String, Vec<String>>> = BTreeMap::new();

    for m in &scenario.messages {
        let path = first_choice
            .get(&m.id)
            .ok_or_else(|| SchemeError::PathInvalid {
                message: m.id.clone(),
                reason: "no primary path given".into(),
            })?;
        if path.is_empty() {
            return Err(SchemeError::PathInvalid {
                message: m.id.clone(),
                reason: "primary path is empty".into(),
            });
        }
        // The path must run source -> target without revisiting a vertex.
        let mut pos = m.source.clone();
        let mut visited = BTreeSet::from([pos.clone()]);
        let mut next_from: BTreeMap<String, String> = BTreeMap::new();
        for id in path {
            let e = lookup_edge(id, &m.id)?;
            if e.from != pos {
                return Err(SchemeError::PathInvalid {
                    message: m.id.clone(),
                    reason: format!("edge {id:?} leaves {:?}, expected {:?}", e.from, pos),
                });
            }
            if !visited.insert(e.to.clone()) {
                return Err(SchemeError::PathInvalid {
                    message: m.id.clone(),
                    reason: format!("path revisits vertex {:?}", e.to),
                });
            }
            next_from.insert(e.from.clone(), id.clone());
            pos = e.to.clone();
        }
        if pos != m.target {
            return Err(SchemeError::PathInvalid {
                message: m.id.clone(),
                reason: format!("path ends at {pos:?}, not the target {:?}", m.target),
            });
        }

        let fallback_ids = fallbacks
            .get(&m.id)
            .ok_or_else(|| SchemeError::FallbackInvalid {
                message: m.id.clone(),
                reason: "no fallback edges given".into(),
            })?;
        let mut fallback_pairs = Vec::new();
        let mut fallback_set = BTreeSet::new();
        for id in fallback_ids {
            let e = lookup_edge(id, &m.id).map_err(|_| SchemeError::FallbackInvalid {
                message: m.id.clone(),
                reason: format!("unknown edge {id:?}"),
            })?;
            fallback_pairs.push((e.from.clone(), e.to.clone()));
            fallback_set.insert(id.as_str());
        }
        if has_cycle(&fallback_pairs) {
            return Err(SchemeError::FallbackInvalid {
                message: m.id.clone(),
                reason: "fallback edges contain a cycle".into(),
            });
        }
        let dist = dag_distances(&fallback_pairs, &m.target);
        for (from, to) in &fallback_pairs {
            for v in [from, to] {
                if !dist.contains_key(v) {
                    return Err(SchemeError::FallbackInvalid {
                        message: m.id.clone(),
                        reason: format!("vertex {v:?} cannot reach the target via fallbacks"),
                    });
                }
            }
        }
        for v in visited.iter().filter(|v| *v != &m.target) {
            if !fallback_pairs.iter().any(|(from, _)| from == v) {
                return Err(SchemeError::FallbackInvalid {
                    message: m.id.clone(),
                    reason: format!("path vertex {v:?} has no fallback out-edge"),
                });
            }
        }

        // Preference per vertex: primary-path edge, then fallback edges by
        // distance-to-target of their head, then everything else.
        let per_msg = edge_pref.entry(m.id.clone()).or_default();
        for (v, out) in &net.out_order {
            if out.is_empty() {
                continue;
            }
            let primary = next_from.get(v);
            let mut ordered: Vec<&String> = Vec::with_capacity(out.len());
            if let Some(p) = primary {
                ordered.push(p);
            }
            let mut ranked_fallbacks: Vec<(u32, usize, &String)> = out
                .iter()
                .enumerate()
                .filter(|(_, id)| fallback_set.contains(id.as_str()) && Some(*id) != primary)
                .filter_map(|(pos, id)| {
                    let head = &edge_by_id[id.as_str()].to;
                    dist.get(head).map(|&d| (d, pos, id))
                })
                .collect();
            ranked_fallbacks.sort();
            ordered.extend(ranked_fallbacks.into_iter().map(|(_, _, id)| id));
            for id in out {
                if !ordered.contains(&id) {
                    ordered.push(id);
                }
            }
            // Stored order is ascending preference: most preferred last.
            per_msg.insert(v.clone(), ordered.into_iter().rev().cloned().collect());
        }
    }

    // Declaration order = priority order, highest last in storage.
    let mut prio: Vec<String> = scenario.messages.iter().map(|m| m.id.clone()).collect();
    prio.reverse();
    let msg_priority: BTreeMap<String, Vec<String>> = net
        .vertices
        .iter()
        .map(|v| (v.clone(), prio.clone()))
        .collect();

    let message_ids: Vec<String> = scenario.messages.iter().map(|m| m.id.clone()).collect();
    let max_degree = net.out_order.values().map(Vec::len).max().unwrap_or(0);
    let (set_defs, rules) = hot_potato_rules(&message_ids, max_degree);

    Ok(ForwardingScheme {
        set_defs,
        rules,
        msg_priority,
        edge_pref,
    })
}

/// A time-triggered plan: `slots[k]` lists the `(message, edge)` sends of
/// slot `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TtSchedule {
    pub slots: Vec<Vec<(String, String)>>,
}

/// Compile a time-triggered schedule into a waiting scheme.
///
/// The schedule must be consistent: each message's sends form a simple path
/// from its source to its target, no edge carries two messages in one slot,
/// every message arrives within the scenario timeout, and a message only
/// waits at a vertex while another message occupies its departure edge. The
/// derived priorities (earlier departure = higher priority) and preferences
/// (departure edge first) make the rule set reproduce the schedule in
/// fault-free runs.
pub fn build_from_tt_schedule(
    scenario: &Scenario,
    schedule: &TtSchedule,
) -> Result<ForwardingScheme, SchemeError> {
    let net = &scenario.network;
    if schedule.slots.len() > scenario.timeout as usize {
        return Err(SchemeError::ScheduleInvalid(format!(
            "{} slots exceed the timeout {}",
            schedule.slots.len(),
            scenario.timeout
        )));
    }
    let edge_by_id: BTreeMap<&str, &crate::model::Edge> =
        net.edges.iter().map(|e| (e.id.as_str(), e)).collect();
    let msg_index: BTreeMap<&str, usize> = scenario
        .messages
        .iter()
        .enumerate()
        .map(|(i, m)| (m.id.as_str(), i))
        .collect();

    // Walk the slots, tracking message positions and collecting departures.
    let mut pos: Vec<String> = scenario.messages.iter().map(|m| m.source.clone()).collect();
    let mut visited: Vec<BTreeSet<String>> = pos.iter().map(|p| BTreeSet::from([p.clone()])).collect();
    // (vertex, message) -> (arrival slot, departure slot, edge id).
    let mut stays: Vec<(String, usize, usize, usize, String)> = Vec::new();
    let mut arrived_at: Vec<usize> = vec![0; scenario.messages.len()];
    for (k, sends) in schedule.slots.iter().enumerate() {
        let slot = k + 1;
        let mut used_edges = BTreeSet::new();
        let mut moved = BTreeSet::new();
        for (m_id, e_id) in sends {
            let m = *msg_index
                .get(m_id.as_str())
                .ok_or_else(|| SchemeError::UnknownId {
                    kind: "message",
                    id: m_id.clone(),
                })?;
            let e = edge_by_id
                .get(e_id.as_str())
                .ok_or_else(|| SchemeError::UnknownId {
                    kind: "edge",
                    id: e_id.clone(),
                })?;
            if !used_edges.insert(e_id.as_str()) {
                return Err(SchemeError::ScheduleInvalid(format!(
                    "edge {e_id:?} used twice in slot {slot}"
                )));
            }
            if !moved.insert(m) {
                return Err(SchemeError::ScheduleInvalid(format!(
                    "message {m_id:?} sent twice in slot {slot}"
                )));
            }
            if e.from != pos[m] {
                return Err(SchemeError::ScheduleInvalid(format!(
                    "slot {slot} sends {m_id:?} over {e_id:?} from {:?}, but it is at {:?}",
                    e.from, pos[m]
                )));
            }
            if !visited[m].insert(e.to.clone()) {
                return Err(SchemeError::ScheduleInvalid(format!(
                    "message {m_id:?} revisits vertex {:?}",
                    e.to
                )));
            }
            stays.push((e.from.clone(), m, arrived_at[m], slot, e_id.clone()));
            pos[m] = e.to.clone();
            arrived_at[m] = slot;
        }
    }
    for (m, spec) in scenario.messages.iter().enumerate() {
        if pos[m] != spec.target {
            return Err(SchemeError::ScheduleInvalid(format!(
                "message {:?} ends at {:?}, not its target {:?}",
                spec.id, pos[m], spec.target
            )));
        }
    }

    // A message may wait at a vertex only while its departure edge is busy.
    for (v, m, arrival, departure, e_id) in &stays {
        for w in (arrival + 1)..*departure {
            let busy = schedule.slots[w - 1]
                .iter()
                .any(|(other, e)| e == e_id && msg_index[other.as_str()] != *m);
            if !busy {
                return Err(SchemeError::ScheduleInvalid(format!(
                    "message {:?} waits at {v:?} in slot {w} although edge {e_id:?} is free",
                    scenario.messages[*m].id
                )));
            }
        }
    }

    // Earlier departure = higher priority; stored lists put highest last.
    let mut msg_priority = BTreeMap::new();
    for v in &net.vertices {
        let mut departing: Vec<(usize, usize)> = stays
            .iter()
            .filter(|(sv, ..)| sv == v)
            .map(|(_, m, _, depart, _)| (*depart, *m))
            .collect();
        departing.sort_by_key(|&(depart, m)| (std::cmp::Reverse(depart), m));
        let departing_set: BTreeSet<usize> = departing.iter().map(|&(_, m)| m).collect();
        let mut order: Vec<String> = scenario
            .messages
            .iter()
            .enumerate()
            .filter(|(m, _)| !departing_set.contains(m))
            .map(|(_, spec)| spec.id.clone())
            .collect();
        order.extend(departing.into_iter().map(|(_, m)| scenario.messages[m].id.clone()));
        msg_priority.insert(v.clone(), order);
    }

    let mut edge_pref: BTreeMap<String, BTreeMap<String, Vec<String>>> = BTreeMap::new();
    for (m, spec) in scenario.messages.iter().enumerate() {
        let per_msg = edge_pref.entry(spec.id.clone()).or_default();
        for (v, out) in &net.out_order {
            if out.is_empty() {
                continue;
            }
            let departure = stays
                .iter()
                .find(|(sv, sm, ..)| sv == v && *sm == m)
                .map(|(.., e_id)| e_id.clone());
            let mut order: Vec<String> = out
                .iter()
                .filter(|id| Some(*id) != departure.as_ref())
                .rev()
                .cloned()
                .collect();
            order.extend(departure);
            per_msg.insert(v.clone(), order);
        }
    }

    let message_ids: Vec<String> = scenario.messages.iter().map(|m| m.id.clone()).collect();
    let max_degree = net.out_order.values().map(Vec::len).max().unwrap_or(0);
    let (set_defs, rules) = waiting_rules(&message_ids, max_degree);

    Ok(ForwardingScheme {
        set_defs,
        rules,
        msg_priority,
        edge_pref,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;
    use crate::scheme::eval::{Ctx, EvalState};

    #[test]
    fn hot_potato_deflects_lower_priority_message() {
        // Two messages, two parallel edges, both prefer e1: top message takes
        // e1, the other deflects to e2 in the second round.
        let mut s = fixtures::parallel_two(crate::model::FaultModel::Temporary, 0.5);
        s.messages.push(crate::model::MessageSpec {
            id: "m2".into(),
            source: "u".into(),
            target: "v".into(),
        });
        s.guarantee = 2;
        let paths = BTreeMap::from([
            ("m1".to_string(), vec!["e1".to_string()]),
            ("m2".to_string(), vec!["e1".to_string()]),
        ]);
        let dags = BTreeMap::from([
            ("m1".to_string(), vec!["e1".to_string(), "e2".to_string()]),
            ("m2".to_string(), vec!["e1".to_string(), "e2".to_string()]),
        ]);
        s.scheme = build_hot_potato(&s, &paths, &dags).unwrap();
        let comp = crate::compiled::Compiled::new(&s).unwrap();
        let ctx = Ctx {
            vertex: comp.vert_idx["u"],
            queue: 0b11,
            active: 0b11,
        };
        let mut st = EvalState::new(&comp);
        assert_eq!(st.output(&ctx).unwrap(), vec![(0, 0), (1, 1)]);
        // Only e2 active: m1 takes it, m2 is stuck.
        let ctx = Ctx {
            vertex: comp.vert_idx["u"],
            queue: 0b11,
            active: 0b10,
        };
        let mut st = EvalState::new(&comp);
        assert_eq!(st.output(&ctx).unwrap(), vec![(0, 1)]);
    }

    #[test]
    fn hot_potato_rejects_broken_path() {
        let s = fixtures::unit_link();
        let paths = BTreeMap::from([("m1".to_string(), vec![])]);
        let dags = BTreeMap::from([("m1".to_string(), vec!["e1".to_string()])]);
        match build_hot_potato(&s, &paths, &dags) {
            Err(SchemeError::PathInvalid { .. }) => {}
            other => panic!("expected path error, got {other:?}"),
        }
    }

    #[test]
    fn hot_potato_rejects_fallbacks_missing_path_vertex() {
        // Path u -> w -> v but fallbacks only cover w.
        let mut s = fixtures::unit_link();
        s.network.vertices.push("w".into());
        s.network.edges = vec![
            crate::model::Edge {
                id: "e1".into(),
                from: "u".into(),
                to: "w".into(),
                p_crash: 0.0,
                p_omit: 0.0,
            },
            crate::model::Edge {
                id: "e2".into(),
                from: "w".into(),
                to: "v".into(),
                p_crash: 0.0,
                p_omit: 0.0,
            },
        ];
        s.network.out_order = BTreeMap::from([
            ("u".into(), vec!["e1".into()]),
            ("w".into(), vec!["e2".into()]),
            ("v".into(), vec![]),
        ]);
        s.timeout = 2;
        let paths = BTreeMap::from([("m1".to_string(), vec!["e1".to_string(), "e2".to_string()])]);
        let dags = BTreeMap::from([("m1".to_string(), vec!["e2".to_string()])]);
        match build_hot_potato(&s, &paths, &dags) {
            Err(SchemeError::FallbackInvalid { reason, .. }) => {
                assert!(reason.contains("no fallback out-edge"), "{reason}");
            }
            other => panic!("expected fallback error, got {other:?}"),
        }
    }

    /// Relay network: m1 goes u -> v -> w, m2 goes u -> v later, sharing e1.
    fn relay_scenario() -> crate::model::Scenario {
        use crate::model::{Edge, FaultModel, MessageSpec, Network, Scenario};
        let network = Network {
            vertices: vec!["u".into(), "v".into(), "w".into()],
            edges: vec![
                Edge {
                    id: "e1".into(),
                    from: "u".into(),
                    to: "v".into(),
                    p_crash: 0.0,
                    p_omit: 0.0,
                },
                Edge {
                    id: "e2".into(),
                    from: "v".into(),
                    to: "w".into(),
                    p_crash: 0.0,
                    p_omit: 0.0,
                },
            ],
            out_order: BTreeMap::from([
                ("u".into(), vec!["e1".into()]),
                ("v".into(), vec!["e2".into()]),
                ("w".into(), vec![]),
            ]),
        };
        Scenario {
            network,
            messages: vec![
                MessageSpec {
                    id: "m1".into(),
                    source: "u".into(),
                    target: "w".into(),
                },
                MessageSpec {
                    id: "m2".into(),
                    source: "u".into(),
                    target: "v".into(),
                },
            ],
            scheme: ForwardingScheme::empty(),
            timeout: 3,
            guarantee: 2,
            fault_model: FaultModel::Temporary,
        }
    }

    #[test]
    fn schedule_builder_accepts_waiting_only_while_edge_is_busy() {
        let mut s = relay_scenario();
        let schedule = TtSchedule {
            slots: vec![
                vec![("m1".into(), "e1".into())],
                vec![("m1".into(), "e2".into()), ("m2".into(), "e1".into())],
            ],
        };
        s.scheme = build_from_tt_schedule(&s, &schedule).unwrap();
        // m2 waited at u in slot 1 while m1 used e1: accepted, and at u the
        // earlier-departing m1 has priority.
        let comp = crate::compiled::Compiled::new(&s).unwrap();
        let ctx = Ctx {
            vertex: comp.vert_idx["u"],
            queue: 0b11,
            active: 0b1,
        };
        let mut st = EvalState::new(&comp);
        assert_eq!(st.output(&ctx).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn schedule_builder_rejects_redundant_waiting() {
        let s = relay_scenario();
        let schedule = TtSchedule {
            slots: vec![
                vec![("m1".into(), "e1".into())],
                vec![("m1".into(), "e2".into())],
                vec![("m2".into(), "e1".into())],
            ],
        };
        match build_from_tt_schedule(&s, &schedule) {
            Err(SchemeError::ScheduleInvalid(reason)) => {
                assert!(reason.contains("waits"), "{reason}");
            }
            other => panic!("expected schedule error, got {other:?}"),
        }
    }

    #[test]
    fn schedule_builder_rejects_link_conflicts_and_teleports() {
        let s = relay_scenario();
        let conflict = TtSchedule {
            slots: vec![vec![
                ("m1".into(), "e1".into()),
                ("m2".into(), "e1".into()),
            ]],
        };
        assert!(matches!(
            build_from_tt_schedule(&s, &conflict),
            Err(SchemeError::ScheduleInvalid(_))
        ));
        let teleport = TtSchedule {
            slots: vec![vec![("m1".into(), "e2".into())]],
        };
        assert!(matches!(
            build_from_tt_schedule(&s, &teleport),
            Err(SchemeError::ScheduleInvalid(_))
        ));
    }

    #[test]
    fn schedule_builder_requires_arrival() {
        let s = relay_scenario();
        let incomplete = TtSchedule {
            slots: vec![vec![("m1".into(), "e1".into())]],
        };
        match build_from_tt_schedule(&s, &incomplete) {
            Err(SchemeError::ScheduleInvalid(reason)) => {
                assert!(reason.contains("target"), "{reason}");
            }
            other => panic!("expected schedule error, got {other:?}"),
        }
    }
}
