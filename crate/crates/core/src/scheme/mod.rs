//! Forwarding schemes: rules, named set definitions, and priority orders.
//!
//! A scheme is a global rule list. Each rule has a guard assertion over the
//! local state of a vertex (queued messages, active outgoing edges) and an
//! action `forward(m, i)` naming a message and a positional out-edge index.
//! In every slot, every vertex fires all rules whose guard holds and whose
//! subject message is queued there; a fired forward on an inactive edge or
//! for an already-delivered message is suppressed. After suppression the
//! output must be deterministic: a message may leave on at most one edge and
//! an edge may carry at most one message, otherwise the scheme is rejected.
//!
//! Guards may mention named sets, defined either as comprehensions
//! `{x : body(x)}` — ranging over all messages or over the vertex's
//! out-edges, with the body doing any queue/activity restriction — or as
//! boolean combinations of earlier sets. Sets are evaluated per vertex and
//! slot, lazily: a set definition is only evaluated when some applicable
//! rule reaches it, so templates indexed past a vertex's degree never trip
//! the range check there.

mod builders;
pub(crate) mod eval;
pub(crate) mod sexpr;

pub use builders::{build_from_tt_schedule, build_hot_potato, TtSchedule};
pub(crate) use builders::waiting_rules;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::compiled::Compiled;
use crate::model::{Scenario, Violation};

/// Message position in an assertion: a concrete id or the comprehension hole.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum MsgTerm {
    /// The bound element `_` of the enclosing message comprehension.
    Elem,
    Id(String),
}

/// Edge position in an assertion: a 1-based positional index or the hole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeTerm {
    /// The bound element `_` of the enclosing edge comprehension.
    Elem,
    Index(u32),
}

/// Guard assertion over the local state of a vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Assertion {
    /// Message is queued at the vertex.
    Present(MsgTerm),
    /// The i-th outgoing edge has not crashed.
    Active(EdgeTerm),
    /// Left message has lower priority than the right one at this vertex.
    MsgLess(MsgTerm, MsgTerm),
    /// The message ranks the first edge below the second.
    EdgeLess(EdgeTerm, EdgeTerm, MsgTerm),
    Or(Box<Assertion>, Box<Assertion>),
    Not(Box<Assertion>),
    /// Membership in a named message set.
    InMsgSet(String, MsgTerm),
    /// Membership in a named edge set.
    InEdgeSet(String, EdgeTerm),
    /// Message is in the set and outranks every other member.
    Priority(MsgTerm, String),
    /// Message ranks the edge above every other edge in the set.
    Prefers(MsgTerm, EdgeTerm, String),
}

impl Assertion {
    /// Conjunction, desugared to `not(or(not a, not b))`.
    pub fn and(a: Assertion, b: Assertion) -> Assertion {
        Assertion::Not(Box::new(Assertion::Or(
            Box::new(Assertion::Not(Box::new(a))),
            Box::new(Assertion::Not(Box::new(b))),
        )))
    }

    /// Implication, desugared to `or(not a, b)`.
    pub fn implies(a: Assertion, b: Assertion) -> Assertion {
        Assertion::Or(Box::new(Assertion::Not(Box::new(a))), Box::new(b))
    }

    /// Left fold of [`Assertion::and`] over a non-empty list.
    pub fn and_all(parts: Vec<Assertion>) -> Assertion {
        let mut it = parts.into_iter();
        let first = it.next().expect("and_all over empty list");
        it.fold(first, Assertion::and)
    }

    /// Left fold of `or` over a non-empty list.
    pub fn or_all(parts: Vec<Assertion>) -> Assertion {
        let mut it = parts.into_iter();
        let first = it.next().expect("or_all over empty list");
        it.fold(first, |a, b| Assertion::Or(Box::new(a), Box::new(b)))
    }
}

impl Serialize for Assertion {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&sexpr::print(self))
    }
}

impl<'de> Deserialize<'de> for Assertion {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        sexpr::parse(&s).map_err(serde::de::Error::custom)
    }
}

impl std::fmt::Display for Assertion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&sexpr::print(self))
    }
}

/// Whether a named set collects messages or out-edge indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    Messages,
    Edges,
}

/// Body of a named set definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetBody {
    /// `{x : assertion(x)}` with `_` as the bound element.
    Comprehension(Assertion),
    /// Union of two earlier sets of the same kind.
    Union(String, String),
    /// Intersection of two earlier sets of the same kind.
    Inter(String, String),
    /// Difference of two earlier sets of the same kind.
    Diff(String, String),
}

/// Named set definition; bodies may reference earlier definitions only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetDef {
    pub name: String,
    pub kind: SetKind,
    pub body: SetBody,
}

/// One forwarding rule: `guard -> forward(message, edge_index)`.
///
/// The edge index is 1-based and positional; a rule is skipped at vertices
/// with fewer outgoing edges than the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub guard: Assertion,
    pub message: String,
    pub edge_index: u32,
}

/// A complete scheme: set definitions, rules, and the two priority orders.
///
/// `msg_priority[v]` lists every message id, highest priority last.
/// `edge_pref[m][v]` lists the out-edge ids of `v`, most preferred last.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardingScheme {
    pub set_defs: Vec<SetDef>,
    pub rules: Vec<Rule>,
    pub msg_priority: BTreeMap<String, Vec<String>>,
    pub edge_pref: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

impl ForwardingScheme {
    /// Scheme with no rules and no orders; only valid for empty networks.
    pub fn empty() -> Self {
        Self::default()
    }
}

/// Rejection reasons for schemes and their evaluation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchemeError {
    #[error("unknown {kind} id {id:?}")]
    UnknownId { kind: &'static str, id: String },
    #[error("unknown set {0:?}")]
    UnknownSet(String),
    #[error("set {set:?} references a set defined later or itself")]
    ForwardSetReference { set: String },
    #[error("set {set:?} used where a {expected} set is required")]
    SetKindMismatch { set: String, expected: &'static str },
    #[error("element hole '_' used outside a matching comprehension")]
    ElemOutsideComprehension,
    #[error("edge index {index} out of range at vertex {vertex:?} (degree {degree})")]
    EdgeIndexOutOfRange {
        index: u32,
        vertex: String,
        degree: usize,
    },
    #[error("message priority at vertex {vertex:?} is not a permutation of all messages")]
    BadMsgPriority { vertex: String },
    #[error("edge preference for message {message:?} at vertex {vertex:?} is not a permutation of its out-edges")]
    BadEdgePref { message: String, vertex: String },
    #[error("nondeterministic output at vertex {vertex:?}: {detail}")]
    Conflict { vertex: String, detail: String },
    #[error("path for message {message:?} is invalid: {reason}")]
    PathInvalid { message: String, reason: String },
    #[error("fallback structure for message {message:?} is invalid: {reason}")]
    FallbackInvalid { message: String, reason: String },
    #[error("schedule is invalid: {0}")]
    ScheduleInvalid(String),
    #[error("instance too large: {0}")]
    TooLarge(String),
}

/// Evaluate an assertion at `vertex` against a queue and an active-edge set.
///
/// `queue` holds message ids, `active` holds out-edge ids of the vertex.
/// The assertion must be closed (no `_` hole).
pub fn eval_assertion(
    scenario: &Scenario,
    vertex: &str,
    queue: &BTreeSet<String>,
    active: &BTreeSet<String>,
    assertion: &Assertion,
) -> Result<bool, SchemeError> {
    let comp = Compiled::new(scenario)?;
    let ctx = eval::Ctx::from_ids(&comp, vertex, queue, active)?;
    let compiled_assertion = comp.compile_assertion(assertion, None)?;
    let mut state = eval::EvalState::new(&comp);
    state.eval(&ctx, &compiled_assertion, eval::Elem::None)
}

/// Deterministic forwarding output of a vertex for one slot.
///
/// Returns `(message id, edge id)` pairs after suppression of forwards on
/// inactive edges and of messages already at their target, sorted by message.
pub fn forwarding_output(
    scenario: &Scenario,
    vertex: &str,
    queue: &BTreeSet<String>,
    active: &BTreeSet<String>,
) -> Result<Vec<(String, String)>, SchemeError> {
    let comp = Compiled::new(scenario)?;
    let ctx = eval::Ctx::from_ids(&comp, vertex, queue, active)?;
    let mut state = eval::EvalState::new(&comp);
    let fired = state.output(&ctx)?;
    Ok(fired
        .into_iter()
        .map(|(m, local)| {
            let e = comp.out_edges[ctx.vertex][local as usize];
            (
                comp.scenario.messages[m].id.clone(),
                comp.scenario.network.edges[e].id.clone(),
            )
        })
        .collect())
}

/// Largest `|messages| + degree` for which vertex state is enumerated fully.
const EXHAUSTIVE_BITS: u32 = 20;

/// Structural and behavioural checks with a coverage flag.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeCheck {
    pub violations: Vec<Violation>,
    /// False when some vertex had too many state combinations and was only
    /// spot-checked on a deterministic sample.
    pub exhaustive: bool,
}

/// Check a scheme against its scenario; see [`check_scheme`] for coverage.
pub fn validate_scheme(scenario: &Scenario) -> Vec<Violation> {
    check_scheme(scenario).violations
}

/// Full scheme check: orders, set definitions, rule references, and
/// per-vertex determinism over all (or sampled) queue/active combinations.
pub fn check_scheme(scenario: &Scenario) -> SchemeCheck {
    let mut violations = Vec::new();
    let scheme = &scenario.scheme;

    let msg_ids: BTreeSet<&str> = scenario.messages.iter().map(|m| m.id.as_str()).collect();

    // Priority orders must be total per vertex.
    for v in &scenario.network.vertices {
        match scheme.msg_priority.get(v) {
            None => violations.push(Violation::new(
                format!("scheme.msg_priority.{v}"),
                "missing message priority order",
            )),
            Some(order) => {
                let listed: BTreeSet<&str> = order.iter().map(|s| s.as_str()).collect();
                if listed != msg_ids || order.len() != msg_ids.len() {
                    violations.push(Violation::new(
                        format!("scheme.msg_priority.{v}"),
                        "order is not a permutation of all message ids",
                    ));
                }
            }
        }
    }
    for v in scheme.msg_priority.keys() {
        if !scenario.network.vertices.contains(v) {
            violations.push(Violation::new(
                format!("scheme.msg_priority.{v}"),
                "order given for undeclared vertex",
            ));
        }
    }

    // Edge preferences must be a permutation of out(v) per message and vertex.
    for m in &scenario.messages {
        let per_msg = scheme.edge_pref.get(&m.id);
        for v in &scenario.network.vertices {
            let out = scenario
                .network
                .out_order
                .get(v)
                .cloned()
                .unwrap_or_default();
            if out.is_empty() {
                continue;
            }
            let order = per_msg.and_then(|p| p.get(v));
            match order {
                None => violations.push(Violation::new(
                    format!("scheme.edge_pref.{}.{v}", m.id),
                    "missing edge preference order",
                )),
                Some(order) => {
                    let listed: BTreeSet<&str> = order.iter().map(|s| s.as_str()).collect();
                    let expect: BTreeSet<&str> = out.iter().map(|s| s.as_str()).collect();
                    if listed != expect || order.len() != out.len() {
                        violations.push(Violation::new(
                            format!("scheme.edge_pref.{}.{v}", m.id),
                            "order is not a permutation of the vertex out-edges",
                        ));
                    }
                }
            }
        }
    }
    for m in scheme.edge_pref.keys() {
        if !msg_ids.contains(m.as_str()) {
            violations.push(Violation::new(
                format!("scheme.edge_pref.{m}"),
                "preference given for undeclared message",
            ));
        }
    }

    // Set names must be unique and atom-safe.
    let mut seen = BTreeSet::new();
    for def in &scheme.set_defs {
        if !crate::model::id_is_atom(&def.name) {
            violations.push(Violation::new(
                format!("scheme.set_defs.{}", def.name),
                "set name must be a non-empty token without whitespace, parentheses, or '_'",
            ));
        }
        if !seen.insert(def.name.as_str()) {
            violations.push(Violation::new(
                format!("scheme.set_defs.{}", def.name),
                "duplicate set name",
            ));
        }
    }

    if !violations.is_empty() {
        // Reference/kind checks below assume the orders are well-formed.
        return SchemeCheck {
            violations,
            exhaustive: true,
        };
    }

    // Compile: resolves ids, set references, kinds, and hole usage.
    let comp = match Compiled::new(scenario) {
        Ok(c) => c,
        Err(e) => {
            return SchemeCheck {
                violations: vec![Violation::new("scheme", e.to_string())],
                exhaustive: true,
            };
        }
    };

    // Behavioural check: run every vertex over its local state space and
    // collect evaluation errors, conflicts, and fires on inactive edges.
    let mut exhaustive = true;
    let nm = comp.nm as u32;
    let mut reported = BTreeSet::new();
    for v in 0..comp.nv {
        let d = comp.out_edges[v].len() as u32;
        let states: Vec<(u64, u64)> = if nm + d <= EXHAUSTIVE_BITS {
            let mut all = Vec::with_capacity(1usize << (nm + d));
            for queue in 0..(1u64 << nm) {
                for active in 0..(1u64 << d) {
                    all.push((queue, active));
                }
            }
            all
        } else {
            exhaustive = false;
            sampled_states(nm, d, 4096)
        };
        for (queue, active) in states {
            let ctx = eval::Ctx {
                vertex: v,
                queue,
                active,
            };
            let mut state = eval::EvalState::new(&comp);
            match state.fired(&ctx) {
                Err(e) => {
                    let key = (v, e.to_string());
                    if reported.insert(key.clone()) {
                        violations.push(Violation::new(
                            format!("scheme.rules@{}", comp.scenario.network.vertices[v]),
                            key.1,
                        ));
                    }
                }
                Ok(fired) => {
                    for &(m, local) in &fired {
                        if active & (1 << local) == 0 {
                            let key = (v, format!("fires message {:?} on inactive edge index {}", comp.scenario.messages[m].id, local + 1));
                            if reported.insert(key.clone()) {
                                violations.push(Violation::new(
                                    format!("scheme.rules@{}", comp.scenario.network.vertices[v]),
                                    key.1,
                                ));
                            }
                        }
                    }
                    if let Err(e) = eval::suppress_and_check(&comp, &ctx, fired) {
                        let key = (v, e.to_string());
                        if reported.insert(key.clone()) {
                            violations.push(Violation::new(
                                format!("scheme.rules@{}", comp.scenario.network.vertices[v]),
                                key.1,
                            ));
                        }
                    }
                }
            }
        }
    }

    SchemeCheck {
        violations,
        exhaustive,
    }
}

/// Deterministic spot sample of (queue, active) masks for large vertices.
fn sampled_states(nm: u32, d: u32, count: usize) -> Vec<(u64, u64)> {
    let mut x = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        x = x.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    };
    let mmask = (1u64 << nm) - 1;
    let dmask = if d == 0 { 0 } else { (1u64 << d) - 1 };
    (0..count).map(|_| (next() & mmask, next() & dmask)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;

    #[test]
    fn serde_round_trips_scheme() {
        let s = fixtures::unit_link();
        let json = serde_json::to_string_pretty(&s.scheme).unwrap();
        let back: ForwardingScheme = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s.scheme);
    }

    #[test]
    fn eval_assertion_on_unit_link() {
        let s = fixtures::unit_link();
        let queue: BTreeSet<String> = ["m1".to_string()].into();
        let active: BTreeSet<String> = ["e1".to_string()].into();
        let a = sexpr::parse("(and (present m1) (active 1))").unwrap();
        assert!(eval_assertion(&s, "u", &queue, &active, &a).unwrap());
        let empty = BTreeSet::new();
        assert!(!eval_assertion(&s, "u", &queue, &empty, &a).unwrap());
    }

    #[test]
    fn forwarding_output_suppresses_inactive() {
        let s = fixtures::unit_link();
        let queue: BTreeSet<String> = ["m1".to_string()].into();
        let active: BTreeSet<String> = ["e1".to_string()].into();
        assert_eq!(
            forwarding_output(&s, "u", &queue, &active).unwrap(),
            vec![("m1".to_string(), "e1".to_string())]
        );
        let empty = BTreeSet::new();
        assert_eq!(forwarding_output(&s, "u", &queue, &empty).unwrap(), vec![]);
    }

    #[test]
    fn fixture_schemes_check_clean_and_exhaustive() {
        for s in [
            fixtures::unit_link(),
            fixtures::parallel_two(crate::model::FaultModel::Temporary, 0.5),
        ] {
            let check = check_scheme(&s);
            assert!(check.violations.is_empty(), "{:?}", check.violations);
            assert!(check.exhaustive);
        }
    }

    #[test]
    fn conflicting_rules_are_rejected() {
        let mut s = fixtures::parallel_two(crate::model::FaultModel::Temporary, 0.5);
        // A second rule forwarding the same message on the other edge in the
        // same situations makes the output nondeterministic.
        s.scheme.rules.push(Rule {
            guard: sexpr::parse("(present m1)").unwrap(),
            message: "m1".into(),
            edge_index: 1,
        });
        s.scheme.rules.push(Rule {
            guard: sexpr::parse("(present m1)").unwrap(),
            message: "m1".into(),
            edge_index: 2,
        });
        let report = validate_scheme(&s);
        assert!(
            report.iter().any(|v| v.message.contains("ondeterministic")),
            "{report:?}"
        );
    }

    #[test]
    fn unknown_set_reference_is_reported() {
        let mut s = fixtures::unit_link();
        s.scheme.rules.push(Rule {
            guard: sexpr::parse("(in-msgs nosuch m1)").unwrap(),
            message: "m1".into(),
            edge_index: 1,
        });
        let report = validate_scheme(&s);
        assert!(report.iter().any(|v| v.message.contains("unknown set")), "{report:?}");
    }

    #[test]
    fn out_of_range_guard_index_is_reported() {
        let mut s = fixtures::unit_link();
        // Action index 1 keeps the rule applicable at degree-1 vertex u, but
        // the guard mentions index 2 which is out of range there.
        s.scheme.rules.push(Rule {
            guard: sexpr::parse("(active 2)").unwrap(),
            message: "m1".into(),
            edge_index: 1,
        });
        let report = validate_scheme(&s);
        assert!(
            report.iter().any(|v| v.message.contains("out of range")),
            "{report:?}"
        );
    }
}
