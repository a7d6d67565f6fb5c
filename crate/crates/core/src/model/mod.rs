//! Network, message and scenario types plus structural validation.
//!
//! A [`Network`] is a directed graph with string-identified vertices and
//! edges. Parallel edges are allowed; every edge carries its own crash and
//! omission probabilities. Each vertex fixes an order over its outgoing edges
//! (`out_order`), and scheme rules address edges *positionally* against that
//! order: index `i` in a rule means the `i`-th outgoing edge (1-based) of
//! whichever vertex the rule is evaluated at, so out-degrees may differ per
//! vertex.
//!
//! [`validate_scenario`] returns a list of [`Violation`]s; an empty list means
//! the scenario satisfies every structural invariant and its scheme is
//! deterministic on every reachable queue/active-set combination.

mod generate;
mod io;

pub use generate::{generate_random_scenario, GenerateError};
pub use io::{load_scenario, parse_scenario, save_scenario, scenario_to_json, LoadError};

use serde::{Deserialize, Serialize};

use crate::scheme::ForwardingScheme;

/// Directed edge with its fault probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Probability that the edge crashes in a slot (temporary fault model) or
    /// that a surviving edge crashes in a slot (permanent fault model).
    pub p_crash: f64,
    /// Probability that a message sent over the (active) edge is dropped and
    /// returned to the sender's queue.
    pub p_omit: f64,
}

/// Directed network with a fixed order over each vertex's outgoing edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub vertices: Vec<String>,
    pub edges: Vec<Edge>,
    /// Vertex id -> its outgoing edge ids, in rule-index order. Every vertex
    /// appears, even with an empty list.
    pub out_order: std::collections::BTreeMap<String, Vec<String>>,
}

/// A message to be routed from `source` to `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageSpec {
    pub id: String,
    pub source: String,
    pub target: String,
}

/// Whether crashed edges recover between slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultModel {
    /// Every edge is re-drawn each slot, independently.
    Temporary,
    /// A crashed edge stays crashed; each surviving edge crashes per slot
    /// with its `p_crash`.
    Permanent,
}

/// Everything the scoring engines need: network, messages, scheme, fault
/// model, timeout and arrival guarantee.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: Network,
    pub messages: Vec<MessageSpec>,
    pub scheme: ForwardingScheme,
    /// Number of slots messages have to arrive (`t >= 1`).
    pub timeout: u32,
    /// Minimum number of on-time arrivals counted as success (`1 <= l <= |M|`).
    pub guarantee: u32,
    pub fault_model: FaultModel,
}

/// One structural or semantic defect found by validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Where the problem is, e.g. `edge e3` or `rule 2 at vertex v`.
    pub location: String,
    pub message: String,
}

impl Violation {
    pub fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

fn probability_ok(p: f64) -> bool {
    p.is_finite() && (0.0..=1.0).contains(&p)
}

/// Ids must survive embedding in rule text: non-empty, no whitespace or
/// parentheses, and not the reserved element hole `_`.
pub(crate) fn id_is_atom(id: &str) -> bool {
    !id.is_empty()
        && id != "_"
        && !id
            .chars()
            .any(|c| c.is_whitespace() || c == '(' || c == ')')
}

/// Checks every scenario invariant and returns the violations found.
///
/// Covers: unique ids, edge endpoints and message endpoints exist, `out_order`
/// is a permutation of each vertex's outgoing edges, probabilities lie in
/// `[0, 1]`, `timeout >= 1`, `1 <= guarantee <= |messages|`, distinct message
/// source/target, and everything [`crate::scheme::validate_scheme`] checks.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for v in &s.network.vertices {
        if !seen.insert(v.as_str()) {
            out.push(Violation {
                location: format!("vertex {v}"),
                message: "duplicate vertex id".into(),
            });
        }
        if !id_is_atom(v) {
            out.push(Violation {
                location: format!("vertex {v:?}"),
                message: "id must be a non-empty token without whitespace, parentheses, or '_'"
                    .into(),
            });
        }
    }
    let vertex_ok = |v: &str| s.network.vertices.iter().any(|x| x == v);

    let mut edge_ids = std::collections::BTreeSet::new();
    for e in &s.network.edges {
        if !edge_ids.insert(e.id.as_str()) {
            out.push(Violation {
                location: format!("edge {}", e.id),
                message: "duplicate edge id".into(),
            });
        }
        if !id_is_atom(&e.id) {
            out.push(Violation {
                location: format!("edge {:?}", e.id),
                message: "id must be a non-empty token without whitespace, parentheses, or '_'"
                    .into(),
            });
        }
        for (end, name) in [(&e.from, "from"), (&e.to, "to")] {
            if !vertex_ok(end) {
                out.push(Violation {
                    location: format!("edge {}", e.id),
                    message: format!("{name} references undeclared vertex {end}"),
                });
            }
        }
        if !probability_ok(e.p_crash) {
            out.push(Violation {
                location: format!("edge {}", e.id),
                message: format!("p_crash {} outside [0, 1]", e.p_crash),
            });
        }
        if !probability_ok(e.p_omit) {
            out.push(Violation {
                location: format!("edge {}", e.id),
                message: format!("p_omit {} outside [0, 1]", e.p_omit),
            });
        }
    }

    // out_order must list exactly the outgoing edges of each vertex, once.
    for v in &s.network.vertices {
        let expected: std::collections::BTreeSet<&str> = s
            .network
            .edges
            .iter()
            .filter(|e| &e.from == v)
            .map(|e| e.id.as_str())
            .collect();
        match s.network.out_order.get(v) {
            None => out.push(Violation {
                location: format!("out_order[{v}]"),
                message: "vertex missing from out_order".into(),
            }),
            Some(order) => {
                let got: std::collections::BTreeSet<&str> =
                    order.iter().map(|x| x.as_str()).collect();
                if got.len() != order.len() {
                    out.push(Violation {
                        location: format!("out_order[{v}]"),
                        message: "repeated edge id".into(),
                    });
                } else if got != expected {
                    out.push(Violation {
                        location: format!("out_order[{v}]"),
                        message: "entries are not exactly the outgoing edges of the vertex".into(),
                    });
                }
            }
        }
    }
    for v in s.network.out_order.keys() {
        if !vertex_ok(v) {
            out.push(Violation {
                location: format!("out_order[{v}]"),
                message: "undeclared vertex".into(),
            });
        }
    }

    let mut msg_ids = std::collections::BTreeSet::new();
    for m in &s.messages {
        if !msg_ids.insert(m.id.as_str()) {
            out.push(Violation {
                location: format!("message {}", m.id),
                message: "duplicate message id".into(),
            });
        }
        if !id_is_atom(&m.id) {
            out.push(Violation {
                location: format!("message {:?}", m.id),
                message: "id must be a non-empty token without whitespace, parentheses, or '_'"
                    .into(),
            });
        }
        for (end, name) in [(&m.source, "source"), (&m.target, "target")] {
            if !vertex_ok(end) {
                out.push(Violation {
                    location: format!("message {}", m.id),
                    message: format!("{name} references undeclared vertex {end}"),
                });
            }
        }
        if m.source == m.target {
            out.push(Violation {
                location: format!("message {}", m.id),
                message: "source equals target".into(),
            });
        }
    }

    if s.timeout == 0 {
        out.push(Violation {
            location: "timeout".into(),
            message: "timeout must be at least 1".into(),
        });
    }
    if s.guarantee == 0 || s.guarantee as usize > s.messages.len() {
        out.push(Violation {
            location: "guarantee".into(),
            message: format!(
                "guarantee {} outside 1..={}",
                s.guarantee,
                s.messages.len()
            ),
        });
    }

    // Scheme checks only make sense on a structurally sound base.
    if out.is_empty() {
        out.extend(crate::scheme::validate_scheme(s));
    }
    out
}


#[cfg(any(test, feature = "fixtures"))]
pub mod fixtures {
    //! Tiny scenarios shared by tests across the workspace.

    use super::*;
    use crate::scheme::build_hot_potato;
    use std::collections::BTreeMap;

    /// One edge `u -> v`, one message, `t = 1`, `l = 1`, temporary faults with
    /// `p_crash = 0.1` and `p_omit = 0.05`. Score: `0.9 * 0.95 = 0.855`.
    pub fn unit_link() -> Scenario {
        let network = Network {
            vertices: vec!["u".into(), "v".into()],
            edges: vec![Edge {
                id: "e1".into(),
                from: "u".into(),
                to: "v".into(),
                p_crash: 0.1,
                p_omit: 0.05,
            }],
            out_order: BTreeMap::from([("u".into(), vec!["e1".into()]), ("v".into(), vec![])]),
        };
        let messages = vec![MessageSpec {
            id: "m1".into(),
            source: "u".into(),
            target: "v".into(),
        }];
        let mut s = Scenario {
            scheme: ForwardingScheme::empty(),
            network,
            messages,
            timeout: 1,
            guarantee: 1,
            fault_model: FaultModel::Temporary,
        };
        let first_choice = BTreeMap::from([("m1".to_string(), vec!["e1".to_string()])]);
        let fallbacks = BTreeMap::from([("m1".to_string(), vec!["e1".to_string()])]);
        s.scheme = build_hot_potato(&s, &first_choice, &fallbacks).expect("fixture scheme");
        s
    }

    /// Two parallel edges `u -> v`, one message, `t = 1`, `l = 1`.
    ///
    /// With temporary faults, `p_crash = 0.5` on both edges and no omissions
    /// the score is `0.75`; with permanent faults and `p_crash = 0.1` it is
    /// `0.99`.
    pub fn parallel_two(fault_model: FaultModel, p_crash: f64) -> Scenario {
        let network = Network {
            vertices: vec!["u".into(), "v".into()],
            edges: vec![
                Edge {
                    id: "e1".into(),
                    from: "u".into(),
                    to: "v".into(),
                    p_crash,
                    p_omit: 0.0,
                },
                Edge {
                    id: "e2".into(),
                    from: "u".into(),
                    to: "v".into(),
                    p_crash,
                    p_omit: 0.0,
                },
            ],
            out_order: BTreeMap::from([
                ("u".into(), vec!["e1".into(), "e2".into()]),
                ("v".into(), vec![]),
            ]),
        };
        let messages = vec![MessageSpec {
            id: "m1".into(),
            source: "u".into(),
            target: "v".into(),
        }];
        let mut s = Scenario {
            scheme: ForwardingScheme::empty(),
            network,
            messages,
            timeout: 1,
            guarantee: 1,
            fault_model,
        };
        let first_choice = BTreeMap::from([("m1".to_string(), vec!["e1".to_string()])]);
        let fallbacks = BTreeMap::from([(
            "m1".to_string(),
            vec!["e1".to_string(), "e2".to_string()],
        )]);
        s.scheme = build_hot_potato(&s, &first_choice, &fallbacks).expect("fixture scheme");
        s
    }

    /// Small random scenario for oracle cross-checks: at most 4 vertices,
    /// 6 edges, 2 messages, and 3 slots; crash and omission probabilities
    /// drawn from `{0, 0.1, 0.5, 1}`; either fault model; alternating between
    /// hot-potato and randomized waiting schemes. Pure function of the seed.
    pub fn small_random(seed: u64) -> Scenario {
        use crate::model::generate::random_routed_scenario;
        use crate::scheme::waiting_rules;
        use rand::seq::SliceRandom;
        use rand::Rng;
        use rand::SeedableRng;

        // Sparse graphs often leave a message unroutable; re-draw with a
        // derived stream so the result stays deterministic in the seed.
        for attempt in 0u64.. {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(
                seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            );
            let nv = rng.gen_range(2..=4);
            let ne = rng.gen_range(1..=6);
            let nm = rng.gen_range(1..=2);
            let t = rng.gen_range(1..=3);
            let Ok(mut s) = random_routed_scenario(nv, ne, nm, t, &mut rng) else {
                continue;
            };
            let fates = [0.0, 0.1, 0.5, 1.0];
            for e in &mut s.network.edges {
                e.p_crash = fates[rng.gen_range(0..fates.len())];
                e.p_omit = fates[rng.gen_range(0..fates.len())];
            }
            s.fault_model = if rng.gen_bool(0.5) {
                FaultModel::Permanent
            } else {
                FaultModel::Temporary
            };
            s.guarantee = rng.gen_range(1..=s.messages.len() as u32);
            if rng.gen_bool(0.5) {
                let ids: Vec<String> = s.messages.iter().map(|m| m.id.clone()).collect();
                let max_degree = s.network.out_order.values().map(Vec::len).max().unwrap_or(0);
                let (set_defs, rules) = waiting_rules(&ids, max_degree);
                let mut msg_priority = BTreeMap::new();
                for v in &s.network.vertices {
                    let mut order = ids.clone();
                    order.shuffle(&mut rng);
                    msg_priority.insert(v.clone(), order);
                }
                let mut edge_pref = BTreeMap::new();
                for m in &ids {
                    let mut per = BTreeMap::new();
                    for (v, out) in &s.network.out_order {
                        if out.is_empty() {
                            continue;
                        }
                        let mut order = out.clone();
                        order.shuffle(&mut rng);
                        per.insert(v.clone(), order);
                    }
                    edge_pref.insert(m.clone(), per);
                }
                s.scheme = ForwardingScheme { set_defs, rules, msg_priority, edge_pref };
            }
            return s;
        }
        unreachable!("some attempt produces a routable topology")
    }
}
