//! Reduction from 3CNF model counting to scoring.
//!
//! [`reduce_3cnf`] compiles a formula into a scenario in which slot-1 crash
//! coins pick a truth assignment (one fair coin per variable) and one clause
//! message per clause arrives on time exactly when all of its literals are
//! false. With an arrival guarantee of one message, the score equals
//! `1 - models / 2^n`, which [`model_count_via_score`] inverts. The point is
//! not practical counting — it is a machine-checked hardness witness: exact
//! scoring subsumes #3SAT, and the scoring pipeline must reproduce brute-force
//! model counts bit for bit.
//!
//! Construction sketch. Every variable gets a branch vertex with two outgoing
//! edges; the preferred one crashes with probability 1/2 in slot 1 (all other
//! edges are reliable), so the variable message commits to a "true" or a
//! "false" path. Every clause gets a private path of `t = 4k + 1` edges whose
//! `j`-th segment is crossed by the paths of its three literals, each sharing
//! one clause edge at a distinct slot. Padding edges synchronise the walks so
//! that a variable message reaches a shared edge in exactly the slot the
//! undelayed clause message wants it; variable messages outrank clause
//! messages, so a true literal makes the clause message wait one slot and
//! miss the timeout. Variable paths are one edge longer than the timeout and
//! never arrive on time themselves.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::encoder::{score_exact, EncodeError};
use crate::model::{Edge, FaultModel, MessageSpec, Network, Scenario};
use crate::scheme::{waiting_rules, ForwardingScheme};

/// Failures while parsing, validating, or counting through a reduction.
#[derive(Debug, thiserror::Error)]
pub enum ReductionError {
    /// The formula violates the 3CNF shape this reduction supports.
    #[error("malformed formula: {0}")]
    BadFormula(String),
    /// The DIMACS text could not be read as a 3CNF formula.
    #[error("dimacs parse error: {0}")]
    Parse(String),
    /// Scoring the reduced scenario failed.
    #[error(transparent)]
    Encode(#[from] EncodeError),
    /// The exact score did not invert to an integer model count.
    #[error("score inverted to {count} (residue {residue}), not an integer model count")]
    Inconsistent { count: f64, residue: f64 },
}

/// One literal: a 1-based variable index and its polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lit3 {
    pub var: u32,
    pub positive: bool,
}

impl Lit3 {
    /// True when `assignment` (bit `var - 1` holds variable `var`) satisfies the literal.
    fn satisfied_by(&self, assignment: u64) -> bool {
        ((assignment >> (self.var - 1)) & 1 == 1) == self.positive
    }
}

/// A 3CNF formula: clauses of exactly three literals over variables `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreeCnf {
    /// Number of variables; assignments are the integers `0..2^n`.
    pub n: u32,
    pub clauses: Vec<[Lit3; 3]>,
}

impl ThreeCnf {
    /// Check the shape: `1 <= n <= 63`, at least one clause, variables in range.
    pub fn validate(&self) -> Result<(), ReductionError> {
        if self.n == 0 || self.n > 63 {
            return Err(ReductionError::BadFormula(format!(
                "variable count must be in 1..=63, got {}",
                self.n
            )));
        }
        if self.clauses.is_empty() {
            return Err(ReductionError::BadFormula("formula has no clauses".into()));
        }
        for (j, clause) in self.clauses.iter().enumerate() {
            for lit in clause {
                if lit.var == 0 || lit.var > self.n {
                    return Err(ReductionError::BadFormula(format!(
                        "clause {} uses variable {} outside 1..={}",
                        j + 1,
                        lit.var,
                        self.n
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when the assignment (bit `i - 1` holds variable `i`) satisfies every clause.
    pub fn satisfied_by(&self, assignment: u64) -> bool {
        self.clauses
            .iter()
            .all(|clause| clause.iter().any(|lit| lit.satisfied_by(assignment)))
    }
}

/// Parse DIMACS CNF text whose clauses all have exactly three literals.
pub fn parse_dimacs_3cnf(text: &str) -> Result<ThreeCnf, ReductionError> {
    let mut header: Option<(u32, usize)> = None;
    let mut literals: Vec<i64> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('p') {
            if header.is_some() {
                return Err(ReductionError::Parse("duplicate problem line".into()));
            }
            let fields: Vec<&str> = rest.split_whitespace().collect();
            if fields.len() != 3 || fields[0] != "cnf" {
                return Err(ReductionError::Parse(format!(
                    "problem line must read `p cnf <vars> <clauses>`, got `{line}`"
                )));
            }
            let n = fields[1]
                .parse::<u32>()
                .map_err(|_| ReductionError::Parse(format!("bad variable count `{}`", fields[1])))?;
            let k = fields[2]
                .parse::<usize>()
                .map_err(|_| ReductionError::Parse(format!("bad clause count `{}`", fields[2])))?;
            header = Some((n, k));
            continue;
        }
        if header.is_none() {
            return Err(ReductionError::Parse("clause tokens before the problem line".into()));
        }
        for token in line.split_whitespace() {
            let lit = token
                .parse::<i64>()
                .map_err(|_| ReductionError::Parse(format!("bad literal `{token}`")))?;
            literals.push(lit);
        }
    }
    let (n, k) = header.ok_or_else(|| ReductionError::Parse("missing problem line".into()))?;
    let mut clauses = Vec::new();
    let mut current: Vec<Lit3> = Vec::new();
    for lit in literals {
        if lit == 0 {
            if current.len() != 3 {
                return Err(ReductionError::Parse(format!(
                    "clause {} has {} literals, expected exactly 3",
                    clauses.len() + 1,
                    current.len()
                )));
            }
            clauses.push([current[0], current[1], current[2]]);
            current.clear();
        } else {
            if lit.unsigned_abs() > n as u64 {
                return Err(ReductionError::Parse(format!(
                    "literal {lit} is outside the declared {n} variables"
                )));
            }
            current.push(Lit3 {
                var: lit.unsigned_abs() as u32,
                positive: lit > 0,
            });
        }
    }
    if !current.is_empty() {
        return Err(ReductionError::Parse("last clause is not terminated by 0".into()));
    }
    if clauses.len() != k {
        return Err(ReductionError::Parse(format!(
            "problem line declares {k} clauses, found {}",
            clauses.len()
        )));
    }
    let formula = ThreeCnf { n, clauses };
    formula.validate()?;
    Ok(formula)
}

fn clause_vertex(j: usize, r: u32) -> String {
    format!("c{j}_v{r}")
}

fn clause_edge(j: usize, r: u32) -> String {
    format!("c{j}_e{r}")
}

/// Network under construction: insertion-ordered vertices and per-vertex edge lists.
#[derive(Default)]
struct NetBuilder {
    vertices: Vec<String>,
    seen: BTreeSet<String>,
    edges: Vec<Edge>,
    out_order: BTreeMap<String, Vec<String>>,
}

impl NetBuilder {
    fn vertex(&mut self, id: &str) {
        if self.seen.insert(id.to_string()) {
            self.vertices.push(id.to_string());
            self.out_order.insert(id.to_string(), Vec::new());
        }
    }

    fn edge(&mut self, id: &str, from: &str, to: &str, p_crash: f64) {
        self.vertex(from);
        self.vertex(to);
        self.edges.push(Edge {
            id: id.to_string(),
            from: from.to_string(),
            to: to.to_string(),
            p_crash,
            p_omit: 0.0,
        });
        self.out_order.get_mut(from).expect("vertex registered").push(id.to_string());
    }
}

/// Record that `m`'s walk leaves `v` over `e`; a walk never needs two exits.
fn want(desired: &mut BTreeMap<(String, String), String>, m: &str, v: &str, e: &str) {
    let prev = desired.insert((m.to_string(), v.to_string()), e.to_string());
    debug_assert!(
        prev.as_deref().map_or(true, |p| p == e),
        "conflicting exits for {m} at {v}: {prev:?} vs {e}"
    );
}

/// Build one side of a variable's branch; returns the path's final vertex.
///
/// The walk leaves the branch vertex in slot 1, pads until it stands at the
/// origin of each shared clause edge exactly one slot before the undelayed
/// clause message crosses it, and finally pads past the timeout so the
/// variable message can never arrive on time.
fn build_variable_side(
    net: &mut NetBuilder,
    desired: &mut BTreeMap<(String, String), String>,
    i: u32,
    positive: bool,
    occurrences: &[(usize, u32)],
    t: u32,
) -> String {
    let side = if positive { "pos" } else { "neg" };
    let message = format!("m_x{i}");
    let src = format!("x{i}_src");
    let branch = format!("x{i}_{side}");
    let head = format!("x{i}_{side}_v0");
    let p_crash = if positive { 0.5 } else { 0.0 };
    net.vertex(&src);
    net.edge(&branch, &src, &head, p_crash);
    if positive {
        // The shared preference list at the branch puts this edge on top and
        // the other side's edge second, so a crash diverts the message there.
        want(desired, &message, &src, &branch);
    }
    let mut current = head;
    let mut time = 1u32;
    let mut pad_vertices = 0u32;
    let mut pad_edges = 0u32;
    for &(j, l) in occurrences {
        let q = (4 * j) as u32 + l - 2;
        let origin = clause_vertex(j, q - 1);
        let gap = q - 1 - time;
        for step in 1..=gap {
            let next = if step == gap {
                origin.clone()
            } else {
                pad_vertices += 1;
                format!("x{i}_{side}_v{pad_vertices}")
            };
            pad_edges += 1;
            let e = format!("x{i}_{side}_e{pad_edges}");
            net.edge(&e, &current, &next, 0.0);
            want(desired, &message, &current, &e);
            current = next;
        }
        debug_assert_eq!(current, origin, "walk must stand at the shared edge's origin");
        want(desired, &message, &current, &clause_edge(j, q));
        current = clause_vertex(j, q);
        time = q;
    }
    for _ in time..=t {
        pad_vertices += 1;
        pad_edges += 1;
        let next = format!("x{i}_{side}_v{pad_vertices}");
        let e = format!("x{i}_{side}_e{pad_edges}");
        net.edge(&e, &current, &next, 0.0);
        want(desired, &message, &current, &e);
        current = next;
    }
    current
}

/// Compile a 3CNF formula into a scenario whose score is `1 - models / 2^n`.
///
/// Timeout is `4k + 1` for `k` clauses, the guarantee is one arrival, faults
/// are temporary, and the only uncertain edges are the `n` branch edges with
/// crash probability 1/2 (only their slot-1 draw is ever observed). A clause
/// containing a variable and its negation is satisfied by every assignment;
/// its message gets an unshared path one edge longer than the timeout, which
/// realises "never on time" directly. Within a clause, literal slots are
/// assigned in ascending variable order (ties keep clause order), so a
/// repeated literal simply shares two consecutive clause edges.
pub fn reduce_3cnf(f: &ThreeCnf) -> Result<Scenario, ReductionError> {
    f.validate()?;
    let k = f.clauses.len();
    let t = 4 * k as u32 + 1;
    let mut net = NetBuilder::default();
    let mut desired: BTreeMap<(String, String), String> = BTreeMap::new();
    // (variable, polarity) -> the (clause, literal slot) pairs its path crosses.
    let mut occurrences: BTreeMap<(u32, bool), Vec<(usize, u32)>> = BTreeMap::new();
    let mut clause_len = vec![t; k];

    for (j0, clause) in f.clauses.iter().enumerate() {
        let j = j0 + 1;
        let tautological = clause
            .iter()
            .any(|a| clause.iter().any(|b| a.var == b.var && a.positive != b.positive));
        if tautological {
            clause_len[j0] = t + 1;
        }
        let message = format!("m_c{j}");
        for r in 1..=clause_len[j0] {
            let e = clause_edge(j, r);
            net.edge(&e, &clause_vertex(j, r - 1), &clause_vertex(j, r), 0.0);
            want(&mut desired, &message, &clause_vertex(j, r - 1), &e);
        }
        if !tautological {
            let mut lits = *clause;
            lits.sort_by_key(|l| l.var);
            for (l0, lit) in lits.iter().enumerate() {
                occurrences
                    .entry((lit.var, lit.positive))
                    .or_default()
                    .push((j, l0 as u32 + 1));
            }
        }
    }

    let mut messages: Vec<MessageSpec> = (1..=k)
        .map(|j| MessageSpec {
            id: format!("m_c{j}"),
            source: clause_vertex(j, 0),
            target: clause_vertex(j, clause_len[j - 1]),
        })
        .collect();
    for i in 1..=f.n {
        let mut side_end = |positive: bool| {
            let occ = occurrences.get(&(i, positive)).map(Vec::as_slice).unwrap_or(&[]);
            build_variable_side(&mut net, &mut desired, i, positive, occ, t)
        };
        let pos_end = side_end(true);
        side_end(false);
        messages.push(MessageSpec {
            id: format!("m_x{i}"),
            source: format!("x{i}_src"),
            target: pos_end,
        });
    }

    // Clause messages first, variable messages last: the shared priority list
    // reads lowest to highest, so every variable message outranks every
    // clause message and a crossing makes the clause message wait one slot.
    let message_ids: Vec<String> = messages.iter().map(|m| m.id.clone()).collect();
    let max_degree = net.out_order.values().map(Vec::len).max().unwrap_or(0);
    let (set_defs, rules) = waiting_rules(&message_ids, max_degree);
    let msg_priority: BTreeMap<String, Vec<String>> = net
        .vertices
        .iter()
        .map(|v| (v.clone(), message_ids.clone()))
        .collect();
    let mut edge_pref: BTreeMap<String, BTreeMap<String, Vec<String>>> = BTreeMap::new();
    for m in &message_ids {
        let mut per_vertex: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (v, order) in &net.out_order {
            if order.is_empty() {
                continue;
            }
            let mut pref = order.clone();
            if let Some(e) = desired.get(&(m.clone(), v.clone())) {
                pref.retain(|x| x != e);
                pref.push(e.clone());
            }
            per_vertex.insert(v.clone(), pref);
        }
        edge_pref.insert(m.clone(), per_vertex);
    }

    Ok(Scenario {
        network: Network {
            vertices: net.vertices,
            edges: net.edges,
            out_order: net.out_order,
        },
        messages,
        scheme: ForwardingScheme {
            set_defs,
            rules,
            msg_priority,
            edge_pref,
        },
        timeout: t,
        guarantee: 1,
        fault_model: FaultModel::Temporary,
    })
}

/// Count the formula's models by scoring its reduced scenario exactly.
pub fn model_count_via_score(f: &ThreeCnf) -> Result<u64, ReductionError> {
    let scenario = reduce_3cnf(f)?;
    let score = score_exact(&scenario)?;
    let scale = (f.n as f64).exp2();
    let raw = (1.0 - score) * scale;
    let count = raw.round();
    let residue = (raw - count).abs();
    if residue > 1e-6 * scale {
        return Err(ReductionError::Inconsistent { count: raw, residue });
    }
    Ok(count as u64)
}
