//! Interned form of a scenario shared by every engine.
//!
//! Ids are resolved to dense indices once, priority/preference orders become
//! rank tables, and assertions are rewritten with indices in place of names.
//! Queues and active-edge sets are `u64` bitmasks (message index bits and
//! local out-edge bits respectively), which caps instances at 63 messages and
//! out-degree 63 — far beyond anything the exact engines can handle anyway.

use std::collections::BTreeMap;

use crate::model::Scenario;
use crate::scheme::{Assertion, EdgeTerm, MsgTerm, SchemeError, SetBody, SetKind};

/// Message term with the id resolved to an index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CMsg {
    Elem,
    Id(usize),
}

/// Edge term; indices stay 1-based as written in rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CEdge {
    Elem,
    Index(u32),
}

/// Assertion over resolved indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum CAssert {
    Present(CMsg),
    Active(CEdge),
    MsgLess(CMsg, CMsg),
    EdgeLess(CEdge, CEdge, CMsg),
    Or(Box<CAssert>, Box<CAssert>),
    Not(Box<CAssert>),
    InMsgSet(usize, CMsg),
    InEdgeSet(usize, CEdge),
    Priority(CMsg, usize),
    Prefers(CMsg, CEdge, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum CBody {
    Compr(CAssert),
    Union(usize, usize),
    Inter(usize, usize),
    Diff(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct CSet {
    pub kind: SetKind,
    pub body: CBody,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct CRule {
    pub msg: usize,
    /// 1-based positional out-edge index as written in the rule.
    pub edge_index: u32,
    pub guard: CAssert,
}

#[derive(Debug)]
pub(crate) struct Compiled<'a> {
    pub scenario: &'a Scenario,
    pub nv: usize,
    pub ne: usize,
    pub nm: usize,
    pub vert_idx: BTreeMap<&'a str, usize>,
    pub edge_idx: BTreeMap<&'a str, usize>,
    pub msg_idx: BTreeMap<&'a str, usize>,
    /// Global edge indices leaving each vertex, in `out_order` order.
    pub out_edges: Vec<Vec<usize>>,
    pub edge_from: Vec<usize>,
    pub edge_to: Vec<usize>,
    pub p_crash: Vec<f64>,
    pub p_omit: Vec<f64>,
    pub msg_source: Vec<usize>,
    pub msg_target: Vec<usize>,
    /// `prio_rank[v][m]`: larger rank = higher priority at vertex `v`.
    pub prio_rank: Vec<Vec<u32>>,
    /// `pref_rank[m][v][local]`: larger rank = more preferred edge.
    pub pref_rank: Vec<Vec<Vec<u32>>>,
    pub sets: Vec<CSet>,
    pub set_idx: BTreeMap<String, usize>,
    pub rules: Vec<CRule>,
}

impl<'a> Compiled<'a> {
    pub fn new(s: &'a Scenario) -> Result<Self, SchemeError> {
        let nv = s.network.vertices.len();
        let ne = s.network.edges.len();
        let nm = s.messages.len();
        if nm > 63 {
            return Err(SchemeError::TooLarge(format!("{nm} messages (max 63)")));
        }

        let vert_idx: BTreeMap<&str, usize> = s
            .network
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), i))
            .collect();
        let edge_idx: BTreeMap<&str, usize> = s
            .network
            .edges
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.as_str(), i))
            .collect();
        let msg_idx: BTreeMap<&str, usize> = s
            .messages
            .iter()
            .enumerate()
            .map(|(i, m)| (m.id.as_str(), i))
            .collect();

        let resolve_vertex = |id: &str| -> Result<usize, SchemeError> {
            vert_idx.get(id).copied().ok_or_else(|| SchemeError::UnknownId {
                kind: "vertex",
                id: id.to_string(),
            })
        };
        let resolve_edge = |id: &str| -> Result<usize, SchemeError> {
            edge_idx.get(id).copied().ok_or_else(|| SchemeError::UnknownId {
                kind: "edge",
                id: id.to_string(),
            })
        };

        let mut out_edges = vec![Vec::new(); nv];
        for (v_name, order) in &s.network.out_order {
            let v = resolve_vertex(v_name)?;
            let mut locals = Vec::with_capacity(order.len());
            for e_name in order {
                locals.push(resolve_edge(e_name)?);
            }
            if locals.len() > 63 {
                return Err(SchemeError::TooLarge(format!(
                    "vertex {v_name:?} has out-degree {} (max 63)",
                    locals.len()
                )));
            }
            out_edges[v] = locals;
        }

        let mut edge_from = Vec::with_capacity(ne);
        let mut edge_to = Vec::with_capacity(ne);
        let mut p_crash = Vec::with_capacity(ne);
        let mut p_omit = Vec::with_capacity(ne);
        for e in &s.network.edges {
            edge_from.push(resolve_vertex(&e.from)?);
            edge_to.push(resolve_vertex(&e.to)?);
            p_crash.push(e.p_crash);
            p_omit.push(e.p_omit);
        }

        let mut msg_source = Vec::with_capacity(nm);
        let mut msg_target = Vec::with_capacity(nm);
        for m in &s.messages {
            msg_source.push(resolve_vertex(&m.source)?);
            msg_target.push(resolve_vertex(&m.target)?);
        }

        // Priority orders -> rank tables (position in list = rank; last wins).
        let mut prio_rank = vec![vec![0u32; nm]; nv];
        for (v_name, &v) in &vert_idx {
            let order = s
                .scheme
                .msg_priority
                .get(*v_name)
                .ok_or_else(|| SchemeError::BadMsgPriority {
                    vertex: v_name.to_string(),
                })?;
            if order.len() != nm {
                return Err(SchemeError::BadMsgPriority {
                    vertex: v_name.to_string(),
                });
            }
            let mut seen = vec![false; nm];
            for (rank, m_name) in order.iter().enumerate() {
                let m = *msg_idx
                    .get(m_name.as_str())
                    .ok_or_else(|| SchemeError::BadMsgPriority {
                        vertex: v_name.to_string(),
                    })?;
                if seen[m] {
                    return Err(SchemeError::BadMsgPriority {
                        vertex: v_name.to_string(),
                    });
                }
                seen[m] = true;
                prio_rank[v][m] = rank as u32;
            }
        }

        let mut pref_rank = vec![vec![Vec::new(); nv]; nm];
        for (m_name, &m) in &msg_idx {
            for (v_name, &v) in &vert_idx {
                let d = out_edges[v].len();
                if d == 0 {
                    continue;
                }
                let order = s
                    .scheme
                    .edge_pref
                    .get(*m_name)
                    .and_then(|per| per.get(*v_name))
                    .ok_or_else(|| SchemeError::BadEdgePref {
                        message: m_name.to_string(),
                        vertex: v_name.to_string(),
                    })?;
                if order.len() != d {
                    return Err(SchemeError::BadEdgePref {
                        message: m_name.to_string(),
                        vertex: v_name.to_string(),
                    });
                }
                let mut ranks = vec![u32::MAX; d];
                for (rank, e_name) in order.iter().enumerate() {
                    let e = resolve_edge(e_name)?;
                    let local = out_edges[v]
                        .iter()
                        .position(|&x| x == e)
                        .ok_or_else(|| SchemeError::BadEdgePref {
                            message: m_name.to_string(),
                            vertex: v_name.to_string(),
                        })?;
                    if ranks[local] != u32::MAX {
                        return Err(SchemeError::BadEdgePref {
                            message: m_name.to_string(),
                            vertex: v_name.to_string(),
                        });
                    }
                    ranks[local] = rank as u32;
                }
                pref_rank[m][v] = ranks;
            }
        }

        let mut comp = Compiled {
            scenario: s,
            nv,
            ne,
            nm,
            vert_idx,
            edge_idx,
            msg_idx,
            out_edges,
            edge_from,
            edge_to,
            p_crash,
            p_omit,
            msg_source,
            msg_target,
            prio_rank,
            pref_rank,
            sets: Vec::new(),
            set_idx: BTreeMap::new(),
            rules: Vec::new(),
        };

        for def in &s.scheme.set_defs {
            let body = match &def.body {
                SetBody::Comprehension(a) => {
                    CBody::Compr(comp.compile_assertion(a, Some(def.kind))?)
                }
                SetBody::Union(a, b) => {
                    let (a, b) = comp.resolve_set_pair(a, b, def.kind)?;
                    CBody::Union(a, b)
                }
                SetBody::Inter(a, b) => {
                    let (a, b) = comp.resolve_set_pair(a, b, def.kind)?;
                    CBody::Inter(a, b)
                }
                SetBody::Diff(a, b) => {
                    let (a, b) = comp.resolve_set_pair(a, b, def.kind)?;
                    CBody::Diff(a, b)
                }
            };
            let idx = comp.sets.len();
            comp.sets.push(CSet {
                kind: def.kind,
                body,
            });
            comp.set_idx.insert(def.name.clone(), idx);
        }

        for rule in &s.scheme.rules {
            let msg = comp.resolve_msg(&rule.message)?;
            if rule.edge_index == 0 {
                return Err(SchemeError::EdgeIndexOutOfRange {
                    index: 0,
                    vertex: "(any)".into(),
                    degree: 0,
                });
            }
            let guard = comp.compile_assertion(&rule.guard, None)?;
            comp.rules.push(CRule {
                msg,
                edge_index: rule.edge_index,
                guard,
            });
        }

        Ok(comp)
    }

    fn resolve_msg(&self, id: &str) -> Result<usize, SchemeError> {
        self.msg_idx
            .get(id)
            .copied()
            .ok_or_else(|| SchemeError::UnknownId {
                kind: "message",
                id: id.to_string(),
            })
    }

    fn resolve_set(&self, name: &str, expected: SetKind) -> Result<usize, SchemeError> {
        let idx = *self
            .set_idx
            .get(name)
            .ok_or_else(|| match self.scenario.scheme.set_defs.iter().any(|d| d.name == name) {
                true => SchemeError::ForwardSetReference {
                    set: name.to_string(),
                },
                false => SchemeError::UnknownSet(name.to_string()),
            })?;
        if self.sets[idx].kind != expected {
            return Err(SchemeError::SetKindMismatch {
                set: name.to_string(),
                expected: match expected {
                    SetKind::Messages => "message",
                    SetKind::Edges => "edge",
                },
            });
        }
        Ok(idx)
    }

    fn resolve_set_pair(
        &self,
        a: &str,
        b: &str,
        kind: SetKind,
    ) -> Result<(usize, usize), SchemeError> {
        Ok((self.resolve_set(a, kind)?, self.resolve_set(b, kind)?))
    }

    fn compile_msg_term(&self, t: &MsgTerm, elem: Option<SetKind>) -> Result<CMsg, SchemeError> {
        match t {
            MsgTerm::Elem => {
                if elem == Some(SetKind::Messages) {
                    Ok(CMsg::Elem)
                } else {
                    Err(SchemeError::ElemOutsideComprehension)
                }
            }
            MsgTerm::Id(id) => Ok(CMsg::Id(self.resolve_msg(id)?)),
        }
    }

    fn compile_edge_term(&self, t: &EdgeTerm, elem: Option<SetKind>) -> Result<CEdge, SchemeError> {
        match t {
            EdgeTerm::Elem => {
                if elem == Some(SetKind::Edges) {
                    Ok(CEdge::Elem)
                } else {
                    Err(SchemeError::ElemOutsideComprehension)
                }
            }
            EdgeTerm::Index(i) => {
                if *i == 0 {
                    return Err(SchemeError::EdgeIndexOutOfRange {
                        index: 0,
                        vertex: "(any)".into(),
                        degree: 0,
                    });
                }
                Ok(CEdge::Index(*i))
            }
        }
    }

    /// Resolve names inside an assertion. `elem` gives the kind of the
    /// enclosing comprehension's bound element, if any.
    pub fn compile_assertion(
        &self,
        a: &Assertion,
        elem: Option<SetKind>,
    ) -> Result<CAssert, SchemeError> {
        Ok(match a {
            Assertion::Present(m) => CAssert::Present(self.compile_msg_term(m, elem)?),
            Assertion::Active(e) => CAssert::Active(self.compile_edge_term(e, elem)?),
            Assertion::MsgLess(a, b) => CAssert::MsgLess(
                self.compile_msg_term(a, elem)?,
                self.compile_msg_term(b, elem)?,
            ),
            Assertion::EdgeLess(i, j, m) => CAssert::EdgeLess(
                self.compile_edge_term(i, elem)?,
                self.compile_edge_term(j, elem)?,
                self.compile_msg_term(m, elem)?,
            ),
            Assertion::Or(a, b) => CAssert::Or(
                Box::new(self.compile_assertion(a, elem)?),
                Box::new(self.compile_assertion(b, elem)?),
            ),
            Assertion::Not(a) => CAssert::Not(Box::new(self.compile_assertion(a, elem)?)),
            Assertion::InMsgSet(s, m) => CAssert::InMsgSet(
                self.resolve_set(s, SetKind::Messages)?,
                self.compile_msg_term(m, elem)?,
            ),
            Assertion::InEdgeSet(s, e) => CAssert::InEdgeSet(
                self.resolve_set(s, SetKind::Edges)?,
                self.compile_edge_term(e, elem)?,
            ),
            Assertion::Priority(m, s) => CAssert::Priority(
                self.compile_msg_term(m, elem)?,
                self.resolve_set(s, SetKind::Messages)?,
            ),
            Assertion::Prefers(m, e, s) => CAssert::Prefers(
                self.compile_msg_term(m, elem)?,
                self.compile_edge_term(e, elem)?,
                self.resolve_set(s, SetKind::Edges)?,
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;

    #[test]
    fn interning_matches_declaration_order() {
        let s = fixtures::parallel_two(crate::model::FaultModel::Temporary, 0.5);
        let c = Compiled::new(&s).unwrap();
        assert_eq!(c.nv, 2);
        assert_eq!(c.ne, 2);
        assert_eq!(c.nm, 1);
        let u = c.vert_idx["u"];
        assert_eq!(c.out_edges[u], vec![0, 1]);
        assert_eq!(c.edge_from[0], u);
        // Fixture prefers e1 over e2: higher rank for local 0.
        assert!(c.pref_rank[0][u][0] > c.pref_rank[0][u][1]);
    }

    #[test]
    fn forward_set_reference_is_distinguished_from_unknown() {
        use crate::scheme::{SetBody, SetDef, SetKind};
        let mut s = fixtures::unit_link();
        s.scheme.set_defs.insert(
            0,
            SetDef {
                name: "early".into(),
                kind: SetKind::Messages,
                body: SetBody::Union("late".into(), "late".into()),
            },
        );
        s.scheme.set_defs.push(SetDef {
            name: "late".into(),
            kind: SetKind::Messages,
            body: SetBody::Comprehension(crate::scheme::sexpr::parse("(present _)").unwrap()),
        });
        match Compiled::new(&s) {
            Err(SchemeError::ForwardSetReference { set }) => assert_eq!(set, "late"),
            other => panic!("expected forward reference error, got {other:?}"),
        }
    }
}
