//! Rule evaluation at a single vertex for a single slot.
//!
//! The context is a queue bitmask (message indices) and an active bitmask
//! (local out-edge positions). Named sets are evaluated lazily and memoised
//! per context; rules whose action index exceeds the vertex degree are
//! skipped entirely, so their guards (and any sets only they reference) are
//! never touched there.

use std::collections::BTreeSet;

use crate::compiled::{CAssert, CBody, CEdge, CMsg, Compiled};
use crate::scheme::{SchemeError, SetKind};

/// Evaluation point: one vertex with its queue and active out-edges.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Ctx {
    pub vertex: usize,
    /// Bit `m` set iff message `m` is queued here (arrived messages included).
    pub queue: u64,
    /// Bit `j` set iff the vertex's `j`-th out-edge (0-based) is active.
    pub active: u64,
}

impl Ctx {
    pub fn from_ids(
        comp: &Compiled,
        vertex: &str,
        queue: &BTreeSet<String>,
        active: &BTreeSet<String>,
    ) -> Result<Ctx, SchemeError> {
        let v = *comp
            .vert_idx
            .get(vertex)
            .ok_or_else(|| SchemeError::UnknownId {
                kind: "vertex",
                id: vertex.to_string(),
            })?;
        let mut qmask = 0u64;
        for m in queue {
            let idx = comp
                .msg_idx
                .get(m.as_str())
                .ok_or_else(|| SchemeError::UnknownId {
                    kind: "message",
                    id: m.clone(),
                })?;
            qmask |= 1 << idx;
        }
        let mut amask = 0u64;
        for e in active {
            let idx = *comp
                .edge_idx
                .get(e.as_str())
                .ok_or_else(|| SchemeError::UnknownId {
                    kind: "edge",
                    id: e.clone(),
                })?;
            let local = comp
                .out_edges[v]
                .iter()
                .position(|&x| x == idx)
                .ok_or_else(|| SchemeError::UnknownId {
                    kind: "out-edge of the vertex",
                    id: e.clone(),
                })?;
            amask |= 1 << local;
        }
        Ok(Ctx {
            vertex: v,
            queue: qmask,
            active: amask,
        })
    }
}

/// Binding of the comprehension hole `_` during set evaluation.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Elem {
    None,
    Msg(usize),
    /// 0-based local out-edge position.
    Edge(u32),
}

/// Per-context evaluator with memoised set values.
pub(crate) struct EvalState<'c, 'a> {
    comp: &'c Compiled<'a>,
    memo: Vec<Option<u64>>,
}

impl<'c, 'a> EvalState<'c, 'a> {
    pub fn new(comp: &'c Compiled<'a>) -> Self {
        EvalState {
            comp,
            memo: vec![None; comp.sets.len()],
        }
    }

    fn msg(&self, t: CMsg, elem: Elem) -> Result<usize, SchemeError> {
        match t {
            CMsg::Id(m) => Ok(m),
            CMsg::Elem => match elem {
                Elem::Msg(m) => Ok(m),
                _ => Err(SchemeError::ElemOutsideComprehension),
            },
        }
    }

    /// Resolve an edge term to a 0-based local position, range-checked.
    fn edge(&self, ctx: &Ctx, t: CEdge, elem: Elem) -> Result<u32, SchemeError> {
        match t {
            CEdge::Index(i) => {
                let d = self.comp.out_edges[ctx.vertex].len();
                if i as usize > d {
                    return Err(SchemeError::EdgeIndexOutOfRange {
                        index: i,
                        vertex: self.comp.scenario.network.vertices[ctx.vertex].clone(),
                        degree: d,
                    });
                }
                Ok(i - 1)
            }
            CEdge::Elem => match elem {
                Elem::Edge(j) => Ok(j),
                _ => Err(SchemeError::ElemOutsideComprehension),
            },
        }
    }

    /// Memoised value of a named set as a bitmask.
    pub fn set_bits(&mut self, ctx: &Ctx, set: usize) -> Result<u64, SchemeError> {
        if let Some(bits) = self.memo[set] {
            return Ok(bits);
        }
        // Set bodies only reference earlier definitions, so this recursion
        // terminates.
        let def = &self.comp.sets[set];
        let bits = match &def.body {
            CBody::Compr(body) => {
                let mut bits = 0u64;
                match def.kind {
                    SetKind::Messages => {
                        for m in 0..self.comp.nm {
                            if self.eval(ctx, body, Elem::Msg(m))? {
                                bits |= 1 << m;
                            }
                        }
                    }
                    SetKind::Edges => {
                        let d = self.comp.out_edges[ctx.vertex].len() as u32;
                        for j in 0..d {
                            if self.eval(ctx, body, Elem::Edge(j))? {
                                bits |= 1 << j;
                            }
                        }
                    }
                }
                bits
            }
            CBody::Union(a, b) => self.set_bits(ctx, *a)? | self.set_bits(ctx, *b)?,
            CBody::Inter(a, b) => self.set_bits(ctx, *a)? & self.set_bits(ctx, *b)?,
            CBody::Diff(a, b) => self.set_bits(ctx, *a)? & !self.set_bits(ctx, *b)?,
        };
        self.memo[set] = Some(bits);
        Ok(bits)
    }

    pub fn eval(&mut self, ctx: &Ctx, a: &CAssert, elem: Elem) -> Result<bool, SchemeError> {
        let v = ctx.vertex;
        Ok(match a {
            CAssert::Present(m) => ctx.queue & (1 << self.msg(*m, elem)?) != 0,
            CAssert::Active(e) => ctx.active & (1 << self.edge(ctx, *e, elem)?) != 0,
            CAssert::MsgLess(a, b) => {
                let (a, b) = (self.msg(*a, elem)?, self.msg(*b, elem)?);
                self.comp.prio_rank[v][a] < self.comp.prio_rank[v][b]
            }
            CAssert::EdgeLess(i, j, m) => {
                let i = self.edge(ctx, *i, elem)? as usize;
                let j = self.edge(ctx, *j, elem)? as usize;
                let m = self.msg(*m, elem)?;
                self.comp.pref_rank[m][v][i] < self.comp.pref_rank[m][v][j]
            }
            CAssert::Or(a, b) => self.eval(ctx, a, elem)? || self.eval(ctx, b, elem)?,
            CAssert::Not(a) => !self.eval(ctx, a, elem)?,
            CAssert::InMsgSet(s, m) => {
                let m = self.msg(*m, elem)?;
                self.set_bits(ctx, *s)? & (1 << m) != 0
            }
            CAssert::InEdgeSet(s, e) => {
                let j = self.edge(ctx, *e, elem)?;
                self.set_bits(ctx, *s)? & (1 << j) != 0
            }
            CAssert::Priority(m, s) => {
                // Member of the set and above every other member.
                let m = self.msg(*m, elem)?;
                let bits = self.set_bits(ctx, *s)?;
                if bits & (1 << m) == 0 {
                    false
                } else {
                    let rank = self.comp.prio_rank[v][m];
                    let mut others = bits & !(1 << m);
                    let mut top = true;
                    while others != 0 {
                        let o = others.trailing_zeros() as usize;
                        others &= others - 1;
                        if self.comp.prio_rank[v][o] > rank {
                            top = false;
                            break;
                        }
                    }
                    top
                }
            }
            CAssert::Prefers(m, e, s) => {
                // The message ranks this edge above every other set member
                // (membership of the edge itself is not required).
                let m = self.msg(*m, elem)?;
                let j = self.edge(ctx, *e, elem)? as usize;
                let bits = self.set_bits(ctx, *s)?;
                let rank = self.comp.pref_rank[m][v][j];
                let mut others = bits & !(1 << j);
                let mut best = true;
                while others != 0 {
                    let o = others.trailing_zeros() as usize;
                    others &= others - 1;
                    if self.comp.pref_rank[m][v][o] > rank {
                        best = false;
                        break;
                    }
                }
                best
            }
        })
    }

    /// Raw fires: every applicable rule whose subject is queued and whose
    /// guard holds. No suppression, duplicates possible.
    pub fn fired(&mut self, ctx: &Ctx) -> Result<Vec<(usize, u32)>, SchemeError> {
        let d = self.comp.out_edges[ctx.vertex].len() as u32;
        let mut out = Vec::new();
        for rule in &self.comp.rules {
            // Rules addressing a position past this vertex's degree do not
            // apply here.
            if rule.edge_index > d {
                continue;
            }
            if ctx.queue & (1 << rule.msg) == 0 {
                continue;
            }
            if self.eval(ctx, &rule.guard, Elem::None)? {
                out.push((rule.msg, rule.edge_index - 1));
            }
        }
        Ok(out)
    }

    /// Fires after suppression and the determinism check.
    pub fn output(&mut self, ctx: &Ctx) -> Result<Vec<(usize, u32)>, SchemeError> {
        let fired = self.fired(ctx)?;
        suppress_and_check(self.comp, ctx, fired)
    }
}

/// Drop forwards on inactive edges and of already-delivered messages, then
/// reject any remaining double use of a message or an edge.
pub(crate) fn suppress_and_check(
    comp: &Compiled,
    ctx: &Ctx,
    fired: Vec<(usize, u32)>,
) -> Result<Vec<(usize, u32)>, SchemeError> {
    let mut kept: Vec<(usize, u32)> = fired
        .into_iter()
        .filter(|&(m, local)| {
            comp.msg_target[m] != ctx.vertex && ctx.active & (1 << local) != 0
        })
        .collect();
    kept.sort_unstable();
    kept.dedup();
    for w in kept.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(SchemeError::Conflict {
                vertex: comp.scenario.network.vertices[ctx.vertex].clone(),
                detail: format!(
                    "message {:?} forwarded on edge indices {} and {}",
                    comp.scenario.messages[w[0].0].id,
                    w[0].1 + 1,
                    w[1].1 + 1
                ),
            });
        }
    }
    let mut by_edge = kept.clone();
    by_edge.sort_unstable_by_key(|&(m, local)| (local, m));
    for w in by_edge.windows(2) {
        if w[0].1 == w[1].1 {
            return Err(SchemeError::Conflict {
                vertex: comp.scenario.network.vertices[ctx.vertex].clone(),
                detail: format!(
                    "edge index {} carries messages {:?} and {:?}",
                    w[0].1 + 1,
                    comp.scenario.messages[w[0].0].id,
                    comp.scenario.messages[w[1].0].id
                ),
            });
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;

    fn ctx_all(comp: &Compiled, vertex: &str) -> Ctx {
        let v = comp.vert_idx[vertex];
        Ctx {
            vertex: v,
            queue: (1u64 << comp.nm) - 1,
            active: (1u64 << comp.out_edges[v].len()) - 1,
        }
    }

    #[test]
    fn arrived_message_fires_are_suppressed() {
        let s = fixtures::unit_link();
        let comp = Compiled::new(&s).unwrap();
        // m1 queued at its target v: no output even though v has no rules
        // applicable anyway; craft the check at u by retargeting.
        let mut s2 = s.clone();
        s2.messages[0].target = "u".into();
        s2.messages[0].source = "v".into();
        let comp2 = Compiled::new(&s2).unwrap();
        let ctx = ctx_all(&comp2, "u");
        let mut st = EvalState::new(&comp2);
        assert_eq!(st.output(&ctx).unwrap(), vec![]);
        // Original scenario forwards at u.
        let ctx = ctx_all(&comp, "u");
        let mut st = EvalState::new(&comp);
        assert_eq!(st.output(&ctx).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn duplicate_identical_fires_are_merged() {
        let mut s = fixtures::unit_link();
        let dup = s.scheme.rules[0].clone();
        s.scheme.rules.push(dup);
        let comp = Compiled::new(&s).unwrap();
        let ctx = ctx_all(&comp, "u");
        let mut st = EvalState::new(&comp);
        assert_eq!(st.output(&ctx).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn sets_are_lazy_per_applicable_rules() {
        use crate::scheme::{sexpr, Rule, SetBody, SetDef, SetKind};
        let mut s = fixtures::unit_link();
        // A set whose body is out of range at degree-1 vertices, referenced
        // only by a rule with action index 2: never evaluated at u.
        s.scheme.set_defs.push(SetDef {
            name: "deep".into(),
            kind: SetKind::Messages,
            body: SetBody::Comprehension(sexpr::parse("(and (present _) (active 2))").unwrap()),
        });
        s.scheme.rules.push(Rule {
            guard: sexpr::parse("(in-msgs deep m1)").unwrap(),
            message: "m1".into(),
            edge_index: 2,
        });
        let comp = Compiled::new(&s).unwrap();
        let ctx = ctx_all(&comp, "u");
        let mut st = EvalState::new(&comp);
        assert_eq!(st.output(&ctx).unwrap(), vec![(0, 0)]);
    }
}
