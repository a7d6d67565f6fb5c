//! Unrolling a scenario into CNF.
//!
//! Variables are introduced only where fault outcomes can differ: crash and
//! omission variables appear per edge and slot only when the probability is
//! strictly between 0 and 1 and the edge actually matters there; everything
//! else constant-folds away. Guards are translated with the evaluator's
//! short-circuit structure, subformulas are shared through hash-consed
//! gates, and per-message reachability balls bound where position variables
//! exist. The satisfying assignments of the result are in bijection with the
//! fault branchings that deliver at least `guarantee` messages in time.

use std::collections::{BTreeMap, VecDeque};

use crate::compiled::{CAssert, CBody, CEdge, CMsg, Compiled};
use crate::encoder::{encode_counter, Cnf, EncodeError, ScenarioEncoding, VarRole, VariableBook};
use crate::model::{validate_scenario, FaultModel, Scenario};
use crate::scheme::eval::Elem;
use crate::scheme::{SchemeError, SetKind};

/// A literal or a constant-folded truth value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Lit {
    Const(bool),
    Var(i32),
}

impl Lit {
    fn neg(self) -> Lit {
        match self {
            Lit::Const(b) => Lit::Const(!b),
            Lit::Var(l) => Lit::Var(-l),
        }
    }
}

/// Unroll the scenario over its timeout and constrain the arrival count.
///
/// The scenario is validated first; any violation aborts the encoding, which
/// is also what surfaces forwarding conflicts before they could corrupt the
/// outcome/assignment correspondence.
pub fn encode_scenario(s: &Scenario) -> Result<ScenarioEncoding, EncodeError> {
    let (mut enc, finals) = encode_core(s, false)?;

    // Arrival threshold over the final positions at each message's target.
    let mut ell = s.guarantee as i64;
    let mut inputs: Vec<u32> = Vec::new();
    for lit in finals {
        match lit {
            Lit::Const(true) => ell -= 1,
            Lit::Const(false) => {}
            Lit::Var(l) => {
                debug_assert!(l > 0, "position literals are plain variables");
                inputs.push(l as u32);
            }
        }
    }
    if ell > inputs.len() as i64 {
        // More arrivals required than can still happen: unsatisfiable.
        enc.cnf.add_clause(vec![]);
    } else if ell >= 1 {
        let ys = encode_counter(&mut enc.cnf, &inputs, ell as u32)?;
        let width = ys.len() / inputs.len();
        for (i, &y) in ys.iter().enumerate() {
            enc.book.record(
                y,
                VarRole::CounterBit {
                    copy: (i / width) as u32 + 1,
                    bit: (i % width) as u32 + 1,
                },
            );
        }
    }
    Ok(enc)
}

/// Unroll the dynamics without any arrival constraint.
///
/// Returns the encoding together with each message's position literal at its
/// target after the final slot, in message order. With `full_chains` every
/// edge whose crash probability is strictly between 0 and 1 gets its crash
/// variables materialised even if no forwarding ever consults it, so callers
/// can constrain the complete crash pattern.
pub(crate) fn encode_core(
    s: &Scenario,
    full_chains: bool,
) -> Result<(ScenarioEncoding, Vec<Lit>), EncodeError> {
    let violations = validate_scenario(s);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(EncodeError::Invalid(text.join("; ")));
    }
    let comp = Compiled::new(s)?;

    let dist: Vec<Vec<u32>> = (0..comp.nm).map(|m| bfs(&comp, comp.msg_source[m])).collect();
    let mut in_edges = vec![Vec::new(); comp.nv];
    for e in 0..comp.ne {
        in_edges[comp.edge_to[e]].push(e);
    }

    let mut b = Builder {
        comp: &comp,
        cnf: Cnf::new(),
        book: VariableBook::new(),
        dist,
        in_edges,
        positions: BTreeMap::new(),
        sends: BTreeMap::new(),
        crash: BTreeMap::new(),
        fr: BTreeMap::new(),
        deliver: BTreeMap::new(),
        gates: BTreeMap::new(),
        gate_seq: 0,
        members: BTreeMap::new(),
    };

    if full_chains {
        for e in 0..comp.ne {
            if comp.p_crash[e] > 0.0 && comp.p_crash[e] < 1.0 {
                b.activity(e, 1);
            }
        }
    }

    for k in 1..=s.timeout {
        b.encode_slot(k)?;
    }

    let finals: Vec<Lit> =
        (0..comp.nm).map(|m| b.position(m, comp.msg_target[m], s.timeout)).collect();
    Ok((ScenarioEncoding { cnf: b.cnf, book: b.book }, finals))
}

fn bfs(comp: &Compiled, src: usize) -> Vec<u32> {
    let mut dist = vec![u32::MAX; comp.nv];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(v) = queue.pop_front() {
        for &e in &comp.out_edges[v] {
            let w = comp.edge_to[e];
            if dist[w] == u32::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

struct Builder<'c, 'a> {
    comp: &'c Compiled<'a>,
    cnf: Cnf,
    book: VariableBook,
    /// Hop distance from each message's source to every vertex.
    dist: Vec<Vec<u32>>,
    in_edges: Vec<Vec<usize>>,
    /// Position literal per (message, vertex, slot); absent means false.
    positions: BTreeMap<(usize, usize, u32), Lit>,
    /// Send literal per (message, edge, slot); absent means false.
    sends: BTreeMap<(usize, usize, u32), Lit>,
    /// Crash variable per (edge, slot).
    crash: BTreeMap<(usize, u32), u32>,
    /// Forwarded literal per (edge, slot), only for uncertain omissions.
    fr: BTreeMap<(usize, u32), Lit>,
    /// Delivery literal per (edge, slot).
    deliver: BTreeMap<(usize, u32), Lit>,
    /// Hash-consed AND gates keyed by their sorted input literals.
    gates: BTreeMap<Vec<i32>, i32>,
    gate_seq: u32,
    /// Membership literal per (set, element, vertex, slot).
    members: BTreeMap<(usize, usize, usize, u32), Lit>,
}

impl Builder<'_, '_> {
    fn encode_slot(&mut self, k: u32) -> Result<(), EncodeError> {
        let comp = self.comp;

        // Send gates: forwarded = queued && edge active && some rule fires.
        for v in 0..comp.nv {
            for m in 0..comp.nm {
                if comp.msg_target[m] == v {
                    continue; // delivered messages never leave
                }
                let q = self.position(m, v, k - 1);
                if q == Lit::Const(false) {
                    continue;
                }
                for j in 0..comp.out_edges[v].len() {
                    let e = comp.out_edges[v][j];
                    let mut guards = Vec::new();
                    for rule in &comp.rules {
                        if rule.msg != m || rule.edge_index as usize != j + 1 {
                            continue;
                        }
                        guards.push(self.assert_lit(v, k, &rule.guard, Elem::None, Some(m))?);
                    }
                    if guards.is_empty() {
                        continue;
                    }
                    let fire = self.or_gate(guards);
                    let act = self.activity(e, k);
                    // A shared gate, not a named define: a send that folds to
                    // a plain literal lets complementary sends cancel, which
                    // is what keeps settled messages from dragging fresh
                    // fault variables through every later slot.
                    let send = self.and_gate(vec![q, act, fire]);
                    if send != Lit::Const(false) {
                        self.sends.insert((m, e, k), send);
                    }
                }
            }
        }

        // Forwarded flags, needed only where omission fates will be drawn.
        for e in 0..comp.ne {
            let p = comp.p_omit[e];
            if !(p > 0.0 && p < 1.0) {
                continue;
            }
            let mut lits = Vec::new();
            let mut any_true = false;
            for m in 0..comp.nm {
                match self.sends.get(&(m, e, k)) {
                    Some(Lit::Const(true)) => any_true = true,
                    Some(&Lit::Var(l)) => lits.push(l),
                    _ => {}
                }
            }
            let role = VarRole::Forwarded {
                edge: comp.scenario.network.edges[e].id.clone(),
                micro: 2 * k - 1,
            };
            let fr = if any_true {
                let f = self.book.fresh(&mut self.cnf, role) as i32;
                self.cnf.add_clause(vec![f]);
                Lit::Var(f)
            } else if lits.is_empty() {
                Lit::Const(false)
            } else {
                let f = self.book.fresh(&mut self.cnf, role) as i32;
                for &l in &lits {
                    self.cnf.add_clause(vec![-l, f]);
                }
                let mut back = vec![-f];
                back.extend(&lits);
                self.cnf.add_clause(back);
                Lit::Var(f)
            };
            self.fr.insert((e, k), fr);
        }

        // Positions: stay without launching, arrive on a delivered send, or
        // bounce back from an omitted one.
        for m in 0..comp.nm {
            for v in 0..comp.nv {
                if self.dist[m][v] > k {
                    continue;
                }
                let mut terms = Vec::new();
                let q = self.position(m, v, k - 1);
                if q != Lit::Const(false) {
                    let mut launches = Vec::new();
                    for &e in &comp.out_edges[v] {
                        if let Some(&sl) = self.sends.get(&(m, e, k)) {
                            launches.push(sl);
                        }
                    }
                    let launched = self.or_gate(launches);
                    let stay = self.and_gate(vec![q, launched.neg()]);
                    terms.push(stay);
                }
                for i in 0..self.in_edges[v].len() {
                    let e = self.in_edges[v][i];
                    if let Some(&sl) = self.sends.get(&(m, e, k)) {
                        let del = self.deliver_lit(e, k);
                        let arrive = self.and_gate(vec![sl, del]);
                        terms.push(arrive);
                    }
                }
                for &e in &comp.out_edges[v] {
                    if let Some(&sl) = self.sends.get(&(m, e, k)) {
                        let del = self.deliver_lit(e, k);
                        let bounce = self.and_gate(vec![sl, del.neg()]);
                        terms.push(bounce);
                    }
                }
                let lit = self.define_or(
                    VarRole::Position {
                        message: comp.scenario.messages[m].id.clone(),
                        vertex: comp.scenario.network.vertices[v].clone(),
                        micro: 2 * k,
                    },
                    terms,
                );
                self.positions.insert((m, v, k), lit);
            }
        }
        Ok(())
    }

    /// Position literal of a message at a vertex after slot `k`.
    fn position(&self, m: usize, v: usize, k: u32) -> Lit {
        if k == 0 {
            return Lit::Const(self.comp.msg_source[m] == v);
        }
        *self.positions.get(&(m, v, k)).unwrap_or(&Lit::Const(false))
    }

    /// Literal for "edge `e` is active during slot `k`".
    fn activity(&mut self, e: usize, k: u32) -> Lit {
        let p = self.comp.p_crash[e];
        if p <= 0.0 {
            return Lit::Const(true);
        }
        if p >= 1.0 {
            return Lit::Const(false);
        }
        if !self.crash.contains_key(&(e, k)) {
            let edge = self.comp.scenario.network.edges[e].id.clone();
            match self.comp.scenario.fault_model {
                FaultModel::Temporary => {
                    let var = self
                        .book
                        .fresh(&mut self.cnf, VarRole::Crash { edge, micro: 2 * k - 1 });
                    self.crash.insert((e, k), var);
                }
                FaultModel::Permanent => {
                    // Whole chain at once; a crashed edge stays crashed.
                    let mut prev: Option<u32> = None;
                    for kk in 1..=self.comp.scenario.timeout {
                        let var = self.book.fresh(
                            &mut self.cnf,
                            VarRole::Crash { edge: edge.clone(), micro: 2 * kk - 1 },
                        );
                        self.crash.insert((e, kk), var);
                        if let Some(pv) = prev {
                            self.cnf.add_clause(vec![-(pv as i32), var as i32]);
                        }
                        prev = Some(var);
                    }
                }
            }
        }
        Lit::Var(-(self.crash[&(e, k)] as i32))
    }

    /// Literal for "the send on edge `e` in slot `k` is delivered". Creates
    /// the omission variable (with its omission-implies-forwarded clause) on
    /// first use.
    fn deliver_lit(&mut self, e: usize, k: u32) -> Lit {
        if let Some(&l) = self.deliver.get(&(e, k)) {
            return l;
        }
        let p = self.comp.p_omit[e];
        let lit = if p <= 0.0 {
            Lit::Const(true)
        } else if p >= 1.0 {
            Lit::Const(false)
        } else {
            let fr = *self
                .fr
                .get(&(e, k))
                .expect("forwarded flag defined before delivery is queried");
            let om = self.book.fresh(
                &mut self.cnf,
                VarRole::Omit {
                    edge: self.comp.scenario.network.edges[e].id.clone(),
                    micro: 2 * k,
                },
            ) as i32;
            match fr {
                Lit::Var(f) => self.cnf.add_clause(vec![-om, f]),
                Lit::Const(true) => {}
                Lit::Const(false) => self.cnf.add_clause(vec![-om]),
            }
            Lit::Var(-om)
        };
        self.deliver.insert((e, k), lit);
        lit
    }

    /// Translate an assertion in the context of vertex `v` and slot `k`.
    /// `subject` is the rule's message, known to be queued wherever the
    /// guard's value matters, so its own presence test folds to true.
    fn assert_lit(
        &mut self,
        v: usize,
        k: u32,
        a: &CAssert,
        elem: Elem,
        subject: Option<usize>,
    ) -> Result<Lit, EncodeError> {
        let comp = self.comp;
        Ok(match a {
            CAssert::Present(m) => {
                let m = self.msg_of(*m, elem)?;
                if subject == Some(m) {
                    Lit::Const(true)
                } else {
                    self.position(m, v, k - 1)
                }
            }
            CAssert::Active(e) => {
                let j = self.edge_of(v, *e, elem)?;
                let e = comp.out_edges[v][j as usize];
                self.activity(e, k)
            }
            CAssert::MsgLess(a, b) => {
                let (a, b) = (self.msg_of(*a, elem)?, self.msg_of(*b, elem)?);
                Lit::Const(comp.prio_rank[v][a] < comp.prio_rank[v][b])
            }
            CAssert::EdgeLess(i, j, m) => {
                let i = self.edge_of(v, *i, elem)? as usize;
                let j = self.edge_of(v, *j, elem)? as usize;
                let m = self.msg_of(*m, elem)?;
                Lit::Const(comp.pref_rank[m][v][i] < comp.pref_rank[m][v][j])
            }
            CAssert::Or(a, b) => {
                let la = self.assert_lit(v, k, a, elem, subject)?;
                if la == Lit::Const(true) {
                    // Mirrors the evaluator's short-circuit: the right arm
                    // is never looked at.
                    la
                } else {
                    let lb = self.assert_lit(v, k, b, elem, subject)?;
                    self.or_gate(vec![la, lb])
                }
            }
            CAssert::Not(a) => self.assert_lit(v, k, a, elem, subject)?.neg(),
            CAssert::InMsgSet(s, m) => {
                let m = self.msg_of(*m, elem)?;
                self.member(v, k, *s, m)?
            }
            CAssert::InEdgeSet(s, e) => {
                let j = self.edge_of(v, *e, elem)?;
                self.member(v, k, *s, j as usize)?
            }
            CAssert::Priority(m, s) => {
                let m = self.msg_of(*m, elem)?;
                let mut parts = vec![self.member(v, k, *s, m)?];
                let rank = comp.prio_rank[v][m];
                for o in 0..comp.nm {
                    if o != m && comp.prio_rank[v][o] > rank {
                        let lit = self.member(v, k, *s, o)?;
                        parts.push(lit.neg());
                    }
                }
                self.and_gate(parts)
            }
            CAssert::Prefers(m, e, s) => {
                let m = self.msg_of(*m, elem)?;
                let j = self.edge_of(v, *e, elem)? as usize;
                let rank = comp.pref_rank[m][v][j];
                let mut parts = Vec::new();
                for o in 0..comp.out_edges[v].len() {
                    if o != j && comp.pref_rank[m][v][o] > rank {
                        let lit = self.member(v, k, *s, o)?;
                        parts.push(lit.neg());
                    }
                }
                self.and_gate(parts)
            }
        })
    }

    /// Membership literal of `elem` (message index or local edge position)
    /// in set `set` at vertex `v`, slot `k`.
    fn member(&mut self, v: usize, k: u32, set: usize, elem: usize) -> Result<Lit, EncodeError> {
        if let Some(&l) = self.members.get(&(set, elem, v, k)) {
            return Ok(l);
        }
        let comp = self.comp;
        let def = &comp.sets[set];
        let raw = match &def.body {
            CBody::Compr(body) => {
                let binding = match def.kind {
                    SetKind::Messages => Elem::Msg(elem),
                    SetKind::Edges => Elem::Edge(elem as u32),
                };
                self.assert_lit(v, k, body, binding, None)?
            }
            CBody::Union(a, b) => {
                let la = self.member(v, k, *a, elem)?;
                let lb = self.member(v, k, *b, elem)?;
                self.or_gate(vec![la, lb])
            }
            CBody::Inter(a, b) => {
                let la = self.member(v, k, *a, elem)?;
                let lb = self.member(v, k, *b, elem)?;
                self.and_gate(vec![la, lb])
            }
            CBody::Diff(a, b) => {
                let la = self.member(v, k, *a, elem)?;
                let lb = self.member(v, k, *b, elem)?;
                self.and_gate(vec![la, lb.neg()])
            }
        };
        // Memoized raw: an alias variable here would hide complementary
        // literals from the gate folds and bloat every guard circuit.
        self.members.insert((set, elem, v, k), raw);
        Ok(raw)
    }

    fn msg_of(&self, t: CMsg, elem: Elem) -> Result<usize, SchemeError> {
        match t {
            CMsg::Id(m) => Ok(m),
            CMsg::Elem => match elem {
                Elem::Msg(m) => Ok(m),
                _ => Err(SchemeError::ElemOutsideComprehension),
            },
        }
    }

    /// 0-based local out-edge position, range-checked like the evaluator.
    fn edge_of(&self, v: usize, t: CEdge, elem: Elem) -> Result<u32, SchemeError> {
        match t {
            CEdge::Index(i) => {
                let d = self.comp.out_edges[v].len();
                if i as usize > d {
                    return Err(SchemeError::EdgeIndexOutOfRange {
                        index: i,
                        vertex: self.comp.scenario.network.vertices[v].clone(),
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

    /// Fold constants out of a conjunction's inputs; `None` means the gate
    /// is decided, otherwise the sorted, deduplicated literals remain.
    fn fold_and(inputs: Vec<Lit>) -> Result<Vec<i32>, bool> {
        let mut lits: Vec<i32> = Vec::new();
        for l in inputs {
            match l {
                Lit::Const(false) => return Err(false),
                Lit::Const(true) => {}
                Lit::Var(x) => lits.push(x),
            }
        }
        lits.sort_unstable_by_key(|l| (l.unsigned_abs(), *l));
        lits.dedup();
        if lits.windows(2).any(|w| w[0] == -w[1]) {
            return Err(false);
        }
        if lits.is_empty() {
            return Err(true);
        }
        Ok(lits)
    }

    /// Shared AND gate over the inputs.
    fn and_gate(&mut self, inputs: Vec<Lit>) -> Lit {
        let lits = match Self::fold_and(inputs) {
            Err(b) => return Lit::Const(b),
            Ok(lits) => lits,
        };
        if lits.len() == 1 {
            return Lit::Var(lits[0]);
        }
        if let Some(&g) = self.gates.get(&lits) {
            return Lit::Var(g);
        }
        self.gate_seq += 1;
        let g = self
            .book
            .fresh(&mut self.cnf, VarRole::Gate { id: self.gate_seq }) as i32;
        for &l in &lits {
            self.cnf.add_clause(vec![-g, l]);
        }
        let mut back: Vec<i32> = lits.iter().map(|&l| -l).collect();
        back.push(g);
        self.cnf.add_clause(back);
        self.gates.insert(lits, g);
        Lit::Var(g)
    }

    fn or_gate(&mut self, inputs: Vec<Lit>) -> Lit {
        let negs = inputs.into_iter().map(Lit::neg).collect();
        self.and_gate(negs).neg()
    }

    /// Named variable defined as the disjunction of the inputs.
    fn define_or(&mut self, role: VarRole, inputs: Vec<Lit>) -> Lit {
        let negs: Vec<Lit> = inputs.into_iter().map(Lit::neg).collect();
        let lits = match Self::fold_and(negs) {
            Err(b) => return Lit::Const(!b),
            Ok(lits) => lits,
        };
        let x = self.book.fresh(&mut self.cnf, role) as i32;
        for &l in &lits {
            // l is the negation of an input term: term -> x.
            self.cnf.add_clause(vec![l, x]);
        }
        let mut back: Vec<i32> = lits.iter().map(|&l| -l).collect();
        back.push(-x);
        self.cnf.add_clause(back);
        Lit::Var(x)
    }
}
