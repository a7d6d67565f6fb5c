//! Concrete outcome semantics and the ground-truth scoring engines.
//!
//! A slot advances in two phases: first the crash letter fixes the active
//! edge set `T`, every vertex computes its deterministic forwarding output
//! for the messages queued there, and each forwarded message moves onto its
//! edge; then the omission letter decides per forwarded pair whether the
//! message reaches the edge's head or re-appears in the sender's queue.
//! Messages are forwarded only after they are received: a message arriving
//! at slot `i` competes for edges from slot `i + 1` on.
//!
//! On top of the single-run semantics ([`step`], [`run`]) the module offers
//! the exhaustive enumeration oracle ([`score_enumerate`]), per-message frame
//! automata ([`build_frame`]), and the explicit product Markov chain
//! ([`build_product_chain`] / [`chain_reachability`]).

mod chain;
mod enumerate;
mod frame;

pub use chain::{build_product_chain, chain_reachability, ChainState, ExplicitChain};
pub use enumerate::score_enumerate;
pub use frame::{build_frame, Frame, FrameMove};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::compiled::Compiled;
use crate::model::{FaultModel, Scenario};
use crate::scheme::SchemeError;

/// Joint message positions at a slot boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    /// Message id -> vertex id; every scenario message has exactly one entry.
    pub positions: BTreeMap<String, String>,
}

impl Configuration {
    /// Every message at its source.
    pub fn initial(s: &Scenario) -> Configuration {
        Configuration {
            positions: s
                .messages
                .iter()
                .map(|m| (m.id.clone(), m.source.clone()))
                .collect(),
        }
    }
}

impl std::fmt::Display for Configuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for (m, v) in &self.positions {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{m}@{v}")?;
            first = false;
        }
        Ok(())
    }
}

/// Fault letter of one slot: the active edges and the successful sends.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SlotFaults {
    /// `T`: edges that did not crash (permanent runs: monotonically shrinks).
    pub active: BTreeSet<String>,
    /// `L`: forwarded `(message, edge)` pairs that escaped omission.
    pub delivered: BTreeSet<(String, String)>,
}

/// Fault letters for all `t` slots of a run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FaultSequence {
    pub slots: Vec<SlotFaults>,
}

/// The `t + 1` configurations visited by a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub configurations: Vec<Configuration>,
}

impl Outcome {
    pub fn finish(&self) -> &Configuration {
        self.configurations.last().expect("outcome has t+1 >= 1 configurations")
    }
}

/// Failures of the outcome semantics and the engines built on them.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("unknown {kind} id {id:?}")]
    UnknownId { kind: &'static str, id: String },
    #[error("configuration is invalid: {0}")]
    BadConfiguration(String),
    #[error("fault sequence has {got} slots, the scenario timeout is {expected}")]
    WrongSlotCount { expected: u32, got: usize },
    #[error("active-edge sets must shrink under permanent faults; violated at slot {slot}")]
    NonMonotoneActive { slot: u32 },
    #[error("omission fates do not match the forwarded pairs: {0}")]
    FateDomainMismatch(String),
    #[error(
        "enumeration explored {explored} fault branch points and exceeded the cap of {cap}; \
         the full branch tree is at least that large"
    )]
    TooManyBranches { explored: u64, cap: u64 },
    #[error("chain construction exceeded its size cap: {0}")]
    ChainTooLarge(String),
}

/// Positions as message-indexed vertex indices.
pub(crate) fn positions_to_indices(
    comp: &Compiled,
    c: &Configuration,
) -> Result<Vec<u32>, SimError> {
    let mut pos = vec![u32::MAX; comp.nm];
    for (m_id, v_id) in &c.positions {
        let m = *comp
            .msg_idx
            .get(m_id.as_str())
            .ok_or_else(|| SimError::UnknownId {
                kind: "message",
                id: m_id.clone(),
            })?;
        let v = *comp
            .vert_idx
            .get(v_id.as_str())
            .ok_or_else(|| SimError::UnknownId {
                kind: "vertex",
                id: v_id.clone(),
            })?;
        pos[m] = v as u32;
    }
    if let Some(m) = pos.iter().position(|&v| v == u32::MAX) {
        return Err(SimError::BadConfiguration(format!(
            "message {:?} has no position",
            comp.scenario.messages[m].id
        )));
    }
    Ok(pos)
}

pub(crate) fn indices_to_configuration(comp: &Compiled, pos: &[u32]) -> Configuration {
    Configuration {
        positions: pos
            .iter()
            .enumerate()
            .map(|(m, &v)| {
                (
                    comp.scenario.messages[m].id.clone(),
                    comp.scenario.network.vertices[v as usize].clone(),
                )
            })
            .collect(),
    }
}

/// Number of messages sitting at their target.
pub(crate) fn arrived_count(comp: &Compiled, pos: &[u32]) -> usize {
    pos.iter()
        .enumerate()
        .filter(|&(m, &v)| comp.msg_target[m] == v as usize)
        .count()
}

/// Phase 1 of a slot: the forwarding output of every vertex, as
/// `(message, global edge)` pairs in (vertex, message) order.
///
/// `edge_active` is consulted exactly for the out-edges of occupied vertices,
/// which lets callers resolve fault knowledge lazily.
pub(crate) fn forward_phase(
    comp: &Compiled,
    pos: &[u32],
    edge_active: &mut dyn FnMut(usize) -> bool,
) -> Result<Vec<(usize, usize)>, SchemeError> {
    let mut queues: BTreeMap<u32, u64> = BTreeMap::new();
    for (m, &v) in pos.iter().enumerate() {
        *queues.entry(v).or_default() |= 1 << m;
    }
    let mut sends = Vec::new();
    for (&v, &qmask) in &queues {
        let v = v as usize;
        let out = &comp.out_edges[v];
        if out.is_empty() {
            continue;
        }
        let mut amask = 0u64;
        for (j, &e) in out.iter().enumerate() {
            if edge_active(e) {
                amask |= 1 << j;
            }
        }
        let ctx = crate::scheme::eval::Ctx {
            vertex: v,
            queue: qmask,
            active: amask,
        };
        let mut st = crate::scheme::eval::EvalState::new(comp);
        for (m, local) in st.output(&ctx)? {
            sends.push((m, out[local as usize]));
        }
    }
    Ok(sends)
}

/// Both slot phases over index-based state; fault knowledge via closures.
pub(crate) fn step_indexed(
    comp: &Compiled,
    pos: &mut [u32],
    edge_active: &mut dyn FnMut(usize) -> bool,
    delivered: &mut dyn FnMut(usize, usize) -> bool,
) -> Result<(), SchemeError> {
    let sends = forward_phase(comp, pos, edge_active)?;
    for (m, e) in sends {
        if delivered(m, e) {
            pos[m] = comp.edge_to[e] as u32;
        }
    }
    Ok(())
}

/// Advance one slot: forwarding under the active set `T`, then omission
/// fates.
///
/// `omission_fate` must be defined on exactly the forwarded pairs (`true`
/// delivers, `false` returns the message to the sender's queue).
pub fn step(
    s: &Scenario,
    c: &Configuration,
    active: &BTreeSet<String>,
    omission_fate: &BTreeMap<(String, String), bool>,
) -> Result<Configuration, SimError> {
    let comp = Compiled::new(s)?;
    let active_idx = resolve_active(&comp, active)?;
    let mut pos = positions_to_indices(&comp, c)?;
    let sends = forward_phase(&comp, &pos, &mut |e| active_idx.contains(&e))?;
    let forwarded: BTreeSet<(String, String)> = sends
        .iter()
        .map(|&(m, e)| {
            (
                s.messages[m].id.clone(),
                s.network.edges[e].id.clone(),
            )
        })
        .collect();
    let given: BTreeSet<(String, String)> = omission_fate.keys().cloned().collect();
    if forwarded != given {
        let missing: Vec<String> = forwarded
            .difference(&given)
            .map(|(m, e)| format!("({m}, {e})"))
            .collect();
        let extra: Vec<String> = given
            .difference(&forwarded)
            .map(|(m, e)| format!("({m}, {e})"))
            .collect();
        return Err(SimError::FateDomainMismatch(format!(
            "missing fates [{}], unexpected fates [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    for (m, e) in sends {
        let key = (
            s.messages[m].id.clone(),
            s.network.edges[e].id.clone(),
        );
        if omission_fate[&key] {
            pos[m] = comp.edge_to[e] as u32;
        }
    }
    Ok(indices_to_configuration(&comp, &pos))
}

fn resolve_active(
    comp: &Compiled,
    active: &BTreeSet<String>,
) -> Result<BTreeSet<usize>, SimError> {
    active
        .iter()
        .map(|id| {
            comp.edge_idx
                .get(id.as_str())
                .copied()
                .ok_or_else(|| SimError::UnknownId {
                    kind: "edge",
                    id: id.clone(),
                })
        })
        .collect()
}

/// Deterministically fold [`step`] over a fault sequence.
///
/// Checks the sequence invariants: `t` slots, permanent runs have shrinking
/// active sets, and each slot's delivered pairs are a subset of what was
/// actually forwarded.
pub fn run(s: &Scenario, f: &FaultSequence) -> Result<Outcome, SimError> {
    if f.slots.len() != s.timeout as usize {
        return Err(SimError::WrongSlotCount {
            expected: s.timeout,
            got: f.slots.len(),
        });
    }
    if s.fault_model == FaultModel::Permanent {
        for (i, pair) in f.slots.windows(2).enumerate() {
            if !pair[1].active.is_subset(&pair[0].active) {
                return Err(SimError::NonMonotoneActive {
                    slot: i as u32 + 2,
                });
            }
        }
    }
    let comp = Compiled::new(s)?;
    let mut pos = positions_to_indices(&comp, &Configuration::initial(s))?;
    let mut configurations = vec![indices_to_configuration(&comp, &pos)];
    for (i, slot) in f.slots.iter().enumerate() {
        let active_idx = resolve_active(&comp, &slot.active)?;
        let sends = forward_phase(&comp, &pos, &mut |e| active_idx.contains(&e))?;
        let forwarded: BTreeSet<(String, String)> = sends
            .iter()
            .map(|&(m, e)| {
                (
                    s.messages[m].id.clone(),
                    s.network.edges[e].id.clone(),
                )
            })
            .collect();
        if let Some(stray) = slot.delivered.difference(&forwarded).next() {
            return Err(SimError::FateDomainMismatch(format!(
                "slot {}: ({}, {}) declared delivered but never forwarded",
                i + 1,
                stray.0,
                stray.1
            )));
        }
        for (m, e) in sends {
            let key = (
                s.messages[m].id.clone(),
                s.network.edges[e].id.clone(),
            );
            if slot.delivered.contains(&key) {
                pos[m] = comp.edge_to[e] as u32;
            }
        }
        configurations.push(indices_to_configuration(&comp, &pos));
    }
    Ok(Outcome { configurations })
}

/// Messages whose final position is their target.
pub fn arrivals(s: &Scenario, o: &Outcome) -> usize {
    let finish = o.finish();
    s.messages
        .iter()
        .filter(|m| finish.positions.get(&m.id) == Some(&m.target))
        .count()
}

/// Draw one fault sequence: eager per-slot crash draws for every edge,
/// omission fates only for pairs actually forwarded (forwarding depends on
/// the drawn active sets, so sampling interleaves with stepping).
pub fn sample_fault_sequence<R: rand::Rng>(
    s: &Scenario,
    rng: &mut R,
) -> Result<FaultSequence, SimError> {
    let comp = Compiled::new(s)?;
    let mut alive: Vec<bool> = comp.p_crash.iter().map(|&p| p < 1.0).collect();
    let mut pos = positions_to_indices(&comp, &Configuration::initial(s))?;
    let mut slots = Vec::with_capacity(s.timeout as usize);
    for _ in 0..s.timeout {
        match s.fault_model {
            FaultModel::Temporary => {
                for (e, a) in alive.iter_mut().enumerate() {
                    *a = !rng.gen_bool(comp.p_crash[e]);
                }
            }
            FaultModel::Permanent => {
                for (e, a) in alive.iter_mut().enumerate() {
                    if *a && rng.gen_bool(comp.p_crash[e]) {
                        *a = false;
                    }
                }
            }
        }
        let sends = forward_phase(&comp, &pos, &mut |e| alive[e])?;
        let mut delivered = BTreeSet::new();
        for (m, e) in sends {
            if !rng.gen_bool(comp.p_omit[e]) {
                delivered.insert((
                    s.messages[m].id.clone(),
                    s.network.edges[e].id.clone(),
                ));
                pos[m] = comp.edge_to[e] as u32;
            }
        }
        slots.push(SlotFaults {
            active: alive
                .iter()
                .enumerate()
                .filter(|&(_, &a)| a)
                .map(|(e, _)| s.network.edges[e].id.clone())
                .collect(),
            delivered,
        });
    }
    Ok(FaultSequence { slots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;
    use rand::SeedableRng;

    fn delivered_seq(active: &[&str], pairs: &[(&str, &str)]) -> SlotFaults {
        SlotFaults {
            active: active.iter().map(|s| s.to_string()).collect(),
            delivered: pairs
                .iter()
                .map(|(m, e)| (m.to_string(), e.to_string()))
                .collect(),
        }
    }

    #[test]
    fn step_moves_delivers_and_returns() {
        let s = fixtures::unit_link();
        let c = Configuration::initial(&s);
        let active: BTreeSet<String> = ["e1".to_string()].into();
        let deliver = BTreeMap::from([(("m1".to_string(), "e1".to_string()), true)]);
        let next = step(&s, &c, &active, &deliver).unwrap();
        assert_eq!(next.positions["m1"], "v");
        let omit = BTreeMap::from([(("m1".to_string(), "e1".to_string()), false)]);
        let next = step(&s, &c, &active, &omit).unwrap();
        assert_eq!(next.positions["m1"], "u");
        let crashed = step(&s, &c, &BTreeSet::new(), &BTreeMap::new()).unwrap();
        assert_eq!(crashed.positions["m1"], "u");
    }

    #[test]
    fn step_rejects_fate_domain_mismatch() {
        let s = fixtures::unit_link();
        let c = Configuration::initial(&s);
        let active: BTreeSet<String> = ["e1".to_string()].into();
        let err = step(&s, &c, &active, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, SimError::FateDomainMismatch(_)), "{err}");
    }

    #[test]
    fn run_folds_steps_and_counts_arrivals() {
        let s = fixtures::unit_link();
        let f = FaultSequence {
            slots: vec![delivered_seq(&["e1"], &[("m1", "e1")])],
        };
        let o = run(&s, &f).unwrap();
        assert_eq!(o.configurations.len(), 2);
        assert_eq!(arrivals(&s, &o), 1);
        let all_crash = FaultSequence {
            slots: vec![delivered_seq(&[], &[])],
        };
        let o = run(&s, &all_crash).unwrap();
        assert_eq!(o.finish().positions["m1"], "u");
        assert_eq!(arrivals(&s, &o), 0);
        // Determinism.
        assert_eq!(run(&s, &f).unwrap(), run(&s, &f).unwrap());
    }

    #[test]
    fn run_rejects_growing_active_set_under_permanent_faults() {
        let s = fixtures::parallel_two(crate::model::FaultModel::Permanent, 0.1);
        let mut s2 = s.clone();
        s2.timeout = 2;
        let f = FaultSequence {
            slots: vec![
                delivered_seq(&[], &[]),
                delivered_seq(&["e1"], &[("m1", "e1")]),
            ],
        };
        let err = run(&s2, &f).unwrap_err();
        assert!(matches!(err, SimError::NonMonotoneActive { slot: 2 }), "{err}");
    }

    #[test]
    fn run_rejects_undeclared_delivery() {
        let s = fixtures::unit_link();
        let f = FaultSequence {
            slots: vec![delivered_seq(&[], &[("m1", "e1")])],
        };
        let err = run(&s, &f).unwrap_err();
        assert!(matches!(err, SimError::FateDomainMismatch(_)), "{err}");
    }

    #[test]
    fn sampling_is_deterministic_and_respects_extremes() {
        let mut s = fixtures::unit_link();
        s.network.edges[0].p_crash = 0.0;
        s.network.edges[0].p_omit = 0.0;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let f = sample_fault_sequence(&s, &mut rng).unwrap();
        assert!(f.slots[0].active.contains("e1"));
        assert!(f.slots[0].delivered.contains(&("m1".into(), "e1".into())));

        let mut s1 = fixtures::parallel_two(crate::model::FaultModel::Permanent, 1.0);
        s1.network.edges[1].p_crash = 0.0;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let f = sample_fault_sequence(&s1, &mut rng).unwrap();
        assert!(!f.slots[0].active.contains("e1"));
        assert!(f.slots[0].active.contains("e2"));

        let s2 = fixtures::unit_link();
        let mut a = rand_chacha::ChaCha12Rng::seed_from_u64(42);
        let mut b = rand_chacha::ChaCha12Rng::seed_from_u64(42);
        assert_eq!(
            sample_fault_sequence(&s2, &mut a).unwrap(),
            sample_fault_sequence(&s2, &mut b).unwrap()
        );
    }

    #[test]
    fn sampled_permanent_sequences_are_monotone() {
        let mut s = fixtures::parallel_two(crate::model::FaultModel::Permanent, 0.4);
        s.timeout = 5;
        for seed in 0..50 {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let f = sample_fault_sequence(&s, &mut rng).unwrap();
            for pair in f.slots.windows(2) {
                assert!(pair[1].active.is_subset(&pair[0].active));
            }
            // And run accepts its own samples.
            run(&s, &f).unwrap();
        }
    }
}
