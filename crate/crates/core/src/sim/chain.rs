//! Explicit product Markov chain over joint message positions.
//!
//! States alternate between two layers: position states (every message at a
//! vertex) and send states (forwarded messages sitting on their edges). A
//! position state branches over crash letters and lands in a send state; the
//! send state branches over omission fates and lands in the next position
//! state, so one slot is exactly two micro-steps. Under permanent crashes
//! the states additionally carry the set of still-alive fallible edges, which
//! keeps the chain memoryless. Position states with enough arrivals are
//! absorbing and accepting; [`chain_reachability`] over `2 * timeout`
//! micro-steps therefore recovers the score.
//!
//! Only reachable states are built. Crash letters marginalize out edges that
//! no reachable message could ever be offered, so the blow-up is bounded by
//! the fallible edges near the action rather than the whole network.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::compiled::Compiled;
use crate::model::{FaultModel, Scenario};
use crate::sim::{forward_phase, SimError};

pub(crate) const DEFAULT_STATE_CAP: usize = 1_000_000;
/// Most fault draws a single micro-step may branch over (2^20 letters).
const MAX_DRAWS_PER_STEP: u32 = 20;

/// One chain state, with places resolved back to ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainState {
    /// Per message (declaration order): a vertex id, or an edge id while the
    /// message is in flight on the send layer.
    pub places: Vec<String>,
    /// True for the intermediate layer between forwarding and omission.
    pub send_layer: bool,
    /// Surviving fallible edges (permanent fault model only).
    pub alive: Option<BTreeSet<String>>,
}

/// Reachable product chain of a scenario.
#[derive(Debug, Clone)]
pub struct ExplicitChain {
    pub states: Vec<ChainState>,
    pub initial: usize,
    /// `transitions[i]`: `(successor, probability)` pairs, merged per
    /// successor; every row sums to 1.
    pub transitions: Vec<Vec<(usize, f64)>>,
    /// Absorbing states where at least `guarantee` messages have arrived.
    pub accepting: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    /// Vertex index, or `nv + edge` for in-flight messages.
    places: Vec<u32>,
    send: bool,
    /// Bitmask over the tracked edge list.
    alive: u64,
}

/// Build the reachable chain (at most 10^6 states).
pub fn build_product_chain(s: &Scenario) -> Result<ExplicitChain, SimError> {
    build_product_chain_capped(s, DEFAULT_STATE_CAP)
}

pub(crate) fn build_product_chain_capped(
    s: &Scenario,
    state_cap: usize,
) -> Result<ExplicitChain, SimError> {
    let comp = Compiled::new(s)?;
    let nv = comp.nv as u32;
    let permanent = s.fault_model == FaultModel::Permanent;

    // Fallible edges a message could ever be offered: out-edges of vertices
    // reachable from some source. Every other edge's draws marginalize out.
    let tracked: Vec<usize> = if permanent {
        let mut reach = vec![false; comp.nv];
        let mut queue: VecDeque<usize> = comp.msg_source.iter().copied().collect();
        for &v in &comp.msg_source {
            reach[v] = true;
        }
        while let Some(v) = queue.pop_front() {
            for &e in &comp.out_edges[v] {
                let w = comp.edge_to[e];
                if !reach[w] {
                    reach[w] = true;
                    queue.push_back(w);
                }
            }
        }
        (0..comp.ne)
            .filter(|&e| comp.p_crash[e] > 0.0 && comp.p_crash[e] < 1.0 && reach[comp.edge_from[e]])
            .collect()
    } else {
        Vec::new()
    };
    if tracked.len() > MAX_DRAWS_PER_STEP as usize {
        return Err(SimError::ChainTooLarge(format!(
            "{} fallible edges to track under permanent faults (max {MAX_DRAWS_PER_STEP})",
            tracked.len()
        )));
    }
    let tracked_bit: BTreeMap<usize, u32> = tracked
        .iter()
        .enumerate()
        .map(|(bit, &e)| (e, bit as u32))
        .collect();

    let mut index: BTreeMap<Key, usize> = BTreeMap::new();
    let mut keys: Vec<Key> = Vec::new();
    let mut transitions: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut accepting: Vec<bool> = Vec::new();
    let mut worklist: VecDeque<usize> = VecDeque::new();

    let intern = |key: Key,
                      index: &mut BTreeMap<Key, usize>,
                      keys: &mut Vec<Key>,
                      worklist: &mut VecDeque<usize>|
     -> Result<usize, SimError> {
        if let Some(&i) = index.get(&key) {
            return Ok(i);
        }
        if keys.len() >= state_cap {
            return Err(SimError::ChainTooLarge(format!(
                "more than {state_cap} reachable states"
            )));
        }
        let i = keys.len();
        index.insert(key.clone(), i);
        keys.push(key);
        worklist.push_back(i);
        Ok(i)
    };

    let initial_key = Key {
        places: comp.msg_source.iter().map(|&v| v as u32).collect(),
        send: false,
        alive: if tracked.is_empty() {
            0
        } else {
            (1u64 << tracked.len()) - 1
        },
    };
    let initial = intern(initial_key, &mut index, &mut keys, &mut worklist)?;

    while let Some(i) = worklist.pop_front() {
        let key = keys[i].clone();
        transitions.resize(keys.len(), Vec::new());
        accepting.resize(keys.len(), false);

        if !key.send {
            let arrived = key
                .places
                .iter()
                .enumerate()
                .filter(|&(m, &p)| p == comp.msg_target[m] as u32)
                .count();
            if arrived >= s.guarantee as usize {
                accepting[i] = true;
                transitions[i] = vec![(i, 1.0)];
                continue;
            }
        }

        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        if !key.send {
            // Crash micro-step: draw fates, forward, land on the send layer.
            let occupied: BTreeSet<usize> =
                key.places.iter().map(|&p| p as usize).collect();
            let draws: Vec<usize> = if permanent {
                tracked
                    .iter()
                    .copied()
                    .filter(|&e| key.alive & (1 << tracked_bit[&e]) != 0)
                    .collect()
            } else {
                let mut qs: Vec<usize> = occupied
                    .iter()
                    .flat_map(|&v| comp.out_edges[v].iter().copied())
                    .filter(|&e| comp.p_crash[e] > 0.0 && comp.p_crash[e] < 1.0)
                    .collect();
                qs.sort_unstable();
                qs.dedup();
                qs
            };
            if draws.len() > MAX_DRAWS_PER_STEP as usize {
                return Err(SimError::ChainTooLarge(format!(
                    "a crash micro-step branches over {} fallible edges (max {MAX_DRAWS_PER_STEP})",
                    draws.len()
                )));
            }
            for letter in 0u64..(1 << draws.len()) {
                let mut prob = 1.0;
                for (bit, &e) in draws.iter().enumerate() {
                    let survives = letter & (1 << bit) != 0;
                    prob *= if survives {
                        1.0 - comp.p_crash[e]
                    } else {
                        comp.p_crash[e]
                    };
                }
                let mut new_alive = key.alive;
                if permanent {
                    for (bit, &e) in draws.iter().enumerate() {
                        if letter & (1 << bit) == 0 {
                            new_alive &= !(1 << tracked_bit[&e]);
                        }
                    }
                }
                let survives_now = |e: usize| -> bool {
                    if comp.p_crash[e] <= 0.0 {
                        return true;
                    }
                    if comp.p_crash[e] >= 1.0 {
                        return false;
                    }
                    match draws.iter().position(|&d| d == e) {
                        Some(bit) => letter & (1 << bit) != 0,
                        // Permanent: fallible but already crashed earlier.
                        None => false,
                    }
                };
                let mut pos: Vec<u32> = key.places.clone();
                let sends = forward_phase(&comp, &pos, &mut |e| survives_now(e))?;
                for &(m, e) in &sends {
                    pos[m] = nv + e as u32;
                }
                let succ = intern(
                    Key {
                        places: pos,
                        send: true,
                        alive: new_alive,
                    },
                    &mut index,
                    &mut keys,
                    &mut worklist,
                )?;
                *merged.entry(succ).or_default() += prob;
            }
        } else {
            // Omission micro-step: each in-flight message lands or bounces.
            let inflight: Vec<(usize, usize)> = key
                .places
                .iter()
                .enumerate()
                .filter(|&(_, &p)| p >= nv)
                .map(|(m, &p)| (m, (p - nv) as usize))
                .collect();
            let uncertain: Vec<(usize, usize)> = inflight
                .iter()
                .copied()
                .filter(|&(_, e)| comp.p_omit[e] > 0.0 && comp.p_omit[e] < 1.0)
                .collect();
            if uncertain.len() > MAX_DRAWS_PER_STEP as usize {
                return Err(SimError::ChainTooLarge(format!(
                    "an omission micro-step branches over {} sends (max {MAX_DRAWS_PER_STEP})",
                    uncertain.len()
                )));
            }
            for letter in 0u64..(1 << uncertain.len()) {
                let mut prob = 1.0;
                for (bit, &(_, e)) in uncertain.iter().enumerate() {
                    let delivered = letter & (1 << bit) != 0;
                    prob *= if delivered {
                        1.0 - comp.p_omit[e]
                    } else {
                        comp.p_omit[e]
                    };
                }
                let mut pos = key.places.clone();
                for &(m, e) in &inflight {
                    let delivered = if comp.p_omit[e] <= 0.0 {
                        true
                    } else if comp.p_omit[e] >= 1.0 {
                        false
                    } else {
                        let bit = uncertain
                            .iter()
                            .position(|&(um, ue)| um == m && ue == e)
                            .expect("uncertain send indexed");
                        letter & (1 << bit) != 0
                    };
                    pos[m] = if delivered {
                        comp.edge_to[e] as u32
                    } else {
                        comp.edge_from[e] as u32
                    };
                }
                let succ = intern(
                    Key {
                        places: pos,
                        send: false,
                        alive: key.alive,
                    },
                    &mut index,
                    &mut keys,
                    &mut worklist,
                )?;
                *merged.entry(succ).or_default() += prob;
            }
        }
        transitions[i] = merged.into_iter().collect();
    }
    transitions.resize(keys.len(), Vec::new());
    accepting.resize(keys.len(), false);

    let states = keys
        .iter()
        .map(|key| ChainState {
            places: key
                .places
                .iter()
                .map(|&p| {
                    if p < nv {
                        s.network.vertices[p as usize].clone()
                    } else {
                        s.network.edges[(p - nv) as usize].id.clone()
                    }
                })
                .collect(),
            send_layer: key.send,
            alive: permanent.then(|| {
                tracked
                    .iter()
                    .enumerate()
                    .filter(|&(bit, _)| key.alive & (1 << bit) != 0)
                    .map(|(_, &e)| s.network.edges[e].id.clone())
                    .collect()
            }),
        })
        .collect();

    Ok(ExplicitChain {
        states,
        initial,
        transitions,
        accepting,
    })
}

/// Probability mass sitting in accepting states after `horizon` micro-steps
/// from the initial state (one slot = two micro-steps; accepting states are
/// absorbing, so pass `2 * timeout` to score a scenario).
pub fn chain_reachability(chain: &ExplicitChain, horizon: u32) -> f64 {
    let mut mass = vec![0.0; chain.states.len()];
    mass[chain.initial] = 1.0;
    for _ in 0..horizon {
        let mut next = vec![0.0; chain.states.len()];
        for (i, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for &(j, p) in &chain.transitions[i] {
                next[j] += m * p;
            }
        }
        mass = next;
    }
    mass.iter()
        .zip(&chain.accepting)
        .filter(|&(_, &acc)| acc)
        .map(|(m, _)| m)
        .sum()
}
