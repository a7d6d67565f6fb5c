//! Seeded random scenario generation for benchmarks and cross-checks.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::{Edge, FaultModel, MessageSpec, Network, Scenario};
use crate::scheme::{build_hot_potato, SchemeError};

/// Upper bound on source/target re-draws per message.
const MAX_REDRAWS: u32 = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerateError {
    #[error("need at least 2 vertices, got {0}")]
    TooFewVertices(u32),
    #[error("no directed route for message {message} after {MAX_REDRAWS} endpoint draws")]
    NoRoute { message: String },
    #[error("generated scheme was rejected: {0}")]
    Scheme(#[from] SchemeError),
}

/// Hop distances to `target`, by reverse breadth-first search in edge
/// declaration order. `u32::MAX` marks unreachable vertices.
fn dist_to(target: usize, n: usize, edges: &[(usize, usize)]) -> Vec<u32> {
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(from, to) in edges {
        preds[to].push(from);
    }
    let mut dist = vec![u32::MAX; n];
    dist[target] = 0;
    let mut frontier = std::collections::VecDeque::from([target]);
    while let Some(v) = frontier.pop_front() {
        for &p in &preds[v] {
            if dist[p] == u32::MAX {
                dist[p] = dist[v] + 1;
                frontier.push_back(p);
            }
        }
    }
    dist
}

/// Random dense scenario: `⌊2.5·n⌋` edges, `max(1, ⌊n/2⌋)` messages with
/// random distinct endpoints, hot-potato scheme with a shortest first-choice
/// path and the shortest-path DAG as fallbacks, permanent crashes, and
/// uniform `p_crash = p_omit = 0.01`. Timeout is `n`, the guarantee is the
/// message count. Pure function of `(n_vertices, seed)`.
pub fn generate_random_scenario(n_vertices: u32, seed: u64) -> Result<Scenario, GenerateError> {
    if n_vertices < 2 {
        return Err(GenerateError::TooFewVertices(n_vertices));
    }
    let n = n_vertices as usize;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    random_routed_scenario(n, n * 5 / 2, 1.max(n / 2), n_vertices, &mut rng)
}

/// Shared assembly: random endpoints, routable messages, hot-potato scheme.
/// Edges carry `p_crash = p_omit = 0.01` and the model is permanent; callers
/// wanting other fault parameters overwrite them afterwards.
pub(crate) fn random_routed_scenario(
    n: usize,
    ne: usize,
    nm: usize,
    timeout: u32,
    rng: &mut ChaCha12Rng,
) -> Result<Scenario, GenerateError> {
    let vertices: Vec<String> = (1..=n).map(|i| format!("v{i}")).collect();
    let mut endpoints: Vec<(usize, usize)> = Vec::with_capacity(ne);
    for _ in 0..ne {
        let from = rng.gen_range(0..n);
        let mut to = rng.gen_range(0..n - 1);
        if to >= from {
            to += 1;
        }
        endpoints.push((from, to));
    }
    let edges: Vec<Edge> = endpoints
        .iter()
        .enumerate()
        .map(|(k, &(from, to))| Edge {
            id: format!("e{}", k + 1),
            from: vertices[from].clone(),
            to: vertices[to].clone(),
            p_crash: 0.01,
            p_omit: 0.01,
        })
        .collect();
    let mut out_order: BTreeMap<String, Vec<String>> =
        vertices.iter().map(|v| (v.clone(), Vec::new())).collect();
    for e in &edges {
        out_order.get_mut(&e.from).unwrap().push(e.id.clone());
    }
    let mut out_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, &(from, _)) in endpoints.iter().enumerate() {
        out_adj[from].push(k);
    }

    let mut messages = Vec::with_capacity(nm);
    let mut first_choice = BTreeMap::new();
    let mut fallbacks = BTreeMap::new();
    for k in 1..=nm {
        let id = format!("m{k}");
        let mut routed = false;
        for _ in 0..MAX_REDRAWS {
            let source = rng.gen_range(0..n);
            let mut target = rng.gen_range(0..n - 1);
            if target >= source {
                target += 1;
            }
            let dist = dist_to(target, n, &endpoints);
            if dist[source] == u32::MAX {
                continue;
            }
            // First choice: walk the shortest-path DAG greedily; fallbacks:
            // every edge that strictly approaches the target.
            let mut path = Vec::new();
            let mut pos = source;
            while pos != target {
                let &step = out_adj[pos]
                    .iter()
                    .find(|&&e| {
                        let head = endpoints[e].1;
                        dist[head] != u32::MAX && dist[head] + 1 == dist[pos]
                    })
                    .expect("reachable vertex has a distance-decreasing edge");
                path.push(edges[step].id.clone());
                pos = endpoints[step].1;
            }
            let dag: Vec<String> = endpoints
                .iter()
                .enumerate()
                .filter(|(_, &(from, to))| {
                    dist[from] != u32::MAX
                        && dist[to] != u32::MAX
                        && dist[from] == dist[to] + 1
                })
                .map(|(e, _)| edges[e].id.clone())
                .collect();
            messages.push(MessageSpec {
                id: id.clone(),
                source: vertices[source].clone(),
                target: vertices[target].clone(),
            });
            first_choice.insert(id.clone(), path);
            fallbacks.insert(id.clone(), dag);
            routed = true;
            break;
        }
        if !routed {
            return Err(GenerateError::NoRoute { message: id });
        }
    }

    let mut scenario = Scenario {
        network: Network {
            vertices,
            edges,
            out_order,
        },
        messages,
        scheme: crate::scheme::ForwardingScheme::empty(),
        timeout,
        guarantee: nm as u32,
        fault_model: FaultModel::Permanent,
    };
    scenario.scheme = build_hot_potato(&scenario, &first_choice, &fallbacks)?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_vertices_ten_edges_and_deterministic() {
        let a = generate_random_scenario(4, 1).unwrap();
        assert_eq!(a.network.vertices.len(), 4);
        assert_eq!(a.network.edges.len(), 10);
        let b = generate_random_scenario(4, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_vertices_give_five_edges_with_parallels() {
        for seed in 0..20 {
            let s = generate_random_scenario(2, seed).unwrap();
            assert_eq!(s.network.vertices.len(), 2);
            assert_eq!(s.network.edges.len(), 5);
            assert_eq!(s.messages.len(), 1);
        }
    }

    #[test]
    fn different_seeds_differ_structurally() {
        let a = generate_random_scenario(4, 1).unwrap();
        let b = generate_random_scenario(4, 2).unwrap();
        let ends = |s: &Scenario| -> Vec<(String, String)> {
            s.network
                .edges
                .iter()
                .map(|e| (e.from.clone(), e.to.clone()))
                .collect()
        };
        assert_ne!(ends(&a), ends(&b));
    }

    #[test]
    fn generated_scenarios_validate_cleanly() {
        for seed in [1, 7, 42] {
            for n in [2, 4, 6] {
                let s = generate_random_scenario(n, seed).unwrap();
                let violations = crate::model::validate_scenario(&s);
                assert_eq!(violations, Vec::new(), "n={n} seed={seed}");
            }
        }
    }

    #[test]
    fn too_few_vertices_is_rejected() {
        assert!(matches!(
            generate_random_scenario(1, 0),
            Err(GenerateError::TooFewVertices(1))
        ));
    }
}
