//! Per-message frame automata.
//!
//! A frame tracks a single message through the network: its states are the
//! vertices plus the edges (an edge state means "in flight"). From a vertex
//! it reads the letter `(queue, active)` — the messages sharing the vertex
//! and the surviving edges — and either launches onto the edge the scheme
//! forwards it on or stays put. From an edge the omission fate decides
//! between the edge's head and a bounce back to its tail. Composing frame
//! moves against the faults of a concrete run reproduces that run's
//! trajectory for the message exactly.

use std::collections::BTreeSet;

use crate::model::Scenario;
use crate::scheme::forwarding_output;
use crate::sim::SimError;

/// One vertex-state transition of a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameMove {
    /// No rule moved the message; it stays in the vertex's queue.
    Stay,
    /// The message was forwarded onto this edge.
    Launch(String),
}

/// Deterministic automaton for one message's movement.
#[derive(Debug, Clone)]
pub struct Frame<'a> {
    scenario: &'a Scenario,
    message: String,
}

/// Build the frame of `message` (states: every vertex and every edge).
pub fn build_frame<'a>(scenario: &'a Scenario, message: &str) -> Result<Frame<'a>, SimError> {
    if !scenario.messages.iter().any(|m| m.id == message) {
        return Err(SimError::UnknownId {
            kind: "message",
            id: message.to_string(),
        });
    }
    Ok(Frame {
        scenario,
        message: message.to_string(),
    })
}

impl Frame<'_> {
    pub fn message(&self) -> &str {
        &self.message
    }

    /// All states: vertices first, then edges, in declaration order.
    pub fn states(&self) -> Vec<String> {
        self.scenario
            .network
            .vertices
            .iter()
            .cloned()
            .chain(self.scenario.network.edges.iter().map(|e| e.id.clone()))
            .collect()
    }

    /// The message's source vertex.
    pub fn initial(&self) -> &str {
        &self
            .scenario
            .messages
            .iter()
            .find(|m| m.id == self.message)
            .expect("message checked at build time")
            .source
    }

    /// Vertex-state move under a slot letter: `queue` is the set of messages
    /// at `vertex` (this message included) and `active` the slot's surviving
    /// edges (edges elsewhere in the network are ignored).
    pub fn step_from_vertex(
        &self,
        vertex: &str,
        queue: &BTreeSet<String>,
        active: &BTreeSet<String>,
    ) -> Result<FrameMove, SimError> {
        if !queue.contains(&self.message) {
            return Err(SimError::BadConfiguration(format!(
                "frame letter for {:?} lacks the message itself",
                self.message
            )));
        }
        let local_active: BTreeSet<String> = self
            .scenario
            .network
            .out_order
            .get(vertex)
            .into_iter()
            .flatten()
            .filter(|e| active.contains(*e))
            .cloned()
            .collect();
        let sends = forwarding_output(self.scenario, vertex, queue, &local_active)?;
        Ok(sends
            .into_iter()
            .find(|(m, _)| *m == self.message)
            .map_or(FrameMove::Stay, |(_, e)| FrameMove::Launch(e)))
    }

    /// Edge-state move: delivery reaches the edge's head, an omission puts
    /// the message back at the tail.
    pub fn step_from_edge(&self, edge: &str, delivered: bool) -> Result<String, SimError> {
        let e = self
            .scenario
            .network
            .edges
            .iter()
            .find(|e| e.id == edge)
            .ok_or_else(|| SimError::UnknownId {
                kind: "edge",
                id: edge.to_string(),
            })?;
        Ok(if delivered { e.to.clone() } else { e.from.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;

    #[test]
    fn unit_link_frame_has_three_states() {
        let s = fixtures::unit_link();
        let f = build_frame(&s, "m1").unwrap();
        assert_eq!(f.states(), vec!["u", "v", "e1"]);
        assert_eq!(f.initial(), "u");
        assert!(matches!(
            build_frame(&s, "nope").unwrap_err(),
            SimError::UnknownId { kind: "message", .. }
        ));
    }

    #[test]
    fn vertex_moves_follow_the_scheme() {
        let s = fixtures::unit_link();
        let f = build_frame(&s, "m1").unwrap();
        let queue: BTreeSet<String> = ["m1".to_string()].into();
        let live: BTreeSet<String> = ["e1".to_string()].into();
        assert_eq!(
            f.step_from_vertex("u", &queue, &live).unwrap(),
            FrameMove::Launch("e1".into())
        );
        assert_eq!(
            f.step_from_vertex("u", &queue, &BTreeSet::new()).unwrap(),
            FrameMove::Stay
        );
        // At the target the message never launches.
        assert_eq!(
            f.step_from_vertex("v", &queue, &live).unwrap(),
            FrameMove::Stay
        );
    }

    #[test]
    fn edge_moves_split_on_the_omission_fate() {
        let s = fixtures::unit_link();
        let f = build_frame(&s, "m1").unwrap();
        assert_eq!(f.step_from_edge("e1", true).unwrap(), "v");
        assert_eq!(f.step_from_edge("e1", false).unwrap(), "u");
    }
}
