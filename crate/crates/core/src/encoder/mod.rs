//! CNF encoding of bounded executions and exact weighted model counting.
//!
//! [`encode_scenario`] unrolls a scenario into a CNF whose satisfying
//! assignments correspond one-to-one with the fault branchings that deliver
//! at least `guarantee` messages in time. [`to_literal_weighted`] attaches
//! literal weights (plus correction gadgets for the state-dependent omission
//! and permanent-crash probabilities) so that the weighted model count times
//! a normalization factor γ equals the score. [`exact_weighted_count`] is a
//! small exact counter for such formulas, and the weighted-DIMACS emitter /
//! loader make the instances portable to external counters.

mod build;
mod count;
mod counter;
mod dimacs;
mod weights;

pub use build::encode_scenario;
pub(crate) use build::{encode_core, Lit};
pub use count::exact_weighted_count;
pub use counter::encode_counter;
pub(crate) use counter::{encode_counter_below, encode_exactly};
pub use dimacs::{emit_weighted_dimacs, load_weighted_dimacs};
pub use weights::to_literal_weighted;

use std::collections::BTreeMap;

use crate::model::Scenario;
use crate::scheme::SchemeError;

/// CNF over variables `1..=num_vars`; clauses are nonempty unless the
/// instance is unsatisfiable by construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cnf {
    pub num_vars: u32,
    pub clauses: Vec<Vec<i32>>,
}

impl Cnf {
    pub fn new() -> Cnf {
        Cnf::default()
    }

    pub fn fresh_var(&mut self) -> u32 {
        self.num_vars += 1;
        self.num_vars
    }

    pub fn add_clause(&mut self, lits: Vec<i32>) {
        debug_assert!(
            lits.iter()
                .all(|&l| l != 0 && l.unsigned_abs() <= self.num_vars),
            "clause {lits:?} references unbooked variables"
        );
        self.clauses.push(lits);
    }
}

/// What a CNF variable stands for. Slot `k` runs from 1 to the timeout;
/// `micro` is the micro-step index: positions live on even micro-steps
/// (`2k`), crash and forwarded variables on odd ones (`2k - 1`), omission
/// variables on the following even one (`2k`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum VarRole {
    /// Message sits at a vertex after an even micro-step.
    Position { message: String, vertex: String, micro: u32 },
    /// Edge is crashed during the slot (true = crashed).
    Crash { edge: String, micro: u32 },
    /// The send on this edge was omitted (true = lost).
    Omit { edge: String, micro: u32 },
    /// Some message was forwarded on the edge in that slot.
    Forwarded { edge: String, micro: u32 },
    /// Omission-weight gadget: omitted and forwarded.
    GadgetA { edge: String, micro: u32 },
    /// Omission-weight gadget: not omitted and not forwarded.
    GadgetB { edge: String, micro: u32 },
    /// Permanent-crash gadget: crashed now, already crashed before.
    GadgetC { edge: String, micro: u32 },
    /// Permanent-crash gadget: crashed now, alive before.
    GadgetD { edge: String, micro: u32 },
    /// Bit `bit` of the `copy`-th arrival-counter state (both 1-based).
    CounterBit { copy: u32, bit: u32 },
    /// Anonymous subformula introduced while translating guards.
    Gate { id: u32 },
}

/// Bijection between CNF variable numbers and their roles.
#[derive(Debug, Clone, Default)]
pub struct VariableBook {
    roles: Vec<VarRole>,
    index: BTreeMap<VarRole, u32>,
}

impl VariableBook {
    pub fn new() -> VariableBook {
        VariableBook::default()
    }

    /// Allocate the next variable and record its role.
    pub fn fresh(&mut self, cnf: &mut Cnf, role: VarRole) -> u32 {
        let var = cnf.fresh_var();
        self.record(var, role);
        var
    }

    /// Record the role of a variable already allocated on the CNF; variables
    /// must be recorded in numbering order.
    pub fn record(&mut self, var: u32, role: VarRole) {
        assert_eq!(var as usize, self.roles.len() + 1, "book out of sync with cnf");
        let dup = self.index.insert(role.clone(), var);
        assert!(dup.is_none(), "role {role:?} booked twice");
        self.roles.push(role);
    }

    pub fn role(&self, var: u32) -> Option<&VarRole> {
        self.roles.get(var.checked_sub(1)? as usize)
    }

    pub fn var(&self, role: &VarRole) -> Option<u32> {
        self.index.get(role).copied()
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    /// All `(variable, role)` pairs in numbering order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, &VarRole)> {
        self.roles.iter().enumerate().map(|(i, r)| (i as u32 + 1, r))
    }
}

/// CNF plus the role book for every variable in it.
#[derive(Debug, Clone)]
pub struct ScenarioEncoding {
    pub cnf: Cnf,
    pub book: VariableBook,
}

/// Literal-weighted CNF; unlisted literals weigh 1 in both phases.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFormula {
    pub cnf: Cnf,
    /// Literal -> weight in [0, 1]; both phases of a weighted variable are
    /// listed and sum to 1.
    pub weights: BTreeMap<i32, f64>,
    /// Natural log of the normalization factor γ.
    pub ln_gamma: f64,
}

impl WeightedFormula {
    pub fn gamma(&self) -> f64 {
        self.ln_gamma.exp()
    }

    /// Enforce the phase-sum invariant for every weighted variable.
    pub fn check_weights(&self) -> Result<(), EncodeError> {
        let mut vars: Vec<u32> = self.weights.keys().map(|l| l.unsigned_abs()).collect();
        vars.sort_unstable();
        vars.dedup();
        for var in vars {
            let pos = self.weights.get(&(var as i32));
            let neg = self.weights.get(&-(var as i32));
            let sum = match (pos, neg) {
                (Some(&p), Some(&n)) => p + n,
                _ => f64::NAN,
            };
            if !((sum - 1.0).abs() < 1e-12) {
                return Err(EncodeError::BadWeights { var, sum });
            }
        }
        Ok(())
    }
}

/// Result of exact weighted counting, kept in log-space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountOutcome {
    /// ln of the weighted model count (`-inf` for zero).
    pub ln_count: f64,
    /// ln of the formula's γ.
    pub ln_gamma: f64,
}

impl CountOutcome {
    pub fn count(&self) -> f64 {
        self.ln_count.exp()
    }

    pub fn gamma(&self) -> f64 {
        self.ln_gamma.exp()
    }

    /// γ times the weighted count — the quantity the encoding preserves.
    pub fn scaled(&self) -> f64 {
        (self.ln_count + self.ln_gamma).exp()
    }
}

/// Failures of the encoding pipeline.
#[derive(Debug, thiserror::Error)]
pub enum EncodeError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("scenario failed validation: {0}")]
    Invalid(String),
    #[error("arrival threshold {ell} outside 1..={max}")]
    ThresholdOutOfRange { ell: u32, max: usize },
    #[error("weighted counting exceeded the cap of {cap} branch decisions")]
    CountTooLarge { cap: u64 },
    #[error("weights for variable {var} sum to {sum}, expected 1")]
    BadWeights { var: u32, sum: f64 },
    #[error("malformed weighted DIMACS: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Weights of the two correction-gadget variables for a fault of probability
/// `p` (`p < 1`), plus the per-gadget γ factor: the "fault and drawn" gadget
/// weighs `p`, the "no fault and not drawn" gadget `1 / (2 - p)`, and γ is
/// `(2 - p) / (1 - p)`, which together reproduce the conditional fault
/// probabilities exactly.
pub fn gadget_weights(p: f64) -> (f64, f64, f64) {
    (p, 1.0 / (2.0 - p), (2.0 - p) / (1.0 - p))
}

/// Score by weighted model counting: encode, weight, count, scale by γ.
pub fn score_exact(s: &Scenario) -> Result<f64, EncodeError> {
    let enc = encode_scenario(s)?;
    let (wf, _book) = to_literal_weighted(enc, s)?;
    Ok(exact_weighted_count(&wf)?.scaled())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;

    #[test]
    fn gadget_identities_hold() {
        let (a, b, g) = gadget_weights(0.5);
        assert_eq!(a, 0.5);
        assert!((b - 2.0 / 3.0).abs() < 1e-15);
        assert!((g - 3.0).abs() < 1e-15);
        for &p in &[0.0, 0.05, 0.25, 0.5, 0.9, 0.999] {
            let (a, b, g) = gadget_weights(p);
            assert!((g * a * (1.0 - b) - p).abs() < 1e-12);
            assert!((g * (1.0 - a) * (1.0 - b) - (1.0 - p)).abs() < 1e-12);
            assert!((g * (1.0 - a) * b - 1.0).abs() < 1e-12);
        }
        // p = 0: the impossible fault-and-drawn case gets weight zero.
        let (a, b, g) = gadget_weights(0.0);
        assert_eq!((a, b, g), (0.0, 0.5, 2.0));
        assert_eq!(g * a * (1.0 - b), 0.0);
    }

    #[test]
    fn book_keeps_the_bijection() {
        let mut cnf = Cnf::new();
        let mut book = VariableBook::new();
        let v = book.fresh(
            &mut cnf,
            VarRole::Crash { edge: "e1".into(), micro: 1 },
        );
        assert_eq!(v, 1);
        assert_eq!(
            book.role(1),
            Some(&VarRole::Crash { edge: "e1".into(), micro: 1 })
        );
        assert_eq!(
            book.var(&VarRole::Crash { edge: "e1".into(), micro: 1 }),
            Some(1)
        );
        assert_eq!(book.role(2), None);
        assert_eq!(book.len(), 1);
    }

    #[test]
    fn score_exact_matches_the_simulation_oracles() {
        assert!((score_exact(&fixtures::unit_link()).unwrap() - 0.855).abs() < 1e-9);
        let s = fixtures::parallel_two(crate::model::FaultModel::Temporary, 0.5);
        assert!((score_exact(&s).unwrap() - 0.75).abs() < 1e-9);
        let s = fixtures::parallel_two(crate::model::FaultModel::Permanent, 0.1);
        assert!((score_exact(&s).unwrap() - 0.99).abs() < 1e-9);
        let mut sure = fixtures::unit_link();
        sure.network.edges[0].p_crash = 0.0;
        sure.network.edges[0].p_omit = 0.0;
        assert_eq!(score_exact(&sure).unwrap(), 1.0);
    }

    #[test]
    fn score_exact_handles_multi_slot_fault_memory() {
        // Same closed forms as the enumeration tests: the retry after an
        // omission draws the crash conditionally under permanent faults.
        let mut s = fixtures::unit_link();
        s.timeout = 2;
        s.network.edges[0].p_crash = 0.3;
        s.network.edges[0].p_omit = 0.2;
        let expected = 0.56 + (1.0 - 0.56) * 0.56;
        assert!((score_exact(&s).unwrap() - expected).abs() < 1e-9);
        s.fault_model = crate::model::FaultModel::Permanent;
        let expected = 0.7 * 0.8 + 0.7 * 0.2 * 0.7 * 0.8;
        assert!((score_exact(&s).unwrap() - expected).abs() < 1e-9);
    }
}
