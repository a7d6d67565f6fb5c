//! Scoring engines for deterministic forwarding schemes on switched networks
//! with probabilistic link faults.
//!
//! A *scenario* bundles a directed network, a set of messages with sources and
//! targets, a propositional forwarding scheme, a fault model (temporary or
//! permanent link crashes plus per-send omissions), a timeout `t` and an
//! arrival guarantee `l`. The *score* of the scenario is the probability that
//! at least `l` messages reach their targets within `t` slots.
//!
//! The crate provides several routes to that number, which agree on every
//! scenario within their size caps:
//!
//! * [`sim::score_enumerate`] — exhaustive enumeration of fault branchings,
//! * [`sim::build_product_chain`] + [`sim::chain_reachability`] — an explicit
//!   Markov chain over joint message positions,
//! * [`encoder::score_exact`] — weighted model counting of a CNF encoding of
//!   the bounded execution,
//! * [`estimator::score_iterative`] — an anytime bracket that conditions on
//!   the number of permanent crashes,
//! * [`estimator::score_monte_carlo`] — seeded sampling with Hoeffding-style
//!   sample sizes.
//!
//! [`reduction`] converts 3CNF formulas into scenarios whose score determines
//! the formula's model count, which doubles as an end-to-end self-check of the
//! exact engines. All probabilities are 64-bit floats; the documented
//! comparison tolerance between engines is `1e-9`.

// WIP: modules land bottom-up; restore as files exist.
pub mod encoder;
pub mod estimator;
pub mod model;
pub mod reduction;
pub mod report;
pub mod scheme;
pub mod sim;

pub(crate) mod compiled;

pub use model::{
    generate_random_scenario, load_scenario, parse_scenario, save_scenario, scenario_to_json,
    validate_scenario, Edge, FaultModel, MessageSpec, Network, Scenario, Violation,
};
pub use scheme::{
    build_from_tt_schedule, build_hot_potato, eval_assertion, forwarding_output, validate_scheme,
    Assertion, EdgeTerm, ForwardingScheme, MsgTerm, Rule, SchemeError, SetBody, SetDef, SetKind,
    TtSchedule,
};
pub use sim::{
    arrivals, build_frame, build_product_chain, chain_reachability, run, sample_fault_sequence,
    score_enumerate, step, ChainState, Configuration, ExplicitChain, FaultSequence, Frame,
    FrameMove, Outcome, SimError, SlotFaults,
};

pub use encoder::{
    emit_weighted_dimacs, encode_counter, encode_scenario, exact_weighted_count, gadget_weights,
    load_weighted_dimacs, score_exact, to_literal_weighted, Cnf, CountOutcome, EncodeError,
    ScenarioEncoding, VarRole, VariableBook, WeightedFormula,
};
pub use estimator::{
    count_bad_with_k_crashes, k_crash_probability, mc_sample_size, score_iterative,
    score_monte_carlo, tilt_bound, EstimatorError, IterationRecord, IterativeOutcome, McConfig,
    McOutcome,
};
pub use reduction::{
    model_count_via_score, parse_dimacs_3cnf, reduce_3cnf, Lit3, ReductionError, ThreeCnf,
};
pub use report::{Interval, ReportParams, ScoreReport};
