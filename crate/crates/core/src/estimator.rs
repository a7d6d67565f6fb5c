//! Score estimation beyond brute force: certified brackets and sampling.
//!
//! The iterative estimator partitions the fault space of a permanent-crash,
//! omission-free scenario by how many edges have crashed by the timeout.
//! Each class's total mass has a closed form; the failing mass inside a
//! class is an exact weighted count of the unrolled dynamics with two extra
//! constraint blocks (exactly `k` crashed edges, arrivals below the
//! guarantee). Processing classes for `k = 0, 1, ...` yields lower/upper
//! brackets that tighten monotonically and can stop at any requested width.
//!
//! The Monte Carlo estimator replays independently seeded fault sequences
//! and reports the arrival frequency. Each trial's generator is derived from
//! the base seed and the trial index, so the estimate depends only on
//! `(seed, n)` and never on how trials are spread across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{
    encode_core, encode_counter_below, encode_exactly, exact_weighted_count, to_literal_weighted,
    EncodeError, Lit, VarRole,
};
use crate::model::{FaultModel, Scenario};
use crate::sim::{arrivals, run, sample_fault_sequence, SimError};

/// Failures of the estimators.
#[derive(Debug, thiserror::Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("the crash-count iteration does not support this scenario: {0}")]
    Unsupported(String),
    #[error("invalid estimator parameter: {0}")]
    BadParameter(String),
}

/// Probability that exactly `k` of `edge_count` edges have crashed by slot
/// `t`, each crashing permanently with per-slot probability `p`.
///
/// An edge survives all `t` slots with probability `(1-p)^t`; the count of
/// crashed edges is binomial in the complement.
pub fn k_crash_probability(edge_count: usize, k: usize, p: f64, t: u32) -> f64 {
    if k > edge_count {
        return 0.0;
    }
    let survive = (1.0 - p).powi(t as i32);
    binomial(edge_count, k) * survive.powi((edge_count - k) as i32) * (1.0 - survive).powi(k as i32)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k.min(n - k)).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Worst-case probability ratio between two fault patterns in the same
/// `k`-crash class: `(1-p)^{-k(t-1)}`.
///
/// Within a class the crashed edges are fixed but their crash slots are
/// not; moving one crash from the last slot to the first multiplies the
/// pattern's probability by at most `1/(1-p)` per slot moved, and `k`
/// crashes can each move at most `t-1` slots. Purely informational — the
/// iteration counts classes exactly — but useful when judging how skewed a
/// class can be before trusting per-class sampling.
pub fn tilt_bound(k: usize, p: f64, t: u32) -> f64 {
    (1.0 - p).powi(-((k as i32) * (t as i32 - 1)))
}

/// The uniform crash probability of a permanent, omission-free scenario.
fn uniform_permanent_crash(s: &Scenario) -> Result<f64, EstimatorError> {
    if s.fault_model != FaultModel::Permanent {
        return Err(EstimatorError::Unsupported(
            "crash counts are only meaningful for permanent crashes".into(),
        ));
    }
    if s.network.edges.iter().any(|e| e.p_omit != 0.0) {
        return Err(EstimatorError::Unsupported(
            "omissions must be disabled (every p_omit = 0)".into(),
        ));
    }
    let p = s.network.edges.first().map_or(0.0, |e| e.p_crash);
    if s.network.edges.iter().any(|e| e.p_crash != p) {
        return Err(EstimatorError::Unsupported(
            "crash probabilities must be uniform across edges".into(),
        ));
    }
    Ok(p)
}

/// Probability that exactly `k` edges crash by the timeout *and* fewer than
/// `guarantee` messages arrive. Exact, via weighted counting.
pub fn count_bad_with_k_crashes(s: &Scenario, k: usize) -> Result<f64, EstimatorError> {
    let p = uniform_permanent_crash(s)?;
    let ne = s.network.edges.len();
    if k > ne {
        return Err(EstimatorError::BadParameter(format!(
            "crash count {k} exceeds the {ne} edges"
        )));
    }

    let (enc, finals) = encode_core(s, true)?;

    // Crashed-by-timeout indicators: the last crash variable of each chain.
    let mut indicators: Vec<u32> = Vec::with_capacity(ne);
    if p > 0.0 && p < 1.0 {
        let last_micro = 2 * s.timeout - 1;
        for e in &s.network.edges {
            let var = enc
                .book
                .var(&VarRole::Crash { edge: e.id.clone(), micro: last_micro })
                .expect("full-chain encoding materialises every crash variable");
            indicators.push(var);
        }
    } else if k != if p >= 1.0 { ne } else { 0 } {
        // Deterministic crashes concentrate all mass on one class.
        return Ok(0.0);
    }

    let (mut wf, _book) = to_literal_weighted(enc, s)?;
    if !indicators.is_empty() {
        encode_exactly(&mut wf.cnf, &indicators, k as u32);
    }

    // Failure block: strictly fewer than `guarantee` final arrivals.
    let mut ell = s.guarantee as i64;
    let mut inputs: Vec<u32> = Vec::new();
    for lit in finals {
        match lit {
            Lit::Const(true) => ell -= 1,
            Lit::Const(false) => {}
            Lit::Var(l) => inputs.push(l as u32),
        }
    }
    if ell <= 0 {
        // Enough messages arrive under every fault pattern: nothing fails.
        return Ok(0.0);
    }
    if ell <= inputs.len() as i64 {
        encode_counter_below(&mut wf.cnf, &inputs, ell as u32)?;
    }
    // Otherwise the guarantee is unreachable and every pattern fails.

    Ok(exact_weighted_count(&wf)?.scaled())
}

/// One crash-count class: its total mass and its failing mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// Mass of all fault patterns with exactly `k` crashed edges.
    pub all: f64,
    /// Mass of those patterns on which fewer than `guarantee` arrive.
    pub bad: f64,
}

/// Where the crash-count iteration stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterativeOutcome {
    /// Mass proven good so far: the certified lower bound on the score.
    pub score: f64,
    /// Mass not yet attributed to any class; `score + uncertainty` is the
    /// matching upper bound.
    pub uncertainty: f64,
    /// Next class that would have been processed.
    pub k: usize,
    pub trace: Vec<IterationRecord>,
}

impl IterativeOutcome {
    pub fn lower(&self) -> f64 {
        self.score
    }

    pub fn upper(&self) -> f64 {
        self.score + self.uncertainty
    }
}

/// Process crash-count classes in increasing `k` until the bracket width
/// drops to `epsilon` (or every class is counted).
///
/// Small crash counts carry most of the mass when crashes are rare, so the
/// expensive exact counts go where they pay off first; `epsilon = 1.0`
/// returns the trivial bracket `[0, 1]` without counting anything, and
/// `epsilon = 0.0` degenerates to the exact score.
pub fn score_iterative(s: &Scenario, epsilon: f64) -> Result<IterativeOutcome, EstimatorError> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(EstimatorError::BadParameter(format!(
            "epsilon must lie in [0, 1], got {epsilon}"
        )));
    }
    let p = uniform_permanent_crash(s)?;
    let ne = s.network.edges.len();
    let mut out = IterativeOutcome { score: 0.0, uncertainty: 1.0, k: 0, trace: Vec::new() };
    while out.uncertainty > epsilon && out.k <= ne {
        let all = k_crash_probability(ne, out.k, p, s.timeout);
        let bad = count_bad_with_k_crashes(s, out.k)?;
        out.score += all - bad;
        out.uncertainty = (out.uncertainty - all).max(0.0);
        out.trace.push(IterationRecord { k: out.k, all, bad });
        out.k += 1;
    }
    Ok(out)
}

/// Samples needed so an empirical frequency lands within `epsilon` of its
/// mean with probability at least `delta`: `⌈ln(1/(1-δ)) / (2ε²)⌉`
/// (Hoeffding bound).
pub fn mc_sample_size(epsilon: f64, delta: f64) -> Result<u64, EstimatorError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(EstimatorError::BadParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(EstimatorError::BadParameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok(((1.0 / (1.0 - delta)).ln() / (2.0 * epsilon * epsilon)).ceil() as u64)
}

/// Monte Carlo parameters. Trial `i` seeds its own generator from
/// `(seed, i)`, so the estimate is a function of `(seed, n)` alone; the
/// worker count only spreads trials across threads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub n: u64,
    pub seed: u64,
    pub workers: usize,
}

impl McConfig {
    /// Size `n` by the Hoeffding bound for the requested accuracy.
    pub fn from_bounds(epsilon: f64, delta: f64, seed: u64) -> Result<McConfig, EstimatorError> {
        let n = mc_sample_size(epsilon, delta)?;
        Ok(McConfig { epsilon, delta, n, seed, workers: 1 })
    }
}

/// A Monte Carlo estimate: `successes / n` plus the run's parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOutcome {
    pub estimate: f64,
    pub successes: u64,
    pub config: McConfig,
}

/// Estimate the score as the fraction of sampled runs on which at least
/// `guarantee` messages arrive by the timeout.
pub fn score_monte_carlo(s: &Scenario, cfg: &McConfig) -> Result<McOutcome, EstimatorError> {
    if !(cfg.epsilon > 0.0 && cfg.epsilon < 1.0) {
        return Err(EstimatorError::BadParameter(format!(
            "epsilon must lie in (0, 1), got {}",
            cfg.epsilon
        )));
    }
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(EstimatorError::BadParameter(format!(
            "delta must lie in (0, 1), got {}",
            cfg.delta
        )));
    }
    if cfg.n == 0 {
        return Err(EstimatorError::BadParameter("at least one sample is required".into()));
    }
    if cfg.workers == 0 {
        return Err(EstimatorError::BadParameter("at least one worker is required".into()));
    }

    let successes = if cfg.workers == 1 {
        trials(s, cfg.seed, 0, cfg.n)?
    } else {
        let w = cfg.workers as u64;
        let per = cfg.n / w;
        let extra = cfg.n % w;
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            let mut start = 0u64;
            for i in 0..w {
                let len = per + u64::from(i < extra);
                handles.push(scope.spawn(move || trials(s, cfg.seed, start, start + len)));
                start += len;
            }
            let mut total = 0u64;
            for h in handles {
                total += h.join().expect("estimator worker panicked")?;
            }
            Ok::<u64, EstimatorError>(total)
        })?
    };
    Ok(McOutcome { estimate: successes as f64 / cfg.n as f64, successes, config: *cfg })
}

/// Run trials `[from, to)`, counting those meeting the guarantee.
fn trials(s: &Scenario, seed: u64, from: u64, to: u64) -> Result<u64, EstimatorError> {
    let mut hits = 0u64;
    for i in from..to {
        let mut rng = ChaCha12Rng::seed_from_u64(mix(seed, i));
        let f = sample_fault_sequence(s, &mut rng)?;
        let o = run(s, &f)?;
        if arrivals(s, &o) >= s.guarantee as usize {
            hits += 1;
        }
    }
    Ok(hits)
}

/// SplitMix64 finaliser over the `i`-th increment of the seed's stream.
fn mix(seed: u64, i: u64) -> u64 {
    let mut z = seed.wrapping_add(i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;
    use crate::sim::score_enumerate;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn crash_class_probabilities_match_hand_values() {
        assert!(close(k_crash_probability(2, 1, 0.5, 1), 0.5));
        assert!(close(k_crash_probability(2, 0, 0.5, 1), 0.25));
        assert_eq!(k_crash_probability(2, 3, 0.5, 1), 0.0);
    }

    #[test]
    fn crash_class_probabilities_partition_unity() {
        for (ne, p, t) in [(2usize, 0.5, 1u32), (5, 0.3, 4), (7, 0.05, 3), (3, 0.9, 2)] {
            let total: f64 = (0..=ne).map(|k| k_crash_probability(ne, k, p, t)).sum();
            assert!((total - 1.0).abs() < 1e-12, "ne={ne} p={p} t={t}: {total}");
        }
    }

    #[test]
    fn tilt_bound_examples() {
        assert_eq!(tilt_bound(0, 0.3, 9), 1.0);
        assert!(close(tilt_bound(1, 0.5, 2), 2.0));
        assert!(close(tilt_bound(2, 0.5, 3), 16.0));
    }

    #[test]
    fn bad_mass_per_class_on_parallel_links() {
        let s = fixtures::parallel_two(FaultModel::Permanent, 0.1);
        assert!(close(count_bad_with_k_crashes(&s, 0).unwrap(), 0.0));
        assert!(close(count_bad_with_k_crashes(&s, 1).unwrap(), 0.0));
        assert!(close(count_bad_with_k_crashes(&s, 2).unwrap(), 0.01));
    }

    #[test]
    fn bad_mass_rejects_unsupported_scenarios() {
        let temp = fixtures::parallel_two(FaultModel::Temporary, 0.5);
        assert!(matches!(
            count_bad_with_k_crashes(&temp, 0),
            Err(EstimatorError::Unsupported(_))
        ));

        let mut omit = fixtures::unit_link();
        omit.fault_model = FaultModel::Permanent;
        assert!(matches!(
            count_bad_with_k_crashes(&omit, 0),
            Err(EstimatorError::Unsupported(_))
        ));

        let mut skew = fixtures::parallel_two(FaultModel::Permanent, 0.1);
        skew.network.edges[1].p_crash = 0.2;
        assert!(matches!(
            count_bad_with_k_crashes(&skew, 0),
            Err(EstimatorError::Unsupported(_))
        ));

        let s = fixtures::parallel_two(FaultModel::Permanent, 0.1);
        assert!(matches!(
            count_bad_with_k_crashes(&s, 3),
            Err(EstimatorError::BadParameter(_))
        ));
    }

    #[test]
    fn iteration_brackets_tighten_onto_the_exact_score() {
        let s = fixtures::parallel_two(FaultModel::Permanent, 0.1);
        let exact = score_enumerate(&s).unwrap();
        let out = score_iterative(&s, 1e-3).unwrap();
        assert!(out.lower() <= exact + 1e-9 && exact <= out.upper() + 1e-9);
        assert!(out.upper() - out.lower() <= 1e-3 + 1e-12);

        // Every prefix of the trace brackets the score as well.
        let mut score = 0.0;
        let mut unc = 1.0f64;
        for rec in &out.trace {
            score += rec.all - rec.bad;
            unc -= rec.all;
            assert!(score <= exact + 1e-9);
            assert!(exact <= score + unc.max(0.0) + 1e-9);
        }
    }

    #[test]
    fn full_iteration_collapses_to_the_exact_score() {
        let s = fixtures::parallel_two(FaultModel::Permanent, 0.1);
        let out = score_iterative(&s, 0.0).unwrap();
        assert!(close(out.lower(), 0.99));
        assert!(close(out.upper(), 0.99));
        assert_eq!(out.trace.len(), 3);
    }

    #[test]
    fn unit_tolerance_returns_the_trivial_bracket() {
        let s = fixtures::parallel_two(FaultModel::Permanent, 0.1);
        let out = score_iterative(&s, 1.0).unwrap();
        assert_eq!(out.lower(), 0.0);
        assert_eq!(out.upper(), 1.0);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn multi_slot_classes_separate_crash_timing_from_count() {
        let mut s = fixtures::parallel_two(FaultModel::Permanent, 0.1);
        s.timeout = 2;
        let exact = score_enumerate(&s).unwrap();
        let out = score_iterative(&s, 0.0).unwrap();
        assert!(close(out.lower(), exact));
        // Both edges crashed by slot 2, but the run only fails when both
        // were already down in slot 1.
        let k2 = out.trace[2];
        assert!(close(k2.all, 0.0361));
        assert!(close(k2.bad, 0.01));
    }

    #[test]
    fn sample_sizes_match_the_bound() {
        assert_eq!(mc_sample_size(0.01, 0.99).unwrap(), 23026);
        assert_eq!(mc_sample_size(0.1, 0.99).unwrap(), 231);
        assert_eq!(mc_sample_size(0.02, 0.99).unwrap(), 5757);
        assert!(mc_sample_size(0.0, 0.5).is_err());
        assert!(mc_sample_size(0.1, 1.0).is_err());
    }

    #[test]
    fn monte_carlo_matches_the_exact_score_within_epsilon() {
        let s = fixtures::unit_link();
        let cfg = McConfig::from_bounds(0.01, 0.99, 7).unwrap();
        assert_eq!(cfg.n, 23026);
        let out = score_monte_carlo(&s, &cfg).unwrap();
        assert!((out.estimate - 0.855).abs() <= 0.01, "estimate {}", out.estimate);
    }

    #[test]
    fn worker_count_never_changes_the_estimate() {
        let s = fixtures::unit_link();
        let mut cfg = McConfig { epsilon: 0.05, delta: 0.9, n: 1000, seed: 41, workers: 1 };
        let one = score_monte_carlo(&s, &cfg).unwrap();
        for workers in [2, 3, 8] {
            cfg.workers = workers;
            let multi = score_monte_carlo(&s, &cfg).unwrap();
            assert_eq!(multi.successes, one.successes, "workers={workers}");
        }
    }

    #[test]
    fn certain_scenarios_estimate_exactly_one() {
        let mut s = fixtures::unit_link();
        s.network.edges[0].p_crash = 0.0;
        s.network.edges[0].p_omit = 0.0;
        let cfg = McConfig { epsilon: 0.1, delta: 0.9, n: 64, seed: 3, workers: 2 };
        let out = score_monte_carlo(&s, &cfg).unwrap();
        assert_eq!(out.estimate, 1.0);
        assert_eq!(out.successes, 64);
    }

    #[test]
    fn repeated_runs_stay_within_epsilon_at_the_promised_rate() {
        let s = fixtures::unit_link();
        let n = mc_sample_size(0.1, 0.99).unwrap();
        let mut within = 0;
        for seed in 0..100u64 {
            let cfg = McConfig { epsilon: 0.1, delta: 0.99, n, seed, workers: 1 };
            let est = score_monte_carlo(&s, &cfg).unwrap().estimate;
            if (est - 0.855).abs() <= 0.1 {
                within += 1;
            }
        }
        assert!(within >= 97, "only {within} of 100 runs landed within epsilon");
    }

    #[test]
    fn monte_carlo_rejects_bad_parameters() {
        let s = fixtures::unit_link();
        let good = McConfig { epsilon: 0.1, delta: 0.9, n: 10, seed: 0, workers: 1 };
        for bad in [
            McConfig { epsilon: 0.0, ..good },
            McConfig { delta: 1.0, ..good },
            McConfig { n: 0, ..good },
            McConfig { workers: 0, ..good },
        ] {
            assert!(matches!(
                score_monte_carlo(&s, &bad),
                Err(EstimatorError::BadParameter(_))
            ));
        }
    }

    #[test]
    fn iteration_rejects_out_of_range_epsilon() {
        let s = fixtures::parallel_two(FaultModel::Permanent, 0.1);
        assert!(matches!(score_iterative(&s, -0.1), Err(EstimatorError::BadParameter(_))));
        assert!(matches!(score_iterative(&s, 1.5), Err(EstimatorError::BadParameter(_))));
    }
}
