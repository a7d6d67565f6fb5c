//! Command implementations behind the `ttscore` binary.
//!
//! Everything here is plain functions over loaded scenarios so the
//! integration tests can drive the commands without spawning processes;
//! `main.rs` only parses arguments, picks exit codes, and routes output
//! streams (reports as JSON on stdout, human summaries on stderr).

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use ttscore_core::model::{GenerateError, LoadError};
use ttscore_core::{
    build_product_chain, chain_reachability, emit_weighted_dimacs, encode_scenario,
    generate_random_scenario, load_scenario, mc_sample_size, parse_dimacs_3cnf, reduce_3cnf, run,
    sample_fault_sequence, scenario_to_json, score_enumerate, score_exact, score_iterative,
    score_monte_carlo, tilt_bound, to_literal_weighted, validate_scenario, EncodeError,
    EstimatorError, FaultModel, Interval, McConfig, ReductionError, ReportParams, Scenario,
    ScoreReport, SimError, Violation,
};

/// Tool identifier embedded in every report.
pub const TOOL: &str = concat!("ttscore ", env!("CARGO_PKG_VERSION"));

/// Default accuracy: estimates land within 0.01 of the score with
/// probability 0.99.
pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_DELTA: f64 = 0.99;

/// Scoring engine selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    /// Exhaustive enumeration of fault branches.
    Enumerate,
    /// Explicit product Markov chain reachability.
    Chain,
    /// Weighted model counting over the CNF encoding.
    Wmc,
    /// Crash-count iteration with certified bounds.
    Iterative,
    /// Seeded Monte Carlo sampling.
    MonteCarlo,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Enumerate => "enumerate",
            Method::Chain => "chain",
            Method::Wmc => "wmc",
            Method::Iterative => "iterative",
            Method::MonteCarlo => "monte-carlo",
        }
    }
}

/// Flags shared by the scoring commands, already resolved to values.
#[derive(Debug, Clone, Copy)]
pub struct ScoreOptions {
    pub method: Method,
    pub epsilon: f64,
    pub delta: f64,
    /// Overrides the Hoeffding sample size when set.
    pub samples: Option<u64>,
    pub seed: u64,
    pub workers: usize,
}

/// Anything a command can fail with.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("scenario failed validation")]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error("bad parameter: {0}")]
    Parameter(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Stable machine-readable category for the error object.
    pub fn kind(&self) -> &'static str {
        fn sim_kind(e: &SimError) -> &'static str {
            match e {
                SimError::TooManyBranches { .. } | SimError::ChainTooLarge(_) => "cap-exceeded",
                _ => "engine",
            }
        }
        fn encode_kind(e: &EncodeError) -> &'static str {
            match e {
                EncodeError::CountTooLarge { .. } => "cap-exceeded",
                _ => "engine",
            }
        }
        match self {
            CliError::Invalid(_) | CliError::Load(LoadError::Invalid(_)) => "validation",
            CliError::Load(_) => "load",
            CliError::Sim(e) => sim_kind(e),
            CliError::Encode(e) => encode_kind(e),
            CliError::Estimator(EstimatorError::Sim(e)) => sim_kind(e),
            CliError::Estimator(EstimatorError::Encode(e)) => encode_kind(e),
            CliError::Estimator(EstimatorError::Unsupported(_)) => "unsupported",
            CliError::Estimator(EstimatorError::BadParameter(_)) | CliError::Parameter(_) => {
                "parameter"
            }
            CliError::Reduction(ReductionError::Encode(e)) => encode_kind(e),
            CliError::Reduction(_) => "reduction",
            CliError::Generate(_) => "generate",
            CliError::Io(_) => "io",
        }
    }

    /// The JSON error object printed on stdout for failed commands.
    pub fn to_error_object(&self) -> serde_json::Value {
        let violations = match self {
            CliError::Invalid(v) | CliError::Load(LoadError::Invalid(v)) => v.clone(),
            _ => Vec::new(),
        };
        serde_json::json!({
            "error": ErrorBody {
                kind: self.kind().into(),
                message: self.to_string(),
                violations,
            }
        })
    }
}

#[derive(Serialize)]
struct ErrorBody {
    kind: String,
    message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    violations: Vec<Violation>,
}

/// SHA-256 over the canonical JSON file form of the scenario.
pub fn scenario_digest(s: &Scenario) -> String {
    let hash = Sha256::digest(scenario_to_json(s).as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in hash {
        write!(hex, "{byte:02x}").expect("writing to a String cannot fail");
    }
    hex
}

/// Worker count: explicit flag, else `TTSCORE_WORKERS`, else the machine's
/// available parallelism.
pub fn resolve_workers(flag: Option<usize>) -> Result<usize, CliError> {
    let chosen = match flag {
        Some(w) => Some(w),
        None => match std::env::var("TTSCORE_WORKERS") {
            Ok(raw) => Some(raw.parse::<usize>().map_err(|_| {
                CliError::Parameter(format!("TTSCORE_WORKERS must be a positive integer, got {raw:?}"))
            })?),
            Err(_) => None,
        },
    };
    match chosen {
        Some(0) => Err(CliError::Parameter("worker count must be at least 1".into())),
        Some(w) => Ok(w),
        None => Ok(std::thread::available_parallelism().map_or(1, usize::from)),
    }
}

/// Load and semantically validate a scenario file.
pub fn load_valid_scenario(path: impl AsRef<Path>) -> Result<Scenario, CliError> {
    Ok(load_scenario(path)?)
}

/// Score a scenario with one engine and wrap the result in a report.
pub fn score_scenario(s: &Scenario, opts: &ScoreOptions) -> Result<ScoreReport, CliError> {
    let mut report = ScoreReport {
        tool: TOOL.into(),
        scenario_digest: scenario_digest(s),
        method: opts.method.name().into(),
        score: None,
        interval: None,
        params: ReportParams::default(),
        k_trace: None,
        duration_secs: 0.0,
        notes: Vec::new(),
    };
    let start = Instant::now();
    match opts.method {
        Method::Enumerate => report.score = Some(score_enumerate(s)?),
        Method::Chain => {
            let chain = build_product_chain(s)?;
            report.score = Some(chain_reachability(&chain, 2 * s.timeout));
        }
        Method::Wmc => report.score = Some(score_exact(s)?),
        Method::Iterative => {
            let out = score_iterative(s, opts.epsilon)?;
            report.params.epsilon = Some(opts.epsilon);
            report.interval = Some(Interval { lo: out.lower(), hi: out.upper() });
            if out.uncertainty > 0.0 {
                // Advisory only: how skewed the weights inside the next,
                // unprocessed crash-count class can be.
                let p = s.network.edges.first().map_or(0.0, |e| e.p_crash);
                report.notes.push(format!(
                    "stopped before crash class k={}; within-class weight tilt is at most {:.6e}",
                    out.k,
                    tilt_bound(out.k, p, s.timeout)
                ));
            }
            report.k_trace = Some(out.trace);
        }
        Method::MonteCarlo => {
            let n = match opts.samples {
                Some(n) => n,
                None => mc_sample_size(opts.epsilon, opts.delta)?,
            };
            let cfg = McConfig {
                epsilon: opts.epsilon,
                delta: opts.delta,
                n,
                seed: opts.seed,
                workers: opts.workers,
            };
            let out = score_monte_carlo(s, &cfg)?;
            report.score = Some(out.estimate);
            report.params = ReportParams {
                epsilon: Some(opts.epsilon),
                delta: Some(opts.delta),
                seed: Some(opts.seed),
                samples: Some(n),
                workers: Some(opts.workers),
            };
        }
    }
    report.duration_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// One-line human summary of a report, for stderr.
pub fn summarize(report: &ScoreReport) -> String {
    let what = match (report.score, report.interval) {
        (Some(x), _) => format!("score {x}"),
        (None, Some(i)) => format!("score in [{}, {}]", i.lo, i.hi),
        (None, None) => "no result".into(),
    };
    format!(
        "{what} by {} in {:.3}s (scenario {})",
        report.method,
        report.duration_secs,
        &report.scenario_digest[..12]
    )
}

/// The central value a comparison measures errors against.
fn central(report: &ScoreReport) -> f64 {
    match (report.score, report.interval) {
        (Some(x), _) => x,
        (None, Some(i)) => (i.lo + i.hi) / 2.0,
        (None, None) => f64::NAN,
    }
}

/// Run every method on the same scenario; the first is the reference.
///
/// Returns the CSV table (one row per method, errors measured against the
/// first row's central value) together with the underlying reports.
pub fn compare_scenario(
    s: &Scenario,
    methods: &[Method],
    base: &ScoreOptions,
) -> Result<(String, Vec<ScoreReport>), CliError> {
    if methods.is_empty() {
        return Err(CliError::Parameter("compare needs at least one method".into()));
    }
    let mut reports = Vec::with_capacity(methods.len());
    for &method in methods {
        let opts = ScoreOptions { method, ..*base };
        reports.push(score_scenario(s, &opts)?);
    }
    let reference = central(&reports[0]);
    let mut csv = String::from("method,score,lower,upper,error_vs_first,duration_secs\n");
    for r in &reports {
        let (lo, hi) = r.interval.map_or((String::new(), String::new()), |i| {
            (i.lo.to_string(), i.hi.to_string())
        });
        let score = r.score.map_or(String::new(), |x| x.to_string());
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.method,
            score,
            lo,
            hi,
            central(r) - reference,
            r.duration_secs
        );
    }
    Ok((csv, reports))
}

/// Text dump of one seeded run: a line per configuration, then the arrival
/// count. Debugging aid; the format is not stable.
pub fn dump_outcome(s: &Scenario, seed: u64) -> Result<String, CliError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let faults = sample_fault_sequence(s, &mut rng)?;
    let outcome = run(s, &faults)?;
    let mut text = String::new();
    for (k, c) in outcome.configurations.iter().enumerate() {
        let _ = writeln!(text, "slot {k}: {c}");
    }
    let _ = writeln!(text, "arrivals: {}", ttscore_core::arrivals(s, &outcome));
    Ok(text)
}

/// `generate`: the seeded random scenario as canonical JSON.
pub fn generate_json(vertices: u32, seed: u64) -> Result<String, CliError> {
    let s = generate_random_scenario(vertices, seed)?;
    Ok(scenario_to_json(&s))
}

/// `reduce-3cnf`: DIMACS text to the scoring scenario whose failure mass
/// counts the formula's models.
pub fn reduce_dimacs(text: &str) -> Result<Scenario, CliError> {
    let formula = parse_dimacs_3cnf(text)?;
    Ok(reduce_3cnf(&formula)?)
}

/// `emit-cnf`: the scenario's literal-weighted CNF in DIMACS form.
pub fn emit_cnf(s: &Scenario) -> Result<String, CliError> {
    let enc = encode_scenario(s)?;
    let (wf, _book) = to_literal_weighted(enc, s)?;
    let mut out = Vec::new();
    emit_weighted_dimacs(&wf, &mut out)?;
    Ok(String::from_utf8(out).expect("DIMACS output is ASCII"))
}

/// What `validate` reports about a parseable scenario.
#[derive(Debug, Serialize)]
pub struct ValidationSummary {
    pub valid: bool,
    pub violations: Vec<Violation>,
    pub scenario_digest: String,
    pub vertices: usize,
    pub edges: usize,
    pub messages: usize,
    pub rules: usize,
    pub set_defs: usize,
    pub max_out_degree: usize,
    pub timeout: u32,
    pub guarantee: u32,
    pub fault_model: String,
}

/// `validate`: structural parse, then the full semantic check; the summary
/// is produced even for invalid scenarios so the defects can be listed.
pub fn validate_file(path: impl AsRef<Path>) -> Result<ValidationSummary, CliError> {
    let json = std::fs::read_to_string(path)?;
    let s = ttscore_core::parse_scenario(&json).map_err(CliError::Load)?;
    let violations = validate_scenario(&s);
    Ok(ValidationSummary {
        valid: violations.is_empty(),
        violations,
        scenario_digest: scenario_digest(&s),
        vertices: s.network.vertices.len(),
        edges: s.network.edges.len(),
        messages: s.messages.len(),
        rules: s.scheme.rules.len(),
        set_defs: s.scheme.set_defs.len(),
        max_out_degree: s.network.out_order.values().map(Vec::len).max().unwrap_or(0),
        timeout: s.timeout,
        guarantee: s.guarantee,
        fault_model: match s.fault_model {
            FaultModel::Temporary => "temporary".into(),
            FaultModel::Permanent => "permanent".into(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_and_hex() {
        let s = generate_random_scenario(3, 5).unwrap();
        let d = scenario_digest(&s);
        assert_eq!(d.len(), 64);
        assert!(d.chars().all(|c| c.is_ascii_hexdigit()));
        assert_eq!(d, scenario_digest(&s.clone()));
    }

    #[test]
    fn worker_resolution_prefers_the_flag() {
        assert_eq!(resolve_workers(Some(3)).unwrap(), 3);
        assert!(matches!(resolve_workers(Some(0)), Err(CliError::Parameter(_))));
        // No flag and no env var: some positive machine default.
        if std::env::var("TTSCORE_WORKERS").is_err() {
            assert!(resolve_workers(None).unwrap() >= 1);
        }
    }

    #[test]
    fn error_objects_carry_kind_and_violations() {
        let mut s = generate_random_scenario(2, 0).unwrap();
        s.guarantee = 9;
        let violations = validate_scenario(&s);
        assert!(!violations.is_empty());
        let obj = CliError::Invalid(violations).to_error_object();
        assert_eq!(obj["error"]["kind"], "validation");
        assert!(obj["error"]["violations"].as_array().is_some_and(|v| !v.is_empty()));
    }
}
