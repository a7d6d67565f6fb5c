//! Argument parsing and process plumbing for the `ttscore` binary.
//!
//! Machine-readable output (reports, error objects, scenarios, CNF) goes to
//! stdout or `--out`; human summaries and the outcome dump go to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ttscore_cli::{
    compare_scenario, dump_outcome, emit_cnf, generate_json, load_valid_scenario, reduce_dimacs,
    resolve_workers, score_scenario, summarize, validate_file, CliError, Method, ScoreOptions,
    DEFAULT_DELTA, DEFAULT_EPSILON,
};
use ttscore_core::scenario_to_json;

#[derive(Parser)]
#[command(name = "ttscore", version, about = "Score deterministic forwarding schemes on fault-prone time-triggered networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct ScoreFlags {
    /// Target accuracy (Monte Carlo half-width / iterative bracket width).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Monte Carlo confidence level.
    #[arg(long)]
    delta: Option<f64>,
    /// Explicit Monte Carlo sample count (overrides the Hoeffding size).
    #[arg(long)]
    samples: Option<u64>,
    /// Seed for randomized methods.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: TTSCORE_WORKERS, then all cores).
    #[arg(long)]
    workers: Option<usize>,
}

impl ScoreFlags {
    fn resolve(&self, method: Method) -> Result<ScoreOptions, CliError> {
        Ok(ScoreOptions {
            method,
            epsilon: self.epsilon.unwrap_or(DEFAULT_EPSILON),
            delta: self.delta.unwrap_or(DEFAULT_DELTA),
            samples: self.samples,
            seed: self.seed,
            workers: resolve_workers(self.workers)?,
        })
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Score a scenario file; the report is JSON on stdout.
    Score {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::MonteCarlo)]
        method: Method,
        #[command(flatten)]
        flags: ScoreFlags,
        /// Also print one seeded run, configuration by configuration, to
        /// stderr (debugging aid; format not stable).
        #[arg(long)]
        dump_outcome: bool,
    },
    /// Score with several methods and print a CSV comparison table.
    Compare {
        scenario: PathBuf,
        /// Comma-separated engines; the first is the reference.
        #[arg(long, value_enum, value_delimiter = ',', required = true)]
        methods: Vec<Method>,
        #[command(flatten)]
        flags: ScoreFlags,
    },
    /// Generate a seeded random scenario.
    Generate {
        #[arg(long)]
        vertices: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a 3CNF (DIMACS) into a scenario whose score counts its models.
    #[command(name = "reduce-3cnf")]
    Reduce3Cnf {
        cnf: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a scenario's literal-weighted CNF encoding as DIMACS.
    EmitCnf {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file and print summary statistics.
    Validate { scenario: PathBuf },
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn dispatch(cmd: Cmd) -> Result<ExitCode, CliError> {
    match cmd {
        Cmd::Score { scenario, method, flags, dump_outcome: dump } => {
            let opts = flags.resolve(method)?;
            let s = load_valid_scenario(&scenario)?;
            let report = score_scenario(&s, &opts)?;
            if dump {
                eprint!("{}", dump_outcome(&s, opts.seed)?);
            }
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            eprintln!("{}", summarize(&report));
        }
        Cmd::Compare { scenario, methods, flags } => {
            let base = flags.resolve(methods[0])?;
            let s = load_valid_scenario(&scenario)?;
            let (csv, reports) = compare_scenario(&s, &methods, &base)?;
            print!("{csv}");
            for r in &reports {
                eprintln!("{}", summarize(r));
            }
        }
        Cmd::Generate { vertices, seed, out } => {
            emit(&generate_json(vertices, seed)?, out.as_ref())?;
        }
        Cmd::Reduce3Cnf { cnf, out } => {
            let text = std::fs::read_to_string(&cnf)?;
            let s = reduce_dimacs(&text)?;
            emit(&scenario_to_json(&s), out.as_ref())?;
        }
        Cmd::EmitCnf { scenario, out } => {
            let s = load_valid_scenario(&scenario)?;
            emit(&emit_cnf(&s)?, out.as_ref())?;
        }
        Cmd::Validate { scenario } => {
            let summary = validate_file(&scenario)?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            if !summary.valid {
                eprintln!(
                    "scenario is invalid: {} violation(s), see the JSON report",
                    summary.violations.len()
                );
                return Ok(ExitCode::FAILURE);
            }
            eprintln!(
                "scenario ok: {} vertices, {} edges, {} messages, timeout {}, guarantee {}",
                summary.vertices, summary.edges, summary.messages, summary.timeout, summary.guarantee
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(err) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&err.to_error_object()).expect("error serializes")
            );
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
