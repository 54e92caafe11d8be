//! Command-line front end: argument parsing and subcommand dispatch.
//!
//! Every subcommand prints a single JSON document on stdout. Exit codes are
//! 0 on success, 1 when verification finds a failing or undecided input, and
//! 2 on usage, parse or I/O errors.

pub mod formats;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use udpop_core::analysis::{self, verify_bounded, BoundedReport};
use udpop_core::executor::{run, write_trace_jsonl, RunConfig, RunReport};
use udpop_core::predicates::eval_expr;
use udpop_core::{init_config, Protocol};

pub use formats::{load_population, save_population, FormatError, PopulationFile, PredicateSpec, ProtocolSpec};

#[derive(Debug, Parser)]
#[command(name = "udpop", version, about = "Population protocols with unordered data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the seeded random scheduler on one population.
    Simulate {
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        population: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        max_steps: u64,
        /// Write the step-by-step trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Constant-output steps required for convergence (default 50·ℓ²).
        #[arg(long)]
        window: Option<u64>,
    },
    /// Check the protocol against a predicate on every small input.
    Verify {
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        predicate: PathBuf,
        #[arg(long)]
        max_agents: u32,
        #[arg(long)]
        max_data: u32,
        /// Node budget per input.
        #[arg(long, default_value_t = 2_000_000)]
        cap: usize,
    },
    /// Evaluate a predicate on a population.
    Eval {
        #[arg(long)]
        predicate: PathBuf,
        #[arg(long)]
        population: PathBuf,
    },
    /// Build the reachability graph of a population.
    Explore {
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        population: PathBuf,
        #[arg(long)]
        dot: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000)]
        cap: usize,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Model(#[from] udpop_core::ModelError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
    #[error(transparent)]
    Predicate(#[from] udpop_core::predicates::PredicateError),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

/// Result of a subcommand: exit code and the JSON printed on stdout.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    protocol: &'a str,
    seed: u64,
    max_steps: u64,
    agents: u64,
    report: RunReport,
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    protocol: &'a str,
    max_agents: u32,
    max_data: u32,
    cap: usize,
    inputs: usize,
    all_correct: bool,
    report: BoundedReport,
}

fn load_protocol(path: &Path) -> Result<Protocol, CliError> {
    Ok(formats::read_json::<ProtocolSpec>(path)?.build()?)
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.display().to_string(),
        source,
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

pub fn execute(cmd: Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Simulate {
            protocol,
            population,
            seed,
            max_steps,
            trace,
            window,
        } => {
            let p = load_protocol(&protocol)?;
            let m = load_population(&population, p.symbols())?;
            let c0 = init_config(&p, &m)?;
            let mut rc = RunConfig::new(seed, max_steps).with_trace(trace.is_some());
            rc.window = window;
            let mut report = run(&p, &c0, &rc)?;
            if let (Some(path), Some(entries)) = (trace.as_ref(), report.trace.take()) {
                let file = File::create(path).map_err(write_err(path))?;
                write_trace_jsonl(&entries, BufWriter::new(file)).map_err(write_err(path))?;
            }
            let out = SimulateOutput {
                protocol: &p.name,
                seed,
                max_steps,
                agents: m.total(),
                report,
            };
            Ok(Outcome {
                code: 0,
                stdout: to_json(&out),
            })
        }
        Command::Verify {
            protocol,
            predicate,
            max_agents,
            max_data,
            cap,
        } => {
            let p = load_protocol(&protocol)?;
            let e = formats::read_json::<PredicateSpec>(&predicate)?.expr()?;
            let report = verify_bounded(&p, &e, max_agents, max_data, cap)?;
            for r in report.results.iter().filter(|r| !r.verdict.is_correct()) {
                eprintln!("input {:?}: {:?}", r.input, r.verdict);
            }
            let out = VerifyOutput {
                protocol: &p.name,
                max_agents,
                max_data,
                cap,
                inputs: report.results.len(),
                all_correct: report.all_correct(),
                report,
            };
            Ok(Outcome {
                code: if out.all_correct { 0 } else { 1 },
                stdout: to_json(&out),
            })
        }
        Command::Eval { predicate, population } => {
            let e = formats::read_json::<PredicateSpec>(&predicate)?.expr()?;
            let symbols = formats::expr_symbols(&e)?;
            let m = load_population(&population, &symbols)?;
            let value = eval_expr(&e, &m)?;
            Ok(Outcome {
                code: 0,
                stdout: to_json(&json!({ "value": value })),
            })
        }
        Command::Explore {
            protocol,
            population,
            dot,
            json,
            cap,
        } => {
            let p = load_protocol(&protocol)?;
            let m = load_population(&population, p.symbols())?;
            let c0 = init_config(&p, &m)?;
            let g = analysis::explore(&p, &c0, cap);
            if let Some(path) = dot.as_ref() {
                std::fs::write(path, analysis::to_dot(&p, &g)).map_err(write_err(path))?;
            }
            if let Some(path) = json.as_ref() {
                std::fs::write(path, to_json(&analysis::to_json(&p, &g))).map_err(write_err(path))?;
            }
            let summary = json!({
                "protocol": p.name,
                "nodes": g.len(),
                "edges": g.num_edges(),
                "complete": g.complete,
                "bottom_sccs": g.bottom_sccs().count(),
                "cap": cap,
            });
            Ok(Outcome {
                code: 0,
                stdout: to_json(&summary),
            })
        }
    }
}

/// Parses `argv` (program name first) and runs the subcommand. Usage and
/// input errors become exit code 2 with a message on stderr.
pub fn dispatch<I, S>(argv: I) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return Outcome {
                code,
                stdout: String::new(),
            };
        }
    };
    match execute(cli.command) {
        Ok(outcome) => outcome,
        Err(e) => {
            eprintln!("error: {e}");
            Outcome {
                code: 2,
                stdout: String::new(),
            }
        }
    }
}

/// Caps the global exploration thread pool from `UDPOP_THREADS`, if set.
pub fn configure_threads() {
    if let Some(n) = std::env::var("UDPOP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
