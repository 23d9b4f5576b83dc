//! `uavee` command line: sweeps, scenario generation, single solves and the
//! self-test.
//!
//! Exit codes: 0 success, 1 invalid arguments, 2 runtime failure.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{CommandFactory, Parser, Subcommand};
use uavee_core::algorithms::{self, opa_with, Algorithm, AlgorithmSettings, Problem};
use uavee_core::scenario::{Scenario, ScenarioConfig};

use crate::{format_summary, run_experiment, selftest, write_to, BenchError, ExperimentSpec, OutputFormat, RowStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "uavee", version, about = "Energy-efficiency allocation for UAV-powered D2D networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo sweep over the number of pairs.
    Run(RunArgs),
    /// Generate one scenario and print it as JSON.
    GenScenario(GenArgs),
    /// Solve one scenario file and print the report as JSON.
    Solve(SolveArgs),
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Pair counts, comma separated; `a..b` is an inclusive range.
    #[arg(long, default_value = "2..10")]
    pairs: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Comma separated subset of jhtpa, opa, oht.
    #[arg(long, default_value = "jhtpa,opa,oht")]
    algorithms: String,
    /// Base seed from which every trial seed is derived.
    #[arg(long)]
    seed: Option<u64>,
    /// Scenario config JSON; `num_pairs` is overridden per point.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rows go to standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: String,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    verbose: bool,
}

#[derive(Debug, clap::Args)]
struct GenArgs {
    /// Defaults to 5, or to the config file's value.
    #[arg(long)]
    pairs: Option<usize>,
    /// Defaults to 0, or to the config file's value.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct SolveArgs {
    /// Scenario JSON as written by `gen-scenario`.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "jhtpa")]
    algorithm: String,
    /// Fixed `theta = 1/(1 - tau)` for OPA; defaults to the scenario's.
    #[arg(long)]
    theta_fix: Option<f64>,
    /// Include the SCA trace and subproblem dumps.
    #[arg(long)]
    verbose: bool,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::InvalidSpec(msg) => Failure::Usage(msg),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn env_verbose() -> bool {
    std::env::var("UAVEE_VERBOSE").is_ok_and(|v| v == "1")
}

fn usage_text(subcommand: &str) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    match cmd.find_subcommand_mut(subcommand) {
        Some(sub) => sub.render_help().to_string(),
        None => cmd.render_help().to_string(),
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                _ => {
                    eprint!("{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    let name = match &cli.command {
        Command::Run(_) => "run",
        Command::GenScenario(_) => "gen-scenario",
        Command::Solve(_) => "solve",
        Command::Selftest => "selftest",
    };
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::GenScenario(args) => gen_scenario(args),
        Command::Solve(args) => solve(args),
        Command::Selftest => Ok(selftest_command()),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", usage_text(name));
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}

pub fn parse_pairs(text: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim) {
        if let Some((a, b)) = part.split_once("..") {
            let lo: usize = a.trim().parse().map_err(|_| format!("bad pair range '{part}'"))?;
            let hi: usize = b.trim().parse().map_err(|_| format!("bad pair range '{part}'"))?;
            if lo > hi {
                return Err(format!("empty pair range '{part}'"));
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().map_err(|_| format!("bad pair count '{part}'"))?);
        }
    }
    Ok(out)
}

pub fn parse_algorithms(text: &str) -> Result<Vec<Algorithm>, String> {
    let mut out: Vec<Algorithm> = text
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, _>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

fn load_config(path: &PathBuf) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    ScenarioConfig::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn run(args: RunArgs) -> Result<i32, Failure> {
    let pair_counts = parse_pairs(&args.pairs).map_err(Failure::Usage)?;
    let algorithms = parse_algorithms(&args.algorithms).map_err(Failure::Usage)?;
    let output_format: OutputFormat = args.format.parse().map_err(Failure::Usage)?;
    let mut base_config = match &args.config {
        Some(path) => load_config(path)?,
        None => ScenarioConfig::new(pair_counts.first().copied().unwrap_or(1).max(1), 0),
    };
    if let Some(seed) = args.seed {
        base_config.seed = seed;
    }
    let verbose = args.verbose || env_verbose();
    let spec = ExperimentSpec {
        pair_counts,
        trials_per_point: args.trials,
        algorithms,
        base_config,
        output_path: args.out.clone(),
        output_format,
        settings: AlgorithmSettings::default(),
        jobs: args.jobs,
        verbose,
    };
    let output = run_experiment(&spec)?;
    let table = format_summary(&output.summary);
    if args.out.is_some() {
        print!("{table}");
    } else {
        write_to(&output, io::stdout().lock(), output_format)?;
        eprint!("{table}");
    }
    Ok(EXIT_OK)
}

fn gen_scenario(args: GenArgs) -> Result<i32, Failure> {
    let mut config = match &args.config {
        Some(path) => load_config(path)?,
        None => ScenarioConfig::new(5, 0),
    };
    if let Some(n) = args.pairs {
        config.num_pairs = n;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let scenario = Scenario::generate(&config).map_err(|e| Failure::Runtime(e.to_string()))?;
    let text = serde_json::to_string_pretty(&scenario).expect("scenario serializes");
    match args.out {
        Some(path) => fs::write(&path, text + "\n").map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?,
        None => println!("{text}"),
    }
    Ok(EXIT_OK)
}

pub fn load_scenario(text: &str) -> Result<Scenario, String> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| e.to_string())?;
    scenario.config.validate().map_err(|e| e.to_string())?;
    scenario.channels.validate().map_err(|e| e.to_string())?;
    if scenario.channels.num_pairs() != scenario.config.num_pairs {
        return Err(format!(
            "config has {} pairs but the channels have {}",
            scenario.config.num_pairs,
            scenario.channels.num_pairs()
        ));
    }
    Ok(scenario)
}

fn solve(args: SolveArgs) -> Result<i32, Failure> {
    let algorithm: Algorithm = args.algorithm.parse().map_err(Failure::Usage)?;
    let text = fs::read_to_string(&args.scenario)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", args.scenario.display())))?;
    let scenario = load_scenario(&text).map_err(|e| Failure::Usage(format!("{}: {e}", args.scenario.display())))?;
    let verbose = args.verbose || env_verbose();
    let settings = AlgorithmSettings {
        verbose,
        solver: uavee_core::engine::SolverSettings {
            verbose,
            ..Default::default()
        },
        ..Default::default()
    };
    let problem = Problem::new(&scenario.channels, &scenario.config);
    let result = match (algorithm, args.theta_fix) {
        (Algorithm::Opa, Some(theta)) => opa_with(&problem, theta, &settings),
        _ => algorithms::run(algorithm, &problem, &settings),
    };
    let (value, code) = match result {
        Ok(report) => {
            let report = if verbose { report } else { report.without_trace() };
            let mut value = serde_json::to_value(&report).expect("report serializes");
            value["status"] = serde_json::json!(RowStatus::Converged);
            (value, EXIT_OK)
        }
        Err(e) => {
            let status = if e.is_infeasible() { RowStatus::Infeasible } else { RowStatus::Failed };
            let value = serde_json::json!({ "algorithm": algorithm, "status": status, "error": e.to_string() });
            (value, EXIT_RUNTIME)
        }
    };
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &value).map_err(|e| Failure::Runtime(e.to_string()))?;
    writeln!(out).map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(code)
}

fn selftest_command() -> i32 {
    let results = selftest::run_all();
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if results.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_RUNTIME
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_lists_and_ranges() {
        assert_eq!(parse_pairs("5").unwrap(), vec![5]);
        assert_eq!(parse_pairs("2,4, 6").unwrap(), vec![2, 4, 6]);
        assert_eq!(parse_pairs("2..4,8").unwrap(), vec![2, 3, 4, 8]);
        assert!(parse_pairs("4..2").is_err());
        assert!(parse_pairs("x").is_err());
        assert!(parse_pairs("").is_err());
    }

    #[test]
    fn algorithm_lists() {
        assert_eq!(parse_algorithms("oht,JHTPA,oht").unwrap(), vec![Algorithm::Jhtpa, Algorithm::Oht]);
        assert!(parse_algorithms("opa,nope").is_err());
    }
}
