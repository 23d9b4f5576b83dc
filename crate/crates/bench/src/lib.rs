//! Monte Carlo sweeps of the three allocation algorithms over the number of
//! D2D pairs, with CSV/JSON output and a command-line front end.

pub mod cli;
pub mod selftest;

use std::fmt;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uavee_core::algorithms::{self, Algorithm, AlgorithmError, AlgorithmSettings, Problem, SolveReport};
use uavee_core::scenario::{Scenario, ScenarioConfig};

pub const CSV_HEADER: &str =
    "n_pairs,algorithm,trial,seed,ee_nats_per_joule,ee_bits_per_joule,wall_time_ms,iterations,status";

#[derive(Debug)]
pub enum BenchError {
    InvalidSpec(String),
    Io(io::Error),
    Csv(csv::Error),
    Json(serde_json::Error),
}

impl fmt::Display for BenchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchError::InvalidSpec(msg) => write!(f, "invalid experiment: {msg}"),
            BenchError::Io(e) => write!(f, "i/o error: {e}"),
            BenchError::Csv(e) => write!(f, "csv error: {e}"),
            BenchError::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for BenchError {}

impl From<io::Error> for BenchError {
    fn from(e: io::Error) -> Self {
        BenchError::Io(e)
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Csv(e)
    }
}

impl From<serde_json::Error> for BenchError {
    fn from(e: serde_json::Error) -> Self {
        BenchError::Json(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub pair_counts: Vec<usize>,
    pub trials_per_point: usize,
    pub algorithms: Vec<Algorithm>,
    /// Everything but `num_pairs` is taken from here; `seed` is the base seed.
    pub base_config: ScenarioConfig,
    pub output_path: Option<PathBuf>,
    pub output_format: OutputFormat,
    pub settings: AlgorithmSettings,
    /// Worker threads; `None` lets rayon decide.
    pub jobs: Option<usize>,
    /// Progress lines on standard error.
    pub verbose: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            pair_counts: (2..=10).collect(),
            trials_per_point: 100,
            algorithms: Algorithm::ALL.to_vec(),
            base_config: ScenarioConfig::new(2, 0),
            output_path: None,
            output_format: OutputFormat::Csv,
            settings: AlgorithmSettings::default(),
            jobs: None,
            verbose: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |msg: &str| Err(BenchError::InvalidSpec(msg.to_string()));
        if self.trials_per_point == 0 {
            return bad("trials must be at least 1");
        }
        if self.pair_counts.is_empty() {
            return bad("at least one pair count is required");
        }
        if self.pair_counts.contains(&0) {
            return bad("pair counts must be at least 1");
        }
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required");
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1");
        }
        for &n in &self.pair_counts {
            self.config_for(n, 0)
                .validate()
                .map_err(|e| BenchError::InvalidSpec(e.to_string()))?;
        }
        self.settings.solver.validate().map_err(BenchError::InvalidSpec)?;
        Ok(())
    }

    fn config_for(&self, n_pairs: usize, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            num_pairs: n_pairs,
            seed,
            ..self.base_config.clone()
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` at `n_pairs` pairs:
/// `m(m(m(base) ^ n_pairs) ^ trial)` with `m` the SplitMix64 step.
///
/// Part of the output format; changing it changes every published table.
pub fn child_seed(base: u64, n_pairs: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ n_pairs as u64) ^ trial as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Converged,
    Infeasible,
    Failed,
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowStatus::Converged => "converged",
            RowStatus::Infeasible => "infeasible",
            RowStatus::Failed => "failed",
        })
    }
}

/// One algorithm on one trial. EE columns are empty unless converged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub n_pairs: usize,
    pub algorithm: Algorithm,
    pub trial: usize,
    pub seed: u64,
    pub ee_nats_per_joule: Option<f64>,
    pub ee_bits_per_joule: Option<f64>,
    pub wall_time_ms: f64,
    pub iterations: usize,
    pub status: RowStatus,
}

/// Full outcome of one solve, kept for checks the rows cannot express.
#[derive(Debug)]
pub struct TrialOutcome {
    pub n_pairs: usize,
    pub trial: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Solver time only; scenario generation is excluded.
    pub wall_time_ms: f64,
    pub result: Result<SolveReport, TrialError>,
}

#[derive(Debug)]
pub enum TrialError {
    Scenario(String),
    Algorithm(AlgorithmError),
}

impl fmt::Display for TrialError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrialError::Scenario(msg) => write!(f, "scenario generation failed: {msg}"),
            TrialError::Algorithm(e) => e.fmt(f),
        }
    }
}

impl TrialOutcome {
    pub fn status(&self) -> RowStatus {
        match &self.result {
            Ok(_) => RowStatus::Converged,
            Err(TrialError::Algorithm(e)) if e.is_infeasible() => RowStatus::Infeasible,
            Err(_) => RowStatus::Failed,
        }
    }

    pub fn row(&self) -> ResultRow {
        let report = self.result.as_ref().ok();
        let iterations = match &self.result {
            Ok(r) => r.iterations,
            Err(TrialError::Algorithm(AlgorithmError::MaxScaIterations { iterations, .. })) => *iterations,
            Err(TrialError::Algorithm(AlgorithmError::SubsolverFailure { iteration, .. })) => *iteration,
            Err(_) => 0,
        };
        ResultRow {
            n_pairs: self.n_pairs,
            algorithm: self.algorithm,
            trial: self.trial,
            seed: self.seed,
            ee_nats_per_joule: report.map(|r| r.ee_nats_per_joule),
            ee_bits_per_joule: report.map(|r| r.ee_bits_per_joule),
            wall_time_ms: self.wall_time_ms,
            iterations,
            status: self.status(),
        }
    }
}

fn run_trial(spec: &ExperimentSpec, n_pairs: usize, trial: usize) -> Vec<TrialOutcome> {
    let seed = child_seed(spec.base_config.seed, n_pairs, trial);
    let config = spec.config_for(n_pairs, seed);
    let outcome = |algorithm, wall_time_ms, result| TrialOutcome {
        n_pairs,
        trial,
        seed,
        algorithm,
        wall_time_ms,
        result,
    };
    let scenario = match Scenario::generate(&config) {
        Ok(s) => s,
        Err(e) => {
            return spec
                .algorithms
                .iter()
                .map(|&a| outcome(a, 0.0, Err(TrialError::Scenario(e.to_string()))))
                .collect()
        }
    };
    let problem = Problem::new(&scenario.channels, &scenario.config);
    spec.algorithms
        .iter()
        .map(|&algorithm| {
            let started = Instant::now();
            let result = algorithms::run(algorithm, &problem, &spec.settings);
            let ms = started.elapsed().as_secs_f64() * 1e3;
            outcome(algorithm, ms, result.map_err(TrialError::Algorithm))
        })
        .collect()
}

/// Runs every `(N, trial)` of the spec, sorted by N, trial and algorithm.
pub fn run_trials(spec: &ExperimentSpec) -> Result<Vec<TrialOutcome>, BenchError> {
    spec.validate()?;
    let tasks: Vec<(usize, usize)> = spec
        .pair_counts
        .iter()
        .flat_map(|&n| (0..spec.trials_per_point).map(move |t| (n, t)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = spec.jobs {
        builder = builder.num_threads(jobs);
    }
    let pool = builder
        .build()
        .map_err(|e| BenchError::InvalidSpec(format!("cannot start worker pool: {e}")))?;
    let mut outcomes: Vec<TrialOutcome> = pool.install(|| {
        tasks
            .par_iter()
            .flat_map_iter(|&(n, t)| {
                let out = run_trial(spec, n, t);
                if spec.verbose && t + 1 == spec.trials_per_point {
                    eprintln!("N={n}: last trial done");
                }
                out
            })
            .collect()
    });
    outcomes.sort_by_key(|o| (o.n_pairs, o.trial, o.algorithm));
    Ok(outcomes)
}

/// Per-(N, algorithm) statistics. EE and time moments cover converged
/// trials only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_pairs: usize,
    pub algorithm: Algorithm,
    pub trials: usize,
    pub converged: usize,
    pub infeasible: usize,
    pub failed: usize,
    pub ee_nats_mean: f64,
    pub ee_nats_std: f64,
    pub ee_bits_mean: f64,
    pub ee_bits_std: f64,
    pub wall_time_ms_mean: f64,
    pub wall_time_ms_std: f64,
    pub wall_time_ms_median: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

pub fn summarize(rows: &[ResultRow]) -> Vec<Summary> {
    let mut keys: Vec<(usize, Algorithm)> = rows.iter().map(|r| (r.n_pairs, r.algorithm)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(n, a)| {
            let group: Vec<&ResultRow> = rows.iter().filter(|r| r.n_pairs == n && r.algorithm == a).collect();
            let ok: Vec<&ResultRow> = group.iter().copied().filter(|r| r.status == RowStatus::Converged).collect();
            let count = |s| group.iter().filter(|r| r.status == s).count();
            let nats: Vec<f64> = ok.iter().filter_map(|r| r.ee_nats_per_joule).collect();
            let bits: Vec<f64> = ok.iter().filter_map(|r| r.ee_bits_per_joule).collect();
            let times: Vec<f64> = ok.iter().map(|r| r.wall_time_ms).collect();
            let (ee_nats_mean, ee_nats_std) = mean_std(&nats);
            let (ee_bits_mean, ee_bits_std) = mean_std(&bits);
            let (wall_time_ms_mean, wall_time_ms_std) = mean_std(&times);
            Summary {
                n_pairs: n,
                algorithm: a,
                trials: group.len(),
                converged: ok.len(),
                infeasible: count(RowStatus::Infeasible),
                failed: count(RowStatus::Failed),
                ee_nats_mean,
                ee_nats_std,
                ee_bits_mean,
                ee_bits_std,
                wall_time_ms_mean,
                wall_time_ms_std,
                wall_time_ms_median: median(&times),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<Summary>,
}

/// Runs the sweep and writes the rows to `spec.output_path` when set.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, BenchError> {
    let rows: Vec<ResultRow> = run_trials(spec)?.iter().map(TrialOutcome::row).collect();
    let output = ExperimentOutput {
        summary: summarize(&rows),
        rows,
    };
    if let Some(path) = &spec.output_path {
        write_output(&output, path, spec.output_format)?;
    }
    Ok(output)
}

pub fn write_output(output: &ExperimentOutput, path: &Path, format: OutputFormat) -> Result<(), BenchError> {
    let file = File::create(path)?;
    write_to(output, io::BufWriter::new(file), format)
}

pub fn write_to<W: Write>(output: &ExperimentOutput, mut w: W, format: OutputFormat) -> Result<(), BenchError> {
    match format {
        OutputFormat::Csv => {
            let mut writer = csv::Writer::from_writer(w);
            for row in &output.rows {
                writer.serialize(row)?;
            }
            writer.flush()?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut w, output)?;
            writeln!(w)?;
            w.flush()?;
        }
    }
    Ok(())
}

/// Fixed-width table of the summary for terminals.
pub fn format_summary(summary: &[Summary]) -> String {
    let mut out = format!(
        "{:>3} {:<6} {:>12} {:>12} {:>12} {:>10} {:>10} {:>5} {:>5} {:>5}\n",
        "N", "alg", "ee_nats/J", "ee_std", "ee_bits/J", "ms_mean", "ms_median", "ok", "infs", "fail"
    );
    for s in summary {
        out.push_str(&format!(
            "{:>3} {:<6} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.3} {:>10.3} {:>5} {:>5} {:>5}\n",
            s.n_pairs,
            s.algorithm.name(),
            s.ee_nats_mean,
            s.ee_nats_std,
            s.ee_bits_mean,
            s.wall_time_ms_mean,
            s.wall_time_ms_median,
            s.converged,
            s.infeasible,
            s.failed
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn child_seed_is_pure_and_spreads() {
        assert_eq!(child_seed(7, 5, 3), child_seed(7, 5, 3));
        let mut seen: Vec<u64> = (1..=10)
            .flat_map(|n| (0..50).map(move |t| child_seed(7, n, t)))
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 500);
        assert_ne!(child_seed(7, 2, 0), child_seed(8, 2, 0));
    }

    #[test]
    fn child_seed_is_frozen() {
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
        assert_eq!(child_seed(7, 5, 3), 17_028_090_436_427_168_972);
        assert_eq!(child_seed(1, 2, 0), 16_613_338_946_343_043_936);
    }

    #[test]
    fn moments_and_median() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - 1.2909944487358056).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(mean_std(&[]).0.is_nan());
    }

    #[test]
    fn spec_validation() {
        let ok = ExperimentSpec::default();
        assert!(ok.validate().is_ok());
        for bad in [
            ExperimentSpec { trials_per_point: 0, ..ExperimentSpec::default() },
            ExperimentSpec { pair_counts: vec![], ..ExperimentSpec::default() },
            ExperimentSpec { pair_counts: vec![3, 0], ..ExperimentSpec::default() },
            ExperimentSpec { algorithms: vec![], ..ExperimentSpec::default() },
            ExperimentSpec { jobs: Some(0), ..ExperimentSpec::default() },
        ] {
            assert!(matches!(bad.validate(), Err(BenchError::InvalidSpec(_))));
        }
    }

    #[test]
    fn summary_excludes_and_counts_unconverged() {
        let row = |trial, ee: Option<f64>, status| ResultRow {
            n_pairs: 2,
            algorithm: Algorithm::Opa,
            trial,
            seed: trial as u64,
            ee_nats_per_joule: ee,
            ee_bits_per_joule: ee.map(|v| 2.0 * v),
            wall_time_ms: 1.0 + trial as f64,
            iterations: 3,
            status,
        };
        let rows = vec![
            row(0, Some(1.0), RowStatus::Converged),
            row(1, None, RowStatus::Infeasible),
            row(2, Some(3.0), RowStatus::Converged),
            row(3, None, RowStatus::Failed),
        ];
        let s = &summarize(&rows)[0];
        assert_eq!((s.trials, s.converged, s.infeasible, s.failed), (4, 2, 1, 1));
        assert_eq!(s.ee_nats_mean, 2.0);
        assert_eq!(s.ee_bits_mean, 4.0);
        assert_eq!(s.wall_time_ms_median, 2.0);
    }
}
