//! Resource-allocation algorithms built on successive convex approximation.
//!
//! * [`jhtpa`]: joint harvesting time and power allocation (Dinkelbach-type
//!   EE ascent in `(theta, 1/p)`).
//! * [`opa`]: power allocation with the harvesting time pinned at `theta_fix`.
//! * [`oht`]: harvesting time only, every transmitter spending all it
//!   harvested; maximizes the weakest rate.
//!
//! JHTPA and OPA share [`run_sca`]: a strictly feasible start is located
//! first (phase one on the convexified constraints from the full-harvest
//! anchor at `theta_fix`, then random search), after which every iterate is
//! the interior solution of the previous subproblem and therefore strictly
//! feasible for the next.

mod jhtpa;
mod oht;
mod opa;

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ee::{self, Allocation, FeasibilityReport};
use crate::engine::{
    phase_one, BarrierSolver, DomainGuard, EngineError, SmoothFunction, SolveStatus,
    SolverSettings, SubproblemDump,
};
use crate::engine::ConvexProgram;
use crate::scenario::{ChannelRealization, ScenarioConfig};

pub use jhtpa::{build_jhtpa_subproblem, jhtpa, jhtpa_with, JhtpaModel};
pub use oht::{oht, oht_surrogates, oht_with, OhtSurrogate};
pub use opa::{build_opa_subproblem, opa, opa_with, OpaModel};

/// Ascent slack tolerated between consecutive SCA objective values.
pub const ASCENT_SLACK: f64 = 1e-9;
/// Strict feasibility demanded of a starting point, as a relative slack.
const START_MARGIN: f64 = 1e-10;
const PHASE_ONE_ROUNDS: usize = 12;
const RANDOM_SEARCH_SALT: u64 = 0x5eed_f00d_cafe_b0ba;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Algorithm {
    Jhtpa,
    Opa,
    Oht,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Jhtpa, Algorithm::Opa, Algorithm::Oht];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Jhtpa => "JHTPA",
            Algorithm::Opa => "OPA",
            Algorithm::Oht => "OHT",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jhtpa" => Ok(Algorithm::Jhtpa),
            "opa" => Ok(Algorithm::Opa),
            "oht" => Ok(Algorithm::Oht),
            other => Err(format!("unknown algorithm '{other}' (expected jhtpa, opa or oht)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum AlgorithmError {
    #[error("no strictly feasible starting point: {0}")]
    NoFeasiblePointFound(String),
    #[error("subproblem solve failed at SCA iteration {iteration}: {reason}")]
    SubsolverFailure {
        iteration: usize,
        reason: String,
        trace: Vec<f64>,
    },
    #[error("SCA did not converge within {iterations} iterations")]
    MaxScaIterations { iterations: usize, trace: Vec<f64> },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl AlgorithmError {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, AlgorithmError::NoFeasiblePointFound(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSettings {
    /// Relative stopping tolerance on consecutive objective values.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Upper end of the OHT search interval.
    pub oht_theta_max: f64,
    /// Random-search budget when phase one cannot produce a start.
    pub random_search_tries: usize,
    pub solver: SolverSettings,
    /// Keep per-subproblem dumps in the report.
    pub verbose: bool,
}

impl Default for AlgorithmSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-2,
            max_iterations: 100,
            oht_theta_max: 1e3,
            random_search_tries: 10_000,
            solver: SolverSettings::default(),
            verbose: false,
        }
    }
}

/// A realization with its parameters and QoS threshold.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub ch: &'a ChannelRealization,
    pub config: &'a ScenarioConfig,
    pub r_bar: f64,
}

impl<'a> Problem<'a> {
    /// Uses the standard threshold from [`ee::qos_threshold`].
    pub fn new(ch: &'a ChannelRealization, config: &'a ScenarioConfig) -> Self {
        Self::with_threshold(ch, config, ee::qos_threshold(ch, config))
    }

    pub fn with_threshold(ch: &'a ChannelRealization, config: &'a ScenarioConfig, r_bar: f64) -> Self {
        Self { ch, config, r_bar }
    }

    pub fn num_pairs(&self) -> usize {
        self.ch.num_pairs()
    }

    fn validate(&self) -> Result<(), AlgorithmError> {
        self.ch
            .validate()
            .map_err(|e| AlgorithmError::InvalidInput(e.to_string()))?;
        self.config
            .validate()
            .map_err(|e| AlgorithmError::InvalidInput(e.to_string()))?;
        if !(self.r_bar >= 0.0 && self.r_bar.is_finite()) {
            return Err(AlgorithmError::InvalidInput(format!(
                "QoS threshold must be finite and nonnegative, got {}",
                self.r_bar
            )));
        }
        Ok(())
    }

    fn random_search_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.config.seed ^ RANDOM_SEARCH_SALT)
    }
}

/// Iterate, current objective and its history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaState {
    pub iterate: Vec<f64>,
    /// Current energy efficiency (nats/J) for JHTPA/OPA; weakest rate for OHT.
    pub phi: f64,
    pub kappa: usize,
    pub trace: Vec<f64>,
}

impl ScaState {
    pub fn new(iterate: Vec<f64>, phi: f64) -> Self {
        Self {
            iterate,
            phi,
            kappa: 0,
            trace: vec![phi],
        }
    }

    pub fn z(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.iterate)
    }
}

/// How the starting point was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    /// The full-harvest anchor itself is strictly feasible.
    Anchor,
    PhaseOne,
    RandomSearch,
    /// Feasible set has no interior; the anchor is the only feasible point.
    Degenerate,
    /// OHT starts at `theta_fix`.
    Fixed,
    /// JHTPA started from the OHT solution, powers backed off the
    /// causality bound.
    TimeOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub algorithm: Algorithm,
    pub allocation: Allocation,
    pub ee_nats_per_joule: f64,
    pub ee_bits_per_joule: f64,
    pub iterations: usize,
    pub subsolver_calls: usize,
    pub wall_time_ms: f64,
    pub feasibility: FeasibilityReport,
    pub r_bar: f64,
    pub start: StartKind,
    /// Objective value per SCA iterate (EE for JHTPA/OPA, weakest rate for OHT).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<f64>,
    /// OHT only: EE through the full-harvest closed form of the power.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ee_closed_form: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub subproblems: Vec<SubproblemDump>,
}

impl SolveReport {
    /// Drops the trace and subproblem dumps.
    pub fn without_trace(mut self) -> Self {
        self.trace.clear();
        self.subproblems.clear();
        self
    }

    pub fn trace_is_nondecreasing(&self, slack: f64) -> bool {
        self.trace.windows(2).all(|w| w[1] >= w[0] - slack)
    }
}

pub fn run(
    algorithm: Algorithm,
    problem: &Problem<'_>,
    settings: &AlgorithmSettings,
) -> Result<SolveReport, AlgorithmError> {
    match algorithm {
        Algorithm::Jhtpa => jhtpa_with(problem, settings),
        Algorithm::Opa => opa_with(problem, problem.config.theta_fix, settings),
        Algorithm::Oht => oht_with(problem, settings),
    }
}

/// `|next - prev| <= tol * |next|`.
pub(crate) fn has_converged(prev: f64, next: f64, tol: f64) -> bool {
    (next - prev).abs() <= tol * next.abs().max(prev.abs())
}

/// A problem family solved by Dinkelbach-style SCA over convex subproblems.
pub(crate) trait ScaModel {
    fn dim(&self) -> usize;
    fn domain(&self) -> DomainGuard;
    /// Full-harvest point at `theta_fix`; feasible (possibly on the boundary)
    /// whenever the QoS threshold comes from [`ee::qos_threshold`].
    fn anchor(&self) -> DVector<f64>;
    /// Smallest relative slack of the original constraints at `z`.
    fn true_margin(&self, z: &DVector<f64>) -> f64;
    fn energy_efficiency(&self, z: &DVector<f64>) -> f64;
    fn subproblem(&self, state: &ScaState) -> ConvexProgram;
    fn random_start(&self, rng: &mut ChaCha8Rng, tries: usize) -> Result<DVector<f64>, EngineError>;
    fn allocation(&self, z: &DVector<f64>) -> Allocation;
}

pub(crate) struct Start {
    pub z: DVector<f64>,
    pub kind: StartKind,
    pub solver_calls: usize,
}

pub(crate) fn initialize<M: ScaModel>(
    model: &M,
    problem: &Problem<'_>,
    settings: &AlgorithmSettings,
) -> Result<Start, AlgorithmError> {
    let anchor = model.anchor();
    if model.true_margin(&anchor) > START_MARGIN {
        return Ok(Start { z: anchor, kind: StartKind::Anchor, solver_calls: 0 });
    }
    let mut calls = 0;
    let mut expansion = anchor.clone();
    let mut best = f64::NEG_INFINITY;
    let phase_settings = SolverSettings {
        duality_gap_tol: 1e-6,
        verbose: false,
        ..settings.solver.clone()
    };
    for _ in 0..PHASE_ONE_ROUNDS {
        let state = ScaState::new(expansion.iter().copied().collect(), 0.0);
        let constraints: Vec<Arc<dyn SmoothFunction>> = model.subproblem(&state).constraints;
        let Ok(out) = phase_one(&constraints, model.dim(), model.domain(), &expansion, &phase_settings)
        else {
            break;
        };
        calls += 1;
        if model.true_margin(&out.z) > START_MARGIN {
            return Ok(Start { z: out.z, kind: StartKind::PhaseOne, solver_calls: calls });
        }
        if !(out.margin > best + 1e-12) {
            break;
        }
        best = out.margin;
        expansion = out.z;
    }
    let mut rng = problem.random_search_rng();
    match model.random_start(&mut rng, settings.random_search_tries) {
        Ok(z) if model.true_margin(&z) > START_MARGIN => {
            Ok(Start { z, kind: StartKind::RandomSearch, solver_calls: calls })
        }
        _ if model.true_margin(&anchor) >= -1e-12 => {
            Ok(Start { z: anchor, kind: StartKind::Degenerate, solver_calls: calls })
        }
        _ => Err(AlgorithmError::NoFeasiblePointFound(format!(
            "phase one reached margin {best:e} and random search failed"
        ))),
    }
}

pub(crate) fn run_sca<M: ScaModel>(
    algorithm: Algorithm,
    model: &M,
    problem: &Problem<'_>,
    settings: &AlgorithmSettings,
) -> Result<SolveReport, AlgorithmError> {
    let started = Instant::now();
    problem.validate()?;
    let start = initialize(model, problem, settings)?;
    run_sca_from(algorithm, model, problem, settings, start, started)
}

/// SCA loop from a strictly feasible (or degenerate) start.
pub(crate) fn run_sca_from<M: ScaModel>(
    algorithm: Algorithm,
    model: &M,
    problem: &Problem<'_>,
    settings: &AlgorithmSettings,
    start: Start,
    started: Instant,
) -> Result<SolveReport, AlgorithmError> {
    let mut calls = start.solver_calls;
    let mut z = start.z;
    let mut state = ScaState::new(z.iter().copied().collect(), model.energy_efficiency(&z));
    let mut dumps = Vec::new();

    let mut converged = start.kind == StartKind::Degenerate;
    let solver_settings = SolverSettings {
        verbose: settings.verbose || settings.solver.verbose,
        ..settings.solver.clone()
    };
    let mut solver = BarrierSolver::new(solver_settings);
    while !converged && state.kappa < settings.max_iterations {
        let prog = model.subproblem(&state);
        if !prog.is_strictly_feasible(&z) {
            // The iterate sits on the boundary of the convexified set up to
            // rounding; no further ascent is available from here.
            converged = true;
            break;
        }
        let outcome = solver.solve(&prog, &z).map_err(|e| AlgorithmError::SubsolverFailure {
            iteration: state.kappa,
            reason: e.to_string(),
            trace: state.trace.clone(),
        })?;
        calls += 1;
        if let Some(d) = outcome.dump.clone() {
            dumps.push(d);
        }
        let candidate = outcome.z();
        let phi = model.energy_efficiency(&candidate);
        let improves = phi >= state.phi && model.true_margin(&candidate) > 0.0;
        if !improves {
            if outcome.status != SolveStatus::Optimal {
                return Err(AlgorithmError::SubsolverFailure {
                    iteration: state.kappa,
                    reason: format!("{:?} without ascent", outcome.status),
                    trace: state.trace.clone(),
                });
            }
            // The subproblem optimum equals the expansion point up to solver
            // accuracy: the iterate is stationary.
            converged = true;
            break;
        }
        converged = has_converged(state.phi, phi, settings.tolerance);
        z = candidate;
        state.iterate = z.iter().copied().collect();
        state.phi = phi;
        state.kappa += 1;
        state.trace.push(phi);
    }
    if !converged {
        return Err(AlgorithmError::MaxScaIterations {
            iterations: state.kappa,
            trace: state.trace,
        });
    }

    let allocation = model.allocation(&z);
    Ok(finish_report(
        algorithm,
        allocation,
        problem,
        state,
        calls,
        start.kind,
        started,
        dumps,
    ))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn finish_report(
    algorithm: Algorithm,
    allocation: Allocation,
    problem: &Problem<'_>,
    state: ScaState,
    calls: usize,
    start: StartKind,
    started: Instant,
    subproblems: Vec<SubproblemDump>,
) -> SolveReport {
    let ee_nats = ee::energy_efficiency(&allocation, problem.ch, problem.config);
    let feasibility = ee::check_feasible(&allocation, problem.ch, problem.config, problem.r_bar);
    SolveReport {
        algorithm,
        ee_bits_per_joule: ee::nats_to_bits_per_joule(ee_nats, problem.config),
        ee_nats_per_joule: ee_nats,
        allocation,
        iterations: state.kappa,
        subsolver_calls: calls,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        feasibility,
        r_bar: problem.r_bar,
        start,
        trace: state.trace,
        ee_closed_form: None,
        subproblems,
    }
}
