//! Dense interior-point machinery for the small smooth convex programs that
//! each SCA iteration produces.
//!
//! Programs are stated in minimization form: `min f(z)` subject to
//! `c_j(z) <= 0`, with `z` restricted to an open domain. Every functional
//! supplies analytic first and second derivatives.

mod barrier;
mod feasible;
mod gradcheck;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use barrier::{solve, BarrierSolver};
pub use feasible::{find_feasible, phase_one, PhaseOneOutcome, SearchBox};
pub use gradcheck::{check_gradients, function_derivative_error};

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("starting point is not strictly feasible (max constraint {max_constraint:e})")]
    InfeasibleStart { max_constraint: f64 },
    #[error("starting point lies outside the program domain")]
    OutsideDomain,
    #[error("dimension mismatch: program has {expected} variables, point has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no feasible point found after {tries} random draws")]
    NoFeasiblePointFound { tries: usize },
}

/// A twice differentiable scalar function of the decision vector.
pub trait SmoothFunction: Send + Sync {
    fn value(&self, z: &DVector<f64>) -> f64;
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64>;
}

type ValueFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type GradFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type HessFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// [`SmoothFunction`] assembled from three closures.
pub struct FnFunction {
    value: Box<ValueFn>,
    gradient: Box<GradFn>,
    hessian: Box<HessFn>,
}

impl FnFunction {
    pub fn new(
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        hessian: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Box::new(value),
            gradient: Box::new(gradient),
            hessian: Box::new(hessian),
        }
    }
}

impl SmoothFunction for FnFunction {
    fn value(&self, z: &DVector<f64>) -> f64 {
        (self.value)(z)
    }
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(z)
    }
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        (self.hessian)(z)
    }
}

/// `a . z + b`.
#[derive(Debug, Clone)]
pub struct Affine {
    pub a: DVector<f64>,
    pub b: f64,
}

impl Affine {
    pub fn new(a: DVector<f64>, b: f64) -> Self {
        Self { a, b }
    }
}

impl SmoothFunction for Affine {
    fn value(&self, z: &DVector<f64>) -> f64 {
        self.a.dot(z) + self.b
    }
    fn gradient(&self, _z: &DVector<f64>) -> DVector<f64> {
        self.a.clone()
    }
    fn hessian(&self, _z: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.a.len(), self.a.len())
    }
}

/// Open-domain predicate, e.g. "every coordinate positive".
pub type DomainGuard = Arc<dyn Fn(&DVector<f64>) -> bool + Send + Sync>;

pub fn positive_orthant() -> DomainGuard {
    Arc::new(|z: &DVector<f64>| z.iter().all(|&v| v > 0.0 && v.is_finite()))
}

/// `min objective(z)` s.t. `constraints[j](z) <= 0`, `domain(z)`.
#[derive(Clone)]
pub struct ConvexProgram {
    pub dim: usize,
    pub objective: Arc<dyn SmoothFunction>,
    pub constraints: Vec<Arc<dyn SmoothFunction>>,
    pub domain: DomainGuard,
}

impl ConvexProgram {
    pub fn new(dim: usize, objective: Arc<dyn SmoothFunction>, domain: DomainGuard) -> Self {
        Self {
            dim,
            objective,
            constraints: Vec::new(),
            domain,
        }
    }

    pub fn with_constraint(mut self, c: Arc<dyn SmoothFunction>) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn constraint_values(&self, z: &DVector<f64>) -> Vec<f64> {
        self.constraints.iter().map(|c| c.value(z)).collect()
    }

    pub fn max_constraint(&self, z: &DVector<f64>) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.value(z))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Domain holds and every constraint is strictly negative.
    pub fn is_strictly_feasible(&self, z: &DVector<f64>) -> bool {
        z.len() == self.dim && (self.domain)(z) && self.constraints.iter().all(|c| c.value(z) < 0.0)
    }
}

impl std::fmt::Debug for ConvexProgram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvexProgram")
            .field("dim", &self.dim)
            .field("constraints", &self.constraints.len())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Factor by which the barrier weight grows between centerings.
    pub barrier_mu: f64,
    /// Centering stops once half the squared Newton decrement drops below this.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub max_outer_iters: usize,
    pub line_search_backtrack: f64,
    pub line_search_sufficient_decrease: f64,
    /// Stop once `m / t` falls below this.
    pub duality_gap_tol: f64,
    /// Barrier weight of the first centering.
    pub initial_t: f64,
    /// Attach a [`SubproblemDump`] to every outcome.
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            barrier_mu: 10.0,
            newton_tol: 1e-9,
            max_newton_iters: 50,
            max_outer_iters: 40,
            line_search_backtrack: 0.5,
            line_search_sufficient_decrease: 1e-4,
            duality_gap_tol: 1e-7,
            initial_t: 1.0,
            verbose: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            self.barrier_mu - 1.0,
            self.newton_tol,
            self.line_search_sufficient_decrease,
            self.duality_gap_tol,
            self.initial_t,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err("solver tolerances must be positive and barrier_mu > 1".into());
        }
        if !(self.line_search_backtrack > 0.0 && self.line_search_backtrack < 1.0) {
            return Err("line_search_backtrack must lie in (0, 1)".into());
        }
        if self.max_newton_iters == 0 || self.max_outer_iters == 0 {
            return Err("iteration limits must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    NumericalFailure,
}

/// Debug record of one subproblem solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemDump {
    pub dim: usize,
    pub constraint_values: Vec<f64>,
    /// Iterate after each centering step.
    pub iterate_trace: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub z_star: Vec<f64>,
    pub objective_value: f64,
    pub status: SolveStatus,
    pub newton_step_count: usize,
    pub outer_iterations: usize,
    pub wall_time_us: f64,
    /// True objective after each centering.
    pub objective_trace: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dump: Option<SubproblemDump>,
}

impl SolveOutcome {
    pub fn z(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.z_star)
    }
}
