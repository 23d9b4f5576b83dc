//! Log-barrier path following with damped Newton centering.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{
    ConvexProgram, EngineError, SolveOutcome, SolveStatus, SolverSettings, SubproblemDump,
};

const REG_FIRST: f64 = 1e-10;
const REG_CAP: f64 = 1e-2;
const MIN_STEP: f64 = 1e-14;
/// A centering whose line search stalls is accepted as centered below this
/// decrement.
const STALL_DECREMENT: f64 = 1e-6;

/// Owns the scratch buffers of one solve at a time.
#[derive(Debug, Clone)]
pub struct BarrierSolver {
    settings: SolverSettings,
    hess: DMatrix<f64>,
    grad: DVector<f64>,
}

impl BarrierSolver {
    pub fn new(settings: SolverSettings) -> Self {
        Self {
            settings,
            hess: DMatrix::zeros(0, 0),
            grad: DVector::zeros(0),
        }
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn solve(
        &mut self,
        prog: &ConvexProgram,
        z0: &DVector<f64>,
    ) -> Result<SolveOutcome, EngineError> {
        let started = Instant::now();
        if z0.len() != prog.dim {
            return Err(EngineError::DimensionMismatch {
                expected: prog.dim,
                got: z0.len(),
            });
        }
        if !(prog.domain)(z0) {
            return Err(EngineError::OutsideDomain);
        }
        let max_c = prog.max_constraint(z0);
        if !prog.constraints.is_empty() && !(max_c < 0.0) {
            return Err(EngineError::InfeasibleStart { max_constraint: max_c });
        }

        let s = self.settings.clone();
        let m = prog.constraints.len();
        let mut z = z0.clone();
        let mut t = if m == 0 { 1.0 } else { s.initial_t };
        let mut newton_steps = 0;
        let mut objective_trace = Vec::new();
        let mut iterate_trace = Vec::new();
        let mut status = SolveStatus::MaxIterations;
        let mut outer = 0;

        while outer < s.max_outer_iters {
            outer += 1;
            match self.center(prog, &mut z, t, &mut newton_steps) {
                Centering::Done | Centering::IterationLimit => {}
                Centering::Failed => {
                    status = SolveStatus::NumericalFailure;
                    objective_trace.push(prog.objective.value(&z));
                    break;
                }
            }
            objective_trace.push(prog.objective.value(&z));
            if s.verbose {
                iterate_trace.push(z.iter().copied().collect());
            }
            if m == 0 || (m as f64) / t < s.duality_gap_tol {
                status = SolveStatus::Optimal;
                break;
            }
            t *= s.barrier_mu;
        }

        let dump = s.verbose.then(|| SubproblemDump {
            dim: prog.dim,
            constraint_values: prog.constraint_values(&z),
            iterate_trace,
        });
        Ok(SolveOutcome {
            objective_value: prog.objective.value(&z),
            z_star: z.iter().copied().collect(),
            status,
            newton_step_count: newton_steps,
            outer_iterations: outer,
            wall_time_us: started.elapsed().as_secs_f64() * 1e6,
            objective_trace,
            dump,
        })
    }

    /// Minimizes `t f(z) - sum ln(-c_j(z))` from a strictly feasible `z`.
    fn center(
        &mut self,
        prog: &ConvexProgram,
        z: &mut DVector<f64>,
        t: f64,
        newton_steps: &mut usize,
    ) -> Centering {
        let (beta, alpha) = (
            self.settings.line_search_backtrack,
            self.settings.line_search_sufficient_decrease,
        );
        let newton_tol = self.settings.newton_tol;
        for _ in 0..self.settings.max_newton_iters {
            self.assemble(prog, z, t);
            let Some(dir) = regularized_newton_direction(&self.hess, &self.grad) else {
                return Centering::Failed;
            };
            let slope = self.grad.dot(&dir);
            let decrement_sq = -slope;
            if !decrement_sq.is_finite() {
                return Centering::Failed;
            }
            if decrement_sq / 2.0 <= newton_tol {
                return Centering::Done;
            }
            let (phi0, scale0) = barrier_value(prog, z, t).expect("current iterate is interior");
            let slack = 1e-13 * scale0;
            let mut step = 1.0;
            let accepted = loop {
                if step < MIN_STEP {
                    break false;
                }
                let trial = &*z + &dir * step;
                if (prog.domain)(&trial) {
                    if let Some((phi, _)) = barrier_value(prog, &trial, t) {
                        if phi <= phi0 + alpha * step * slope + slack {
                            *z = trial;
                            break true;
                        }
                    }
                }
                step *= beta;
            };
            *newton_steps += 1;
            if !accepted {
                return if decrement_sq < STALL_DECREMENT {
                    Centering::Done
                } else {
                    Centering::Failed
                };
            }
        }
        Centering::IterationLimit
    }

    fn assemble(&mut self, prog: &ConvexProgram, z: &DVector<f64>, t: f64) {
        let n = prog.dim;
        self.grad = prog.objective.gradient(z) * t;
        self.hess = prog.objective.hessian(z) * t;
        debug_assert_eq!(self.hess.nrows(), n);
        for c in &prog.constraints {
            let slack = -c.value(z);
            let g = c.gradient(z);
            let h = c.hessian(z);
            self.grad.axpy(1.0 / slack, &g, 1.0);
            self.hess += h / slack;
            self.hess.ger(1.0 / (slack * slack), &g, &g, 1.0);
        }
    }
}

enum Centering {
    Done,
    IterationLimit,
    Failed,
}

/// Barrier objective and a magnitude scale for rounding slack, or `None`
/// outside the strict interior.
fn barrier_value(prog: &ConvexProgram, z: &DVector<f64>, t: f64) -> Option<(f64, f64)> {
    let f = t * prog.objective.value(z);
    if !f.is_finite() {
        return None;
    }
    let mut total = f;
    let mut scale = f.abs();
    for c in &prog.constraints {
        let v = c.value(z);
        if !(v < 0.0) {
            return None;
        }
        let term = -(-v).ln();
        total += term;
        scale += term.abs();
    }
    Some((total, scale))
}

/// Solves `H d = -g` by Cholesky on the Jacobi-equilibrated Hessian with
/// escalating diagonal regularization when it is not positive definite.
fn regularized_newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let n = grad.len();
    let sym = (hess + hess.transpose()) * 0.5;
    let d = DVector::from_iterator(
        n,
        sym.diagonal().iter().map(|&v| {
            if v > 0.0 && v.is_finite() {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        }),
    );
    let mut scaled = sym;
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] *= d[i] * d[j];
        }
    }
    if scaled.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let rhs = -grad.component_mul(&d);
    let mut reg = 0.0;
    while reg <= REG_CAP {
        let mut m = scaled.clone();
        for i in 0..n {
            m[(i, i)] += reg;
        }
        if let Some(chol) = m.cholesky() {
            let step = chol.solve(&rhs);
            return Some(step.component_mul(&d));
        }
        reg = if reg == 0.0 { REG_FIRST } else { reg * 10.0 };
    }
    None
}

/// One-shot convenience wrapper around [`BarrierSolver`].
pub fn solve(
    prog: &ConvexProgram,
    z0: &DVector<f64>,
    settings: &SolverSettings,
) -> Result<SolveOutcome, EngineError> {
    BarrierSolver::new(settings.clone()).solve(prog, z0)
}
