//! Power allocation at a fixed harvesting time.
//!
//! With `theta` pinned the transmit fraction is constant, so the rate of pair
//! `n` is `ln(1 + 1/(x_n y_n)) / theta` with `x_n = 1/(p_n h_nn)` (convex) and
//! `y_n = sum_{i != n} h_ni p_i + sigma2` (affine). The bound is applied with
//! `t = 1` and the `1/theta` factor carried outside.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use super::{run_sca, Algorithm, AlgorithmError, AlgorithmSettings, Problem, ScaModel, ScaState, SolveReport};
use crate::ee::{self, log_bound_coeffs, Allocation, BoundCoeffs};
use crate::engine::{find_feasible, positive_orthant, ConvexProgram, DomainGuard, EngineError, SearchBox, SmoothFunction};
use crate::scenario::{ChannelRealization, ScenarioConfig};

/// Minorant of `ln(1 + SINR_n)` in power space, evaluated as its value at
/// the expansion point plus an increment from coordinate differences.
#[derive(Debug, Clone)]
struct LogSinrPsi {
    n: usize,
    coeffs: BoundCoeffs,
    row: Vec<f64>,
    center: DVector<f64>,
    base: f64,
}

impl LogSinrPsi {
    fn at(n: usize, p: &DVector<f64>, ch: &ChannelRealization) -> Self {
        let row = ch.h[n].clone();
        let x = 1.0 / (p[n] * row[n]);
        let y = interference(n, p, &row, ch.sigma2_watt);
        let coeffs = log_bound_coeffs(x, y, 1.0).expect("expansion point lies in the domain");
        Self {
            n,
            base: coeffs.surrogate_psi(x, y, 1.0),
            coeffs,
            row,
            center: p.clone(),
        }
    }

    fn increment(&self, p: &DVector<f64>) -> f64 {
        let (n, pc) = (self.n, &self.center);
        let dx = (pc[n] - p[n]) / (p[n] * pc[n] * self.row[n]);
        let dy: f64 = self
            .row
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != n)
            .map(|(i, h)| h * (p[i] - pc[i]))
            .sum();
        -self.coeffs.cx * dx - self.coeffs.cy * dy
    }

    #[cfg(test)]
    fn value(&self, p: &DVector<f64>) -> f64 {
        self.base + self.increment(p)
    }

    fn add_gradient(&self, p: &DVector<f64>, weight: f64, out: &mut DVector<f64>) {
        let c = &self.coeffs;
        for (i, h) in self.row.iter().enumerate() {
            if i == self.n {
                out[i] += weight * c.cx / (h * p[i] * p[i]);
            } else {
                out[i] -= weight * c.cy * h;
            }
        }
    }

    fn add_hessian(&self, p: &DVector<f64>, weight: f64, out: &mut DMatrix<f64>) {
        let n = self.n;
        out[(n, n)] -= weight * 2.0 * self.coeffs.cx / (self.row[n] * p[n] * p[n] * p[n]);
    }
}

fn interference(n: usize, p: &DVector<f64>, row: &[f64], sigma2: f64) -> f64 {
    row.iter()
        .enumerate()
        .filter(|(i, _)| *i != n)
        .map(|(i, h)| h * p[i])
        .sum::<f64>()
        + sigma2
}

/// `-scale * (sum_n psi_n - phi' * sum_n p_n)`; the constant part of the
/// power and the `1/theta` factor are folded into `phi'`.
struct PowerSurplus {
    psis: Vec<LogSinrPsi>,
    price: f64,
    scale: f64,
}

impl SmoothFunction for PowerSurplus {
    fn value(&self, p: &DVector<f64>) -> f64 {
        let Some(first) = self.psis.first() else {
            return self.scale * self.price * p.sum();
        };
        let center = &first.center;
        let base = self.psis.iter().map(|s| s.base).sum::<f64>() - self.price * center.sum();
        let step = self.psis.iter().map(|s| s.increment(p)).sum::<f64>() - self.price * (p - center).sum();
        -self.scale * (base + step)
    }
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::from_element(p.len(), self.scale * self.price);
        for s in &self.psis {
            s.add_gradient(p, -self.scale, &mut g);
        }
        g
    }
    fn hessian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(p.len(), p.len());
        for s in &self.psis {
            s.add_hessian(p, -self.scale, &mut h);
        }
        h
    }
}

/// `scale * (target - psi_n)`.
struct LogSinrFloor {
    psi: LogSinrPsi,
    target: f64,
    scale: f64,
}

impl SmoothFunction for LogSinrFloor {
    fn value(&self, p: &DVector<f64>) -> f64 {
        self.scale * ((self.target - self.psi.base) - self.psi.increment(p))
    }
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(p.len());
        self.psi.add_gradient(p, -self.scale, &mut g);
        g
    }
    fn hessian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(p.len(), p.len());
        self.psi.add_hessian(p, -self.scale, &mut h);
        h
    }
}

fn power_caps(theta_fix: f64, ch: &ChannelRealization, config: &ScenarioConfig) -> Vec<f64> {
    ee::full_harvest_powers(theta_fix, ch, config)
}

/// Subproblem at `state.iterate = p`. `state.phi` is the EE at `p`; the
/// Dinkelbach price on `sum p` becomes `phi` because both the rates and the
/// transmit power carry the same `1/theta` factor.
pub fn build_opa_subproblem(state: &ScaState, problem: &Problem<'_>, theta_fix: f64) -> ConvexProgram {
    let ch = problem.ch;
    let p = state.z();
    let dim = ch.num_pairs();
    let logs: Vec<f64> = (0..dim).map(|n| ee::sinr(&state.iterate, ch, n).ln_1p()).collect();
    let total: f64 = logs.iter().sum();
    let psis: Vec<LogSinrPsi> = (0..dim).map(|n| LogSinrPsi::at(n, &p, ch)).collect();
    let objective = PowerSurplus {
        psis: psis.clone(),
        price: state.phi,
        scale: 1.0 / total.max(f64::MIN_POSITIVE),
    };
    let target = theta_fix * problem.r_bar;
    let caps = power_caps(theta_fix, ch, problem.config);
    let mut prog = ConvexProgram::new(dim, Arc::new(objective), positive_orthant());
    for (n, psi) in psis.into_iter().enumerate() {
        let mut a = DVector::zeros(dim);
        a[n] = 1.0 / caps[n];
        prog = prog.with_constraint(Arc::new(crate::engine::Affine::new(a, -1.0)));
        prog = prog.with_constraint(Arc::new(LogSinrFloor {
            psi,
            target,
            scale: 1.0 / logs[n].max(target).max(f64::MIN_POSITIVE),
        }));
    }
    prog
}

pub struct OpaModel<'a> {
    problem: Problem<'a>,
    theta_fix: f64,
    caps: Vec<f64>,
}

impl<'a> OpaModel<'a> {
    pub fn new(problem: Problem<'a>, theta_fix: f64) -> Self {
        let caps = power_caps(theta_fix, problem.ch, problem.config);
        Self {
            problem,
            theta_fix,
            caps,
        }
    }

    fn to_alloc(&self, p: &DVector<f64>) -> Allocation {
        Allocation::from_theta(self.theta_fix, p.iter().copied().collect())
    }
}

impl ScaModel for OpaModel<'_> {
    fn dim(&self) -> usize {
        self.problem.num_pairs()
    }

    fn domain(&self) -> DomainGuard {
        positive_orthant()
    }

    fn anchor(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.caps)
    }

    fn true_margin(&self, p: &DVector<f64>) -> f64 {
        if !p.iter().all(|&v| v > 0.0 && v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let alloc = self.to_alloc(p);
        let mut margin = f64::INFINITY;
        for n in 0..p.len() {
            margin = margin.min(1.0 - p[n] / self.caps[n]);
            let r = ee::rate(&alloc, self.problem.ch, n);
            margin = margin.min((r - self.problem.r_bar) / r.max(f64::MIN_POSITIVE));
        }
        margin
    }

    fn energy_efficiency(&self, p: &DVector<f64>) -> f64 {
        ee::energy_efficiency(&self.to_alloc(p), self.problem.ch, self.problem.config)
    }

    fn subproblem(&self, state: &ScaState) -> ConvexProgram {
        build_opa_subproblem(state, &self.problem, self.theta_fix)
    }

    /// Each `p_n` log-uniform in `[1e-6, 1]` times its cap.
    fn random_start(&self, rng: &mut ChaCha8Rng, tries: usize) -> Result<DVector<f64>, EngineError> {
        let n = self.dim();
        let bounds = SearchBox::new(vec![1e-6; n], vec![1.0; n], vec![true; n]);
        let caps = self.caps.clone();
        let to_domain = move |v: &[f64]| DVector::from_iterator(n, v.iter().zip(&caps).map(|(f, c)| f * c));
        let feasible = |p: &DVector<f64>| -self.true_margin(p);
        find_feasible(&[&feasible], &bounds, to_domain, rng, tries)
    }

    fn allocation(&self, p: &DVector<f64>) -> Allocation {
        self.to_alloc(p)
    }
}

pub fn opa(
    ch: &ChannelRealization,
    config: &ScenarioConfig,
    theta_fix: f64,
    settings: &AlgorithmSettings,
) -> Result<SolveReport, AlgorithmError> {
    opa_with(&Problem::new(ch, config), theta_fix, settings)
}

pub fn opa_with(
    problem: &Problem<'_>,
    theta_fix: f64,
    settings: &AlgorithmSettings,
) -> Result<SolveReport, AlgorithmError> {
    if !(theta_fix > 1.0 && theta_fix.is_finite()) {
        return Err(AlgorithmError::InvalidInput(format!(
            "theta_fix must exceed 1, got {theta_fix}"
        )));
    }
    run_sca(Algorithm::Opa, &OpaModel::new(*problem, theta_fix), problem, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::check_gradients;
    use crate::scenario::Scenario;

    fn fixture(n: usize, seed: u64) -> Scenario {
        Scenario::generate(&ScenarioConfig::new(n, seed)).unwrap()
    }

    fn interior(s: &Scenario) -> (ScaState, f64) {
        let problem = Problem::new(&s.channels, &s.config);
        let model = OpaModel::new(problem, 2.0);
        let caps = model.caps.clone();
        let p: Vec<f64> = caps.iter().map(|c| 0.7 * c).collect();
        let phi = model.energy_efficiency(&DVector::from_column_slice(&p));
        (ScaState::new(p, phi), 2.0)
    }

    #[test]
    fn surplus_vanishes_at_expansion() {
        let s = fixture(4, 3);
        let (state, theta) = interior(&s);
        let problem = Problem::with_threshold(&s.channels, &s.config, 0.0);
        let prog = build_opa_subproblem(&state, &problem, theta);
        let p = state.z();
        // EE = sum ln(1+SINR) / (sum p + theta * const), so the surplus with
        // price phi equals phi * theta * const at the expansion point.
        let consts = (theta - 1.0) * s.config.harvest_scale() + theta * s.config.p_cir_watt;
        let logs: f64 = (0..4).map(|n| ee::sinr(&state.iterate, &s.channels, n).ln_1p()).sum();
        let expect = -(state.phi * consts) / logs;
        assert!((prog.objective.value(&p) - expect).abs() <= 1e-10 * expect.abs());
    }

    #[test]
    fn minorant_touches_log_sinr() {
        let s = fixture(4, 5);
        let (state, _) = interior(&s);
        let p = state.z();
        for n in 0..4 {
            let psi = LogSinrPsi::at(n, &p, &s.channels);
            let exact = ee::sinr(&state.iterate, &s.channels, n).ln_1p();
            assert!((psi.value(&p) - exact).abs() <= 1e-10 * exact);
            let moved = p.map(|v| v * 1.3);
            let truth = ee::sinr(moved.as_slice(), &s.channels, n).ln_1p();
            assert!(psi.value(&moved) <= truth * (1.0 + 1e-12));
        }
    }

    #[test]
    fn oracles_match_finite_differences() {
        let s = fixture(6, 9);
        let (state, theta) = interior(&s);
        let problem = Problem::with_threshold(&s.channels, &s.config, 0.0);
        let prog = build_opa_subproblem(&state, &problem, theta);
        let err = check_gradients(&prog, &state.z());
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn single_pair_is_degenerate_at_the_cap() {
        let s = fixture(1, 4);
        let rep = opa(&s.channels, &s.config, 2.0, &AlgorithmSettings::default()).unwrap();
        assert_eq!(rep.start, super::super::StartKind::Degenerate);
        let cap = s.channels.g[0] * s.config.harvest_scale();
        assert!((rep.allocation.p[0] - cap).abs() <= 1e-12 * cap);
    }

    #[test]
    fn rejects_bad_theta() {
        let s = fixture(2, 4);
        assert!(matches!(
            opa(&s.channels, &s.config, 1.0, &AlgorithmSettings::default()),
            Err(AlgorithmError::InvalidInput(_))
        ));
    }
}
