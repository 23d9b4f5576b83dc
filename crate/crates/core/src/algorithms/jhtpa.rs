//! Joint harvesting time and power allocation.
//!
//! Decision vector `z = (theta, q_1, ..., q_N)` with `q_n = 1/p_n`. Each rate
//! is `ln(1 + 1/(x_n y_n)) / theta` with `x_n = q_n / h_nn` (affine) and
//! `y_n = sum_{i != n} h_ni / q_i + sigma2` (convex), so the tangent-plane
//! minorant is concave in `z`. The harvesting term `(1 - 1/theta) eta P0` is
//! concave and is majorized by its tangent at the expansion point.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use super::{
    oht_with, run_sca, run_sca_from, Algorithm, AlgorithmError, AlgorithmSettings, Problem, ScaModel,
    ScaState, SolveReport, Start, StartKind,
};
use crate::ee::{self, log_bound_coeffs, Allocation, BoundCoeffs, THETA_MARGIN};
use crate::engine::{find_feasible, ConvexProgram, DomainGuard, EngineError, SearchBox, SmoothFunction};
use crate::scenario::{ChannelRealization, ScenarioConfig};

/// Minorant of the rate of pair `n` in `(theta, q)` space.
///
/// Values are formed as the value at the expansion point plus an increment
/// built from coordinate differences, which keeps small constraint slacks
/// accurate.
#[derive(Debug, Clone)]
struct RatePsi {
    n: usize,
    coeffs: BoundCoeffs,
    /// Row `n` of the gain matrix.
    row: Vec<f64>,
    center: DVector<f64>,
    base: f64,
}

impl RatePsi {
    fn at(n: usize, z: &DVector<f64>, ch: &ChannelRealization) -> Self {
        let (x, y) = xy(n, z, &ch.h[n], ch.sigma2_watt);
        let coeffs = log_bound_coeffs(x, y, z[0]).expect("expansion point lies in the domain");
        Self {
            n,
            base: coeffs.surrogate_psi(x, y, z[0]),
            coeffs,
            row: ch.h[n].clone(),
            center: z.clone(),
        }
    }

    /// `psi(z) - psi(center)`.
    fn increment(&self, z: &DVector<f64>) -> f64 {
        let c = &self.coeffs;
        let zc = &self.center;
        let dx = (z[1 + self.n] - zc[1 + self.n]) / self.row[self.n];
        let dy: f64 = self
            .row
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.n)
            .map(|(i, h)| h * (zc[1 + i] - z[1 + i]) / (z[1 + i] * zc[1 + i]))
            .sum();
        -c.cx * dx - c.cy * dy - c.ct * (z[0] - zc[0])
    }

    #[cfg(test)]
    fn value(&self, z: &DVector<f64>) -> f64 {
        self.base + self.increment(z)
    }
    fn add_gradient(&self, z: &DVector<f64>, weight: f64, out: &mut DVector<f64>) {
        let c = &self.coeffs;
        out[0] -= weight * c.ct;
        out[1 + self.n] -= weight * c.cx / self.row[self.n];
        for (i, h) in self.row.iter().enumerate().filter(|(i, _)| *i != self.n) {
            let q = z[1 + i];
            out[1 + i] += weight * c.cy * h / (q * q);
        }
    }

    fn add_hessian(&self, z: &DVector<f64>, weight: f64, out: &mut DMatrix<f64>) {
        for (i, h) in self.row.iter().enumerate().filter(|(i, _)| *i != self.n) {
            let q = z[1 + i];
            out[(1 + i, 1 + i)] -= weight * 2.0 * self.coeffs.cy * h / (q * q * q);
        }
    }
}

fn xy(n: usize, z: &DVector<f64>, row: &[f64], sigma2: f64) -> (f64, f64) {
    let x = z[1 + n] / row[n];
    let y = row
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != n)
        .map(|(i, h)| h / z[1 + i])
        .sum::<f64>()
        + sigma2;
    (x, y)
}

/// `-(sum_n psi_n - phi * P_lin) * scale`, where `P_lin` majorizes the
/// consumed power.
struct SurplusObjective {
    psis: Vec<RatePsi>,
    phi: f64,
    theta_bar: f64,
    harvest: f64,
    p_cir: f64,
    scale: f64,
}

impl SurplusObjective {
    fn power_bound(&self, z: &DVector<f64>) -> f64 {
        let theta = z[0];
        let transmit: f64 = z.iter().skip(1).map(|q| 1.0 / (theta * q)).sum();
        let tb = self.theta_bar;
        transmit + (1.0 - 2.0 / tb + theta / (tb * tb)) * self.harvest + self.p_cir
    }

    /// `power_bound(z) - power_bound(center)`.
    fn power_increment(&self, z: &DVector<f64>, center: &DVector<f64>) -> f64 {
        let (theta, tb) = (z[0], center[0]);
        let transmit: f64 = z
            .iter()
            .zip(center.iter())
            .skip(1)
            .map(|(&q, &qb)| (tb * (qb - q) + (tb - theta) * q) / (theta * q * tb * qb))
            .sum();
        transmit + (theta - tb) * self.harvest / (tb * tb)
    }
}

impl SmoothFunction for SurplusObjective {
    fn value(&self, z: &DVector<f64>) -> f64 {
        let Some(first) = self.psis.first() else {
            return self.scale * self.phi * self.power_bound(z);
        };
        let center = &first.center;
        let base = self.psis.iter().map(|p| p.base).sum::<f64>() - self.phi * self.power_bound(center);
        let step = self.psis.iter().map(|p| p.increment(z)).sum::<f64>() - self.phi * self.power_increment(z, center);
        -self.scale * (base + step)
    }

    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(z.len());
        for p in &self.psis {
            p.add_gradient(z, -self.scale, &mut g);
        }
        let theta = z[0];
        let w = self.scale * self.phi;
        let mut d_theta = self.harvest / (self.theta_bar * self.theta_bar);
        for (k, &q) in z.iter().enumerate().skip(1) {
            d_theta -= 1.0 / (theta * theta * q);
            g[k] -= w / (theta * q * q);
        }
        g[0] += w * d_theta;
        g
    }

    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let n = z.len();
        let mut h = DMatrix::zeros(n, n);
        for p in &self.psis {
            p.add_hessian(z, -self.scale, &mut h);
        }
        let theta = z[0];
        let w = self.scale * self.phi;
        for (k, &q) in z.iter().enumerate().skip(1) {
            h[(0, 0)] += w * 2.0 / (theta * theta * theta * q);
            let cross = w / (theta * theta * q * q);
            h[(0, k)] += cross;
            h[(k, 0)] += cross;
            h[(k, k)] += w * 2.0 / (theta * q * q * q);
        }
        h
    }
}

/// `scale * (r_bar - psi_n)`.
struct QosConstraint {
    psi: RatePsi,
    r_bar: f64,
    scale: f64,
}

impl SmoothFunction for QosConstraint {
    fn value(&self, z: &DVector<f64>) -> f64 {
        self.scale * ((self.r_bar - self.psi.base) - self.psi.increment(z))
    }
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(z.len());
        self.psi.add_gradient(z, -self.scale, &mut g);
        g
    }
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(z.len(), z.len());
        self.psi.add_hessian(z, -self.scale, &mut h);
        h
    }
}

/// `scale * (1/q_n - (theta - 1) eta P0 g_n)`, evaluated as an offset from
/// the expansion point `(theta_bar, q_bar)`.
struct CausalityConstraint {
    n: usize,
    harvest_gain: f64,
    scale: f64,
    theta_bar: f64,
    q_bar: f64,
}

impl SmoothFunction for CausalityConstraint {
    fn value(&self, z: &DVector<f64>) -> f64 {
        let (theta, q) = (z[0], z[1 + self.n]);
        let base = 1.0 / self.q_bar - (self.theta_bar - 1.0) * self.harvest_gain;
        let step = (self.q_bar - q) / (q * self.q_bar) - (theta - self.theta_bar) * self.harvest_gain;
        self.scale * (base + step)
    }
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(z.len());
        let q = z[1 + self.n];
        g[0] = -self.scale * self.harvest_gain;
        g[1 + self.n] = -self.scale / (q * q);
        g
    }
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(z.len(), z.len());
        let q = z[1 + self.n];
        h[(1 + self.n, 1 + self.n)] = 2.0 * self.scale / (q * q * q);
        h
    }
}

/// The convex subproblem at `state.iterate = (theta, q)` with Dinkelbach
/// weight `state.phi`. Objective is normalized by the sum rate at the
/// expansion point, and constraints by their natural scales there.
pub fn build_jhtpa_subproblem(state: &ScaState, problem: &Problem<'_>) -> ConvexProgram {
    let ch = problem.ch;
    let config = problem.config;
    let z = state.z();
    let theta = z[0];
    let alloc = Allocation::from_inverse_powers(theta, &state.iterate[1..]);
    let rates: Vec<f64> = (0..ch.num_pairs()).map(|n| ee::rate(&alloc, ch, n)).collect();
    let total: f64 = rates.iter().sum();
    let psis: Vec<RatePsi> = (0..ch.num_pairs()).map(|n| RatePsi::at(n, &z, ch)).collect();

    let objective = SurplusObjective {
        psis: psis.clone(),
        phi: state.phi,
        theta_bar: theta,
        harvest: config.harvest_scale(),
        p_cir: config.p_cir_watt,
        scale: 1.0 / total.max(f64::MIN_POSITIVE),
    };
    let mut prog = ConvexProgram::new(ch.num_pairs() + 1, Arc::new(objective), jhtpa_domain());
    for (n, psi) in psis.into_iter().enumerate() {
        prog = prog.with_constraint(Arc::new(CausalityConstraint {
            n,
            harvest_gain: config.harvest_scale() * ch.g[n],
            scale: z[1 + n],
            theta_bar: theta,
            q_bar: z[1 + n],
        }));
        prog = prog.with_constraint(Arc::new(QosConstraint {
            psi,
            r_bar: problem.r_bar,
            scale: 1.0 / rates[n].max(problem.r_bar).max(f64::MIN_POSITIVE),
        }));
    }
    prog
}

fn jhtpa_domain() -> DomainGuard {
    Arc::new(|z: &DVector<f64>| {
        z[0] > 1.0 + THETA_MARGIN && z[0].is_finite() && z.iter().skip(1).all(|&q| q > 0.0 && q.is_finite())
    })
}

pub struct JhtpaModel<'a> {
    problem: Problem<'a>,
}

impl<'a> JhtpaModel<'a> {
    pub fn new(problem: Problem<'a>) -> Self {
        Self { problem }
    }

    fn to_alloc(z: &DVector<f64>) -> Allocation {
        let q: Vec<f64> = z.iter().skip(1).copied().collect();
        Allocation::from_inverse_powers(z[0], &q)
    }

    /// True constraints of the transformed problem as `value < 0` checks.
    fn constraint_values(&self, z: &DVector<f64>) -> Vec<f64> {
        let ch = self.problem.ch;
        let a = self.problem.config.harvest_scale();
        let alloc = Self::to_alloc(z);
        let mut out = Vec::with_capacity(2 * ch.num_pairs());
        for n in 0..ch.num_pairs() {
            out.push(1.0 - (z[0] - 1.0) * a * ch.g[n] * z[1 + n]);
            let r = ee::rate(&alloc, ch, n);
            out.push((self.problem.r_bar - r) / r.max(f64::MIN_POSITIVE));
        }
        out
    }
}

impl ScaModel for JhtpaModel<'_> {
    fn dim(&self) -> usize {
        self.problem.num_pairs() + 1
    }

    fn domain(&self) -> DomainGuard {
        jhtpa_domain()
    }

    fn anchor(&self) -> DVector<f64> {
        let config = self.problem.config;
        let theta = config.theta_fix;
        let p = ee::full_harvest_powers(theta, self.problem.ch, config);
        DVector::from_iterator(p.len() + 1, std::iter::once(theta).chain(p.iter().map(|p| 1.0 / p)))
    }

    fn true_margin(&self, z: &DVector<f64>) -> f64 {
        if !(jhtpa_domain())(z) {
            return f64::NEG_INFINITY;
        }
        -self
            .constraint_values(z)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn energy_efficiency(&self, z: &DVector<f64>) -> f64 {
        ee::energy_efficiency(&Self::to_alloc(z), self.problem.ch, self.problem.config)
    }

    fn subproblem(&self, state: &ScaState) -> ConvexProgram {
        build_jhtpa_subproblem(state, &self.problem)
    }

    /// `theta` log-uniform in (1.01, 100); each `q_n` a log-uniform multiple
    /// in [1, 1e6] of its causality bound `1/((theta - 1) eta P0 g_n)`.
    fn random_start(&self, rng: &mut ChaCha8Rng, tries: usize) -> Result<DVector<f64>, EngineError> {
        let n = self.problem.num_pairs();
        let a = self.problem.config.harvest_scale();
        let g = self.problem.ch.g.clone();
        let mut lower = vec![1.01];
        let mut upper = vec![100.0];
        lower.extend(std::iter::repeat_n(1.0, n));
        upper.extend(std::iter::repeat_n(1e6, n));
        let bounds = SearchBox::new(lower, upper, vec![true; n + 1]);
        let to_domain = move |v: &[f64]| {
            let theta = v[0];
            DVector::from_iterator(
                n + 1,
                std::iter::once(theta).chain((0..n).map(|k| v[1 + k] / ((theta - 1.0) * a * g[k]))),
            )
        };
        let feasible = |z: &DVector<f64>| -self.true_margin(z);
        find_feasible(&[&feasible], &bounds, to_domain, rng, tries)
    }

    fn allocation(&self, z: &DVector<f64>) -> Allocation {
        Self::to_alloc(z)
    }
}

pub fn jhtpa(
    ch: &ChannelRealization,
    config: &ScenarioConfig,
    settings: &AlgorithmSettings,
) -> Result<SolveReport, AlgorithmError> {
    jhtpa_with(&Problem::new(ch, config), settings)
}

/// Runs the SCA from the standard start and again from the OHT solution,
/// and keeps the better run. With weak links the EE keeps growing with the
/// harvesting time while each SCA step in `theta` is short, so the second
/// start carries the iterate onto the high-`theta` plateau directly.
pub fn jhtpa_with(problem: &Problem<'_>, settings: &AlgorithmSettings) -> Result<SolveReport, AlgorithmError> {
    let started = Instant::now();
    let model = JhtpaModel::new(*problem);
    let standard = run_sca(Algorithm::Jhtpa, &model, problem, settings);
    let warm = match &standard {
        Err(AlgorithmError::InvalidInput(_)) => None,
        _ => time_only_start(&model, problem, settings)
            .map(|start| run_sca_from(Algorithm::Jhtpa, &model, problem, settings, start, started)),
    };
    let best = match (standard, warm) {
        (Ok(a), Some(Ok(b))) => {
            let calls = a.subsolver_calls + b.subsolver_calls;
            let mut best = if b.ee_nats_per_joule > a.ee_nats_per_joule { b } else { a };
            best.subsolver_calls = calls;
            Ok(best)
        }
        (Err(_), Some(Ok(b))) => Ok(b),
        (standard, _) => standard,
    };
    best.map(|mut r| {
        r.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
        r
    })
}

/// Relative back-off of the powers below the causality bound.
const BACKOFF: f64 = 1e-12;

fn time_only_start(model: &JhtpaModel<'_>, problem: &Problem<'_>, settings: &AlgorithmSettings) -> Option<Start> {
    let oht = oht_with(problem, settings).ok()?;
    let theta = oht.allocation.theta;
    let z = DVector::from_iterator(
        problem.num_pairs() + 1,
        std::iter::once(theta).chain(oht.allocation.p.iter().map(|p| 1.0 / (p * (1.0 - BACKOFF)))),
    );
    (model.true_margin(&z) > 0.0).then_some(Start {
        z,
        kind: StartKind::TimeOnly,
        solver_calls: 0,
    })
}
