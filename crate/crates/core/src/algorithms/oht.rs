//! Harvesting-time-only allocation.
//!
//! Every transmitter spends exactly what it harvested, `p_n = (theta - 1)
//! eta P0 g_n`, which leaves `theta` as the only variable. The weakest rate
//! is maximized by SCA: each rate is minorized by a concave function of
//! `theta` and the max-min of the minorants is found by bisection on its
//! slope.
//! Each step is then extended geometrically for as long as the true weakest
//! rate keeps increasing.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{finish_report, Algorithm, AlgorithmError, AlgorithmSettings, Problem, ScaState, SolveReport, StartKind};
use crate::ee::{self, log_bound_coeffs, Allocation, BoundCoeffs, THETA_MARGIN};
use crate::engine::SmoothFunction;
use crate::scenario::{ChannelRealization, ScenarioConfig};

/// Width in `ln(theta - 1)` at which the golden-section search stops.
const SEARCH_WIDTH: f64 = 1e-12;
/// The OHT loop is cheap, so it stops on a relative step in `theta` much
/// tighter than the shared objective rule.
const OHT_TOLERANCE: f64 = 1e-10;
/// Relative rate differences below this are treated as ties.
const ROUNDOFF: f64 = 1e-14;

/// Concave minorant of the full-harvest rate of one pair as a function of
/// `theta`, tight at the expansion point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OhtSurrogate {
    pub pair: usize,
    pub coeffs: BoundCoeffs,
    /// `h_nn g_n`.
    pub direct: f64,
    /// `sum_{i != n} h_ni g_i`.
    pub cross: f64,
    /// `sigma2 / (eta P0)`.
    pub noise: f64,
}

impl OhtSurrogate {
    pub fn value_at(&self, theta: f64) -> f64 {
        let (x, y) = self.xy(theta);
        self.coeffs.surrogate_psi(x, y, theta)
    }

    fn xy(&self, theta: f64) -> (f64, f64) {
        let s = theta - 1.0;
        (1.0 / (s * self.direct), s * self.cross + self.noise)
    }

    pub fn derivative(&self, theta: f64) -> f64 {
        let s = theta - 1.0;
        self.coeffs.cx / (s * s * self.direct) - self.coeffs.cy * self.cross - self.coeffs.ct
    }

    pub fn second_derivative(&self, theta: f64) -> f64 {
        let s = theta - 1.0;
        -2.0 * self.coeffs.cx / (s * s * s * self.direct)
    }
}

impl SmoothFunction for OhtSurrogate {
    fn value(&self, z: &DVector<f64>) -> f64 {
        self.value_at(z[0])
    }
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.derivative(z[0]))
    }
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.second_derivative(z[0]))
    }
}

/// Minorants of every full-harvest rate expanded at `theta_bar`.
pub fn oht_surrogates(theta_bar: f64, ch: &ChannelRealization, config: &ScenarioConfig) -> Vec<OhtSurrogate> {
    let noise = ch.sigma2_watt / config.harvest_scale();
    (0..ch.num_pairs())
        .map(|n| {
            let direct = ch.h[n][n] * ch.g[n];
            let cross = ch.cross_sum(n, &ch.g);
            let s = theta_bar - 1.0;
            let (x, y) = (1.0 / (s * direct), s * cross + noise);
            OhtSurrogate {
                pair: n,
                coeffs: log_bound_coeffs(x, y, theta_bar).expect("theta_bar exceeds one"),
                direct,
                cross,
                noise,
            }
        })
        .collect()
}

fn weakest_rate(theta: f64, ch: &ChannelRealization, config: &ScenarioConfig) -> f64 {
    (0..ch.num_pairs())
        .map(|n| ee::full_harvest_rate(theta, ch, config, n))
        .fold(f64::INFINITY, f64::min)
}

/// Derivative in `theta` of the weakest full-harvest rate.
fn weakest_slope(theta: f64, ch: &ChannelRealization, config: &ScenarioConfig) -> f64 {
    let noise = ch.sigma2_watt / config.harvest_scale();
    let s = theta - 1.0;
    let (n, rate) = (0..ch.num_pairs())
        .map(|n| (n, ee::full_harvest_rate(theta, ch, config, n)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one pair");
    let direct = ch.h[n][n] * ch.g[n];
    let cross = ch.cross_sum(n, &ch.g);
    let interference = s * cross + noise;
    let sinr_slope = direct * noise / (interference * interference);
    let sinr = s * direct / interference;
    (sinr_slope / (1.0 + sinr) - rate) / theta
}

#[cfg(test)]
fn weakest_surrogate(surrogates: &[OhtSurrogate], theta: f64) -> f64 {
    surrogates
        .iter()
        .map(|s| s.value_at(theta))
        .fold(f64::INFINITY, f64::min)
}

/// Maximizer over `u = ln(theta - 1)` in `[lo, hi]` of the smallest
/// minorant, by bisection on the slope of the active one. The minimum of
/// concave functions is concave, so that slope is a supergradient; values
/// are too flat near the peak to be compared reliably.
fn maximize_weakest(surrogates: &[OhtSurrogate], theta_of: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let slope = |u: f64| {
        let theta = theta_of(u);
        let active = surrogates
            .iter()
            .min_by(|a, b| a.value_at(theta).total_cmp(&b.value_at(theta)))
            .expect("at least one pair");
        active.derivative(theta)
    };
    if slope(hi) >= 0.0 {
        return hi;
    }
    if slope(lo) <= 0.0 {
        return lo;
    }
    while hi - lo > SEARCH_WIDTH {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// EE at the full-harvest allocation:
/// `sum_n r_n / ((1 - 1/theta) eta P0 (sum_n g_n + 1) + P_cir)`.
pub fn closed_form_ee(theta: f64, ch: &ChannelRealization, config: &ScenarioConfig) -> f64 {
    let rates: f64 = (0..ch.num_pairs())
        .map(|n| ee::full_harvest_rate(theta, ch, config, n))
        .sum();
    let g_sum: f64 = ch.g.iter().sum();
    let power = (1.0 - 1.0 / theta) * config.harvest_scale() * (g_sum + 1.0) + config.p_cir_watt;
    rates / power
}

pub fn oht(
    ch: &ChannelRealization,
    config: &ScenarioConfig,
    settings: &AlgorithmSettings,
) -> Result<SolveReport, AlgorithmError> {
    oht_with(&Problem::new(ch, config), settings)
}

pub fn oht_with(problem: &Problem<'_>, settings: &AlgorithmSettings) -> Result<SolveReport, AlgorithmError> {
    let started = Instant::now();
    problem.validate()?;
    let (ch, config) = (problem.ch, problem.config);
    if !(settings.oht_theta_max > config.theta_fix) {
        return Err(AlgorithmError::InvalidInput(format!(
            "oht_theta_max {} must exceed theta_fix {}",
            settings.oht_theta_max, config.theta_fix
        )));
    }
    let (lo, hi) = (THETA_MARGIN.ln(), (settings.oht_theta_max - 1.0).ln());
    let theta_of = |u: f64| (1.0 + u.exp()).min(settings.oht_theta_max);

    let mut theta = config.theta_fix;
    let mut state = ScaState::new(vec![theta], weakest_rate(theta, ch, config));
    let mut converged = false;
    while state.kappa < settings.max_iterations {
        let surrogates = oht_surrogates(theta, ch, config);
        let u = maximize_weakest(&surrogates, theta_of, lo, hi);
        let mut candidate = theta_of(u);
        let mut phi = weakest_rate(candidate, ch, config);
        if phi < state.phi * (1.0 - ROUNDOFF) {
            converged = true;
            break;
        }
        // Minorant steps in theta are short when the links are weak. Keep
        // doubling the step in ln(theta - 1) while the weakest rate still
        // rises, then bisect the bracket on the sign of its slope.
        let u0 = (theta - 1.0).ln();
        let dir = (u - u0).signum();
        let rising = |v: f64| dir * weakest_slope(theta_of(v), ch, config) > 0.0;
        if u != u0 && rising(u) {
            let mut good = u;
            let mut bad = None;
            let mut k = 2.0;
            loop {
                let reach = (u0 + k * (u - u0)).clamp(lo, hi);
                if !rising(reach) {
                    bad = Some(reach);
                    break;
                }
                good = reach;
                if reach == lo || reach == hi {
                    break;
                }
                k *= 2.0;
            }
            if let Some(mut bad) = bad {
                while (bad - good).abs() > SEARCH_WIDTH {
                    let mid = 0.5 * (good + bad);
                    if rising(mid) {
                        good = mid;
                    } else {
                        bad = mid;
                    }
                }
            }
            let longer = theta_of(good);
            let value = weakest_rate(longer, ch, config);
            if value >= phi * (1.0 - ROUNDOFF) {
                candidate = longer;
                phi = value;
            }
        }
        let done = (candidate - theta).abs() <= OHT_TOLERANCE * theta;
        theta = candidate;
        state.iterate = vec![theta];
        state.phi = phi;
        state.kappa += 1;
        state.trace.push(phi);
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(AlgorithmError::MaxScaIterations {
            iterations: state.kappa,
            trace: state.trace,
        });
    }

    let allocation = Allocation::from_theta(theta, ee::full_harvest_powers(theta, ch, config));
    let calls = state.kappa;
    let mut report = finish_report(
        Algorithm::Oht,
        allocation,
        problem,
        state,
        calls,
        StartKind::Fixed,
        started,
        Vec::new(),
    );
    report.ee_closed_form = Some(closed_form_ee(theta, ch, config));
    Ok(report)
}
