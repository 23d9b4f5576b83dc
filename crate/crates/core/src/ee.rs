//! System model: harvesting, rates, power consumption and energy efficiency,
//! plus the affine minorant of `ln(1 + 1/(xy)) / t` used by every SCA loop.
//!
//! Rates are in nats per channel use. A time slot has unit length; the
//! harvesting phase occupies `tau` and data transmission the remaining
//! `1 - tau = 1/theta`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{ChannelRealization, ScenarioConfig};

/// Smallest admissible `theta - 1`; keeps both phases of the slot nonempty.
pub const THETA_MARGIN: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum EeError {
    #[error("bound expansion point must be strictly positive, got ({x}, {y}, {t})")]
    NonPositiveExpansion { x: f64, y: f64, t: f64 },
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),
}

/// Harvesting time and transmit powers.
///
/// `theta = 1/(1 - tau)` is kept alongside `tau` so the transmit fraction
/// `1/theta` stays exact when `tau` is close to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub tau: f64,
    pub theta: f64,
    pub p: Vec<f64>,
}

impl Allocation {
    pub fn from_tau(tau: f64, p: Vec<f64>) -> Self {
        Self {
            tau,
            theta: 1.0 / (1.0 - tau),
            p,
        }
    }

    pub fn from_theta(theta: f64, p: Vec<f64>) -> Self {
        Self {
            tau: 1.0 - 1.0 / theta,
            theta,
            p,
        }
    }

    /// Allocation from `theta` and inverse powers `1/p`.
    pub fn from_inverse_powers(theta: f64, inv_p: &[f64]) -> Self {
        Self::from_theta(theta, inv_p.iter().map(|q| 1.0 / q).collect())
    }

    /// Fraction of the slot spent transmitting.
    pub fn transmit_fraction(&self) -> f64 {
        if self.theta.is_finite() {
            1.0 / self.theta
        } else {
            1.0 - self.tau
        }
    }

    pub fn validate(&self) -> Result<(), EeError> {
        if !(self.tau > 0.0 && self.tau < 1.0) || !(self.theta > 1.0) {
            return Err(EeError::InvalidAllocation(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        if self.p.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(EeError::InvalidAllocation("powers must be positive".into()));
        }
        Ok(())
    }
}

/// Energy harvested by a transmitter with UAV gain `g_n` over a unit slot.
pub fn harvested_energy(tau: f64, g_n: f64, config: &ScenarioConfig) -> f64 {
    tau * config.eta * config.p0_watt * g_n
}

/// Signal to interference plus noise ratio at receiver `n`.
pub fn sinr(p: &[f64], ch: &ChannelRealization, n: usize) -> f64 {
    p[n] * ch.h[n][n] / (ch.cross_sum(n, p) + ch.sigma2_watt)
}

/// Throughput of pair `n` in nats per slot.
pub fn rate(alloc: &Allocation, ch: &ChannelRealization, n: usize) -> f64 {
    alloc.transmit_fraction() * sinr(&alloc.p, ch, n).ln_1p()
}

/// Total consumed power in watts.
pub fn total_power(alloc: &Allocation, config: &ScenarioConfig) -> f64 {
    let transmit: f64 = alloc.p.iter().sum::<f64>() * alloc.transmit_fraction();
    transmit + alloc.tau * config.eta * config.p0_watt + config.p_cir_watt
}

pub fn sum_rate(alloc: &Allocation, ch: &ChannelRealization) -> f64 {
    (0..ch.num_pairs()).map(|n| rate(alloc, ch, n)).sum()
}

/// Energy efficiency in nats per joule.
pub fn energy_efficiency(
    alloc: &Allocation,
    ch: &ChannelRealization,
    config: &ScenarioConfig,
) -> f64 {
    sum_rate(alloc, ch) / total_power(alloc, config)
}

/// Converts nats per channel use per joule to bits per joule over the
/// configured bandwidth.
pub fn nats_to_bits_per_joule(ee_nats: f64, config: &ScenarioConfig) -> f64 {
    ee_nats * config.bandwidth_hz / std::f64::consts::LN_2
}

/// Per-constraint deficits of an allocation against the original problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `max(0, (1 - tau) p_n - tau eta P0 g_n)` in watts.
    pub causality_violation: Vec<f64>,
    /// `max(0, r_bar - r_n)` in nats.
    pub qos_violation: Vec<f64>,
    pub tau_in_range: bool,
    /// Largest causality deficit relative to the harvested power bound.
    pub max_causality_relative: f64,
    /// Largest QoS deficit relative to `r_bar`.
    pub max_qos_relative: f64,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.tau_in_range
            && self.causality_violation.iter().all(|&d| d == 0.0)
            && self.qos_violation.iter().all(|&d| d == 0.0)
    }

    /// Feasible up to a relative tolerance on every deficit.
    pub fn is_feasible_within(&self, rel_tol: f64) -> bool {
        self.tau_in_range
            && self.max_causality_relative <= rel_tol
            && self.max_qos_relative <= rel_tol
    }
}

pub fn check_feasible(
    alloc: &Allocation,
    ch: &ChannelRealization,
    config: &ScenarioConfig,
    r_bar: f64,
) -> FeasibilityReport {
    let n_pairs = ch.num_pairs();
    let frac = alloc.transmit_fraction();
    let mut causality_violation = Vec::with_capacity(n_pairs);
    let mut qos_violation = Vec::with_capacity(n_pairs);
    let mut max_causality_relative = 0.0f64;
    let mut max_qos_relative = 0.0f64;
    for n in 0..n_pairs {
        let harvest = harvested_energy(alloc.tau, ch.g[n], config);
        let spent = frac * alloc.p[n];
        let deficit = (spent - harvest).max(0.0);
        causality_violation.push(deficit);
        if deficit > 0.0 {
            max_causality_relative = max_causality_relative.max(deficit / harvest.max(f64::MIN_POSITIVE));
        }
        let short = (r_bar - rate(alloc, ch, n)).max(0.0);
        qos_violation.push(short);
        if short > 0.0 {
            max_qos_relative = max_qos_relative.max(short / r_bar);
        }
    }
    FeasibilityReport {
        causality_violation,
        qos_violation,
        tau_in_range: (0.0..=1.0).contains(&alloc.tau),
        max_causality_relative,
        max_qos_relative,
    }
}

/// `ln(1 + 1/(xy)) / t`, the convex function the bound below supports.
pub fn log_rate_term(x: f64, y: f64, t: f64) -> f64 {
    (1.0 / (x * y)).ln_1p() / t
}

/// Tangent-plane minorant of [`log_rate_term`] at `expansion = (x̄, ȳ, t̄)`:
/// `const_term - cx x - cy y - ct t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCoeffs {
    pub const_term: f64,
    pub cx: f64,
    pub cy: f64,
    pub ct: f64,
    pub expansion: (f64, f64, f64),
}

pub fn log_bound_coeffs(x_bar: f64, y_bar: f64, t_bar: f64) -> Result<BoundCoeffs, EeError> {
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if !(positive(x_bar) && positive(y_bar) && positive(t_bar)) {
        return Err(EeError::NonPositiveExpansion {
            x: x_bar,
            y: y_bar,
            t: t_bar,
        });
    }
    let xy = x_bar * y_bar;
    let log_term = (1.0 / xy).ln_1p();
    let inv = 1.0 / (t_bar * (xy + 1.0));
    Ok(BoundCoeffs {
        const_term: 2.0 * log_term / t_bar + 2.0 * inv,
        cx: inv / x_bar,
        cy: inv / y_bar,
        ct: log_term / (t_bar * t_bar),
        expansion: (x_bar, y_bar, t_bar),
    })
}

impl BoundCoeffs {
    /// Value of the minorant at `(x, y, t)`.
    pub fn surrogate_psi(&self, x: f64, y: f64, t: f64) -> f64 {
        self.const_term - self.cx * x - self.cy * y - self.ct * t
    }
}

/// Free function form of [`BoundCoeffs::surrogate_psi`].
pub fn surrogate_psi(coeffs: &BoundCoeffs, x: f64, y: f64, t: f64) -> f64 {
    coeffs.surrogate_psi(x, y, t)
}

/// Powers that exhaust the harvested energy: `(theta - 1) eta P0 g_n`.
pub fn full_harvest_powers(theta: f64, ch: &ChannelRealization, config: &ScenarioConfig) -> Vec<f64> {
    ch.g.iter()
        .map(|g| (theta - 1.0) * config.harvest_scale() * g)
        .collect()
}

/// Rate of pair `n` when every transmitter spends all it harvested:
/// `(1/theta) ln(1 + (theta-1) h_nn g_n / ((theta-1) sum_i h_ni g_i + sigma2/(eta P0)))`.
pub fn full_harvest_rate(
    theta: f64,
    ch: &ChannelRealization,
    config: &ScenarioConfig,
    n: usize,
) -> f64 {
    let scale = theta - 1.0;
    let signal = scale * ch.h[n][n] * ch.g[n];
    let noise = scale * ch.cross_sum(n, &ch.g) + ch.sigma2_watt / config.harvest_scale();
    (signal / noise).ln_1p() / theta
}

/// Minimum QoS rate: the weakest full-harvest rate at `theta_fix`, capped by
/// `rate_cap_bpshz` converted to nats.
pub fn qos_threshold(ch: &ChannelRealization, config: &ScenarioConfig) -> f64 {
    let weakest = (0..ch.num_pairs())
        .map(|n| full_harvest_rate(config.theta_fix, ch, config, n))
        .fold(f64::INFINITY, f64::min);
    let cap = config.rate_cap_bpshz * std::f64::consts::LN_2;
    weakest.min(cap).max(0.0)
}

/// Rate written in the `(theta, 1/p)` variables, `(1/theta) ln(1 + 1/(x y))`
/// with `x = q_n / h_nn` and `y = sum_{i != n} h_ni / q_i + sigma2`.
pub fn rate_inverse_form(theta: f64, inv_p: &[f64], ch: &ChannelRealization, n: usize) -> f64 {
    let x = inv_p[n] / ch.h[n][n];
    let recip: Vec<f64> = inv_p.iter().map(|q| 1.0 / q).collect();
    let y = ch.cross_sum(n, &recip) + ch.sigma2_watt;
    log_rate_term(x, y, theta)
}
