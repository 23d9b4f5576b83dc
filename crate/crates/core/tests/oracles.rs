//! Brute-force oracles for small instances and cross-algorithm checks.

use uavee_core::algorithms::{jhtpa, jhtpa_with, oht, oht_with, opa, opa_with, AlgorithmSettings, Problem};
use uavee_core::ee;
use uavee_core::scenario::{ChannelRealization, Scenario, ScenarioConfig};

fn fixture(n: usize, seed: u64) -> Scenario {
    Scenario::generate(&ScenarioConfig::new(n, seed)).unwrap()
}

/// Single link whose harvest budget reaches watts, so the optimum is interior.
fn strong_link() -> (ChannelRealization, ScenarioConfig) {
    let mut config = ScenarioConfig::new(1, 0);
    config.p0_watt = 100.0;
    let ch = ChannelRealization {
        g: vec![1.0],
        h: vec![vec![1e-7]],
        sigma2_watt: 1e-10,
    };
    (ch, config)
}

/// EE of a single pair written out from scratch.
fn single_pair_ee(tau: f64, p: f64, ch: &ChannelRealization, config: &ScenarioConfig) -> f64 {
    let rate = (1.0 - tau) * (p * ch.h[0][0] / ch.sigma2_watt).ln_1p();
    rate / (tau * config.eta * config.p0_watt + (1.0 - tau) * p + config.p_cir_watt)
}

fn single_pair_rate(tau: f64, p: f64, ch: &ChannelRealization) -> f64 {
    (1.0 - tau) * (p * ch.h[0][0] / ch.sigma2_watt).ln_1p()
}

/// 500 x 500 grid over harvesting time and power. Powers are spaced up to the
/// causality bound of each harvesting time.
fn grid_optimum(ch: &ChannelRealization, config: &ScenarioConfig, r_bar: f64) -> f64 {
    let steps = 500;
    let mut best = 0.0f64;
    for i in 1..=steps {
        let tau = i as f64 / (steps + 1) as f64;
        let cap = tau * config.eta * config.p0_watt * ch.g[0] / (1.0 - tau);
        for j in 1..=steps {
            let p = cap * j as f64 / steps as f64;
            if single_pair_rate(tau, p, ch) >= r_bar {
                best = best.max(single_pair_ee(tau, p, ch, config));
            }
        }
    }
    best
}

#[test]
fn single_pair_joint_allocation_matches_grid() {
    let settings = AlgorithmSettings::default();
    for seed in 0..20 {
        let s = fixture(1, seed);
        let problem = Problem::new(&s.channels, &s.config);
        let rep = jhtpa_with(&problem, &settings).unwrap();
        let grid = grid_optimum(&s.channels, &s.config, problem.r_bar);
        let gap = (rep.ee_nats_per_joule - grid) / grid;
        assert!(gap.abs() <= 0.02, "seed {seed}: jhtpa {} grid {grid}", rep.ee_nats_per_joule);
    }
}

#[test]
fn strong_link_joint_allocation_matches_grid() {
    let (ch, config) = strong_link();
    let problem = Problem::new(&ch, &config);
    let rep = jhtpa_with(&problem, &AlgorithmSettings::default()).unwrap();
    let grid = grid_optimum(&ch, &config, problem.r_bar);
    let gap = (rep.ee_nats_per_joule - grid) / grid;
    assert!(gap.abs() <= 0.02, "jhtpa {} grid {grid}", rep.ee_nats_per_joule);
    assert!(rep.allocation.theta < 100.0);
}

#[test]
fn strong_link_power_only_matches_grid() {
    let (ch, config) = strong_link();
    let problem = Problem::with_threshold(&ch, &config, 0.0);
    let rep = opa_with(&problem, 2.0, &AlgorithmSettings::default()).unwrap();
    let cap = config.eta * config.p0_watt * ch.g[0];
    let grid = (1..=100_000)
        .map(|j| single_pair_ee(0.5, cap * j as f64 / 1e5, &ch, &config))
        .fold(0.0, f64::max);
    let gap = (rep.ee_nats_per_joule - grid) / grid;
    assert!(gap.abs() <= 0.01, "opa {} grid {grid}", rep.ee_nats_per_joule);
    assert!(rep.allocation.p[0] < 0.9 * cap);
}

#[test]
fn weak_link_power_only_sits_at_the_cap() {
    for seed in 0..5 {
        let s = fixture(1, seed);
        let problem = Problem::with_threshold(&s.channels, &s.config, 0.0);
        let rep = opa_with(&problem, 2.0, &AlgorithmSettings::default()).unwrap();
        let cap = s.config.eta * s.config.p0_watt * s.channels.g[0];
        let grid = (1..=100_000)
            .map(|j| single_pair_ee(0.5, cap * j as f64 / 1e5, &s.channels, &s.config))
            .fold(0.0, f64::max);
        assert!(((rep.ee_nats_per_joule - grid) / grid).abs() <= 0.01);
    }
}

/// Argmax of the single-pair full-harvest rate on a uniform grid of `(1, theta_max]`.
fn theta_grid_optimum(ch: &ChannelRealization, config: &ScenarioConfig, theta_max: f64) -> f64 {
    let steps = 1_000_000;
    let c = config.eta * config.p0_watt * ch.g[0] * ch.h[0][0] / ch.sigma2_watt;
    let mut best = (f64::NEG_INFINITY, 1.0);
    for k in 1..=steps {
        let theta = 1.0 + (theta_max - 1.0) * k as f64 / steps as f64;
        let r = ((theta - 1.0) * c).ln_1p() / theta;
        if r > best.0 {
            best = (r, theta);
        }
    }
    best.1
}

#[test]
fn time_only_theta_matches_grid() {
    let settings = AlgorithmSettings::default();
    for seed in 0..20 {
        let s = fixture(1, seed);
        let rep = oht(&s.channels, &s.config, &settings).unwrap();
        let grid = theta_grid_optimum(&s.channels, &s.config, settings.oht_theta_max);
        assert!((rep.allocation.theta - grid).abs() <= 1e-3, "seed {seed}: {} vs {grid}", rep.allocation.theta);
    }
}

#[test]
fn strong_link_time_only_theta_is_interior() {
    let (ch, config) = strong_link();
    let settings = AlgorithmSettings::default();
    let rep = oht_with(&Problem::new(&ch, &config), &settings).unwrap();
    let grid = theta_grid_optimum(&ch, &config, settings.oht_theta_max);
    assert!(grid < 100.0);
    assert!((rep.allocation.theta - grid).abs() <= 1e-3, "{} vs {grid}", rep.allocation.theta);
}

#[test]
fn joint_allocation_dominates_on_two_pair_fixture() {
    let s = fixture(2, 7);
    let settings = AlgorithmSettings::default();
    let j = jhtpa(&s.channels, &s.config, &settings).unwrap().ee_nats_per_joule;
    let o = opa(&s.channels, &s.config, 2.0, &settings).unwrap().ee_nats_per_joule;
    let h = oht(&s.channels, &s.config, &settings).unwrap().ee_nats_per_joule;
    assert!(j >= o * (1.0 - 1e-9), "jhtpa {j} opa {o}");
    assert!(j >= h * (1.0 - 1e-9), "jhtpa {j} oht {h}");
}

#[test]
fn power_only_at_joint_theta_is_no_better() {
    let settings = AlgorithmSettings::default();
    for (n, seed) in [(2, 7), (3, 11), (5, 3)] {
        let s = fixture(n, seed);
        let problem = Problem::new(&s.channels, &s.config);
        let joint = jhtpa_with(&problem, &settings).unwrap();
        let restricted = opa_with(&problem, joint.allocation.theta, &settings);
        if let Ok(rep) = restricted {
            assert!(
                rep.ee_nats_per_joule <= joint.ee_nats_per_joule * (1.0 + 1e-2),
                "N={n}: opa {} jhtpa {}",
                rep.ee_nats_per_joule,
                joint.ee_nats_per_joule
            );
        }
    }
}

#[test]
fn reports_satisfy_the_original_constraints() {
    let settings = AlgorithmSettings::default();
    for (n, seed) in [(2, 1), (4, 2), (6, 3)] {
        let s = fixture(n, seed);
        let problem = Problem::new(&s.channels, &s.config);
        for rep in [
            jhtpa_with(&problem, &settings).unwrap(),
            opa_with(&problem, 2.0, &settings).unwrap(),
            oht_with(&problem, &settings).unwrap(),
        ] {
            let check = ee::check_feasible(&rep.allocation, &s.channels, &s.config, problem.r_bar);
            assert!(check.is_feasible_within(1e-8), "{}: {check:?}", rep.algorithm);
            assert!(rep.trace_is_nondecreasing(1e-9));
            let direct = ee::energy_efficiency(&rep.allocation, &s.channels, &s.config);
            assert_eq!(direct, rep.ee_nats_per_joule);
        }
    }
}

#[test]
fn time_only_closed_form_and_endpoint() {
    let s = fixture(4, 9);
    let rep = oht(&s.channels, &s.config, &AlgorithmSettings::default()).unwrap();
    let cf = rep.ee_closed_form.unwrap();
    assert!((cf - rep.ee_nats_per_joule).abs() <= 1e-10 * rep.ee_nats_per_joule);

    let theta = 1.0 + 1e-9;
    let alloc = ee::Allocation::from_theta(theta, ee::full_harvest_powers(theta, &s.channels, &s.config));
    assert!((ee::total_power(&alloc, &s.config) - s.config.p_cir_watt).abs() < 1e-6);
    assert!(ee::energy_efficiency(&alloc, &s.channels, &s.config) < 1e-12);
}

#[test]
fn solves_are_deterministic() {
    let s = fixture(4, 5);
    let settings = AlgorithmSettings::default();
    let a = jhtpa(&s.channels, &s.config, &settings).unwrap();
    let b = jhtpa(&s.channels, &s.config, &settings).unwrap();
    assert_eq!(a.allocation, b.allocation);
    assert_eq!(a.trace, b.trace);
    let a = opa(&s.channels, &s.config, 2.0, &settings).unwrap();
    let b = opa(&s.channels, &s.config, 2.0, &settings).unwrap();
    assert_eq!(a.allocation, b.allocation);
}
