//! Quick invariant suites behind `uavee selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavee_core::algorithms::{self, build_jhtpa_subproblem, build_opa_subproblem, Algorithm, AlgorithmSettings, Problem, ScaState};
use uavee_core::ee::{self, log_bound_coeffs, log_rate_term, Allocation};
use uavee_core::engine::check_gradients;
use uavee_core::scenario::{Scenario, ScenarioConfig};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo..hi))
}

/// Largest excess of the log-rate minorant over the function on random
/// pairs of points in `(1e-3, 1e3)^3`.
pub fn bound_excess(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let mut draw = || log_uniform(&mut rng, -3.0, 3.0);
        let (xb, yb, tb) = (draw(), draw(), draw());
        let (x, y, t) = (draw(), draw(), draw());
        let c = log_bound_coeffs(xb, yb, tb).expect("positive expansion");
        worst = worst.max(c.surrogate_psi(x, y, t) - log_rate_term(x, y, t));
    }
    worst
}

/// Worst derivative error of the JHTPA and OPA subproblems at `points`
/// random interior points of one scenario.
pub fn subproblem_gradient_error(n_pairs: usize, seed: u64, points: usize) -> f64 {
    let s = Scenario::generate(&ScenarioConfig::new(n_pairs, seed)).expect("default config is valid");
    let (ch, config) = (&s.channels, &s.config);
    let problem = Problem::with_threshold(ch, config, 0.0);
    let a = config.harvest_scale();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let theta = 1.0 + log_uniform(&mut rng, -1.0, 2.0);
        let q: Vec<f64> = ch.g.iter().map(|g| log_uniform(&mut rng, 0.0, 3.0) / ((theta - 1.0) * a * g)).collect();
        let phi = ee::energy_efficiency(&Allocation::from_inverse_powers(theta, &q), ch, config);
        let state = ScaState::new(std::iter::once(theta).chain(q).collect(), phi);
        worst = worst.max(check_gradients(&build_jhtpa_subproblem(&state, &problem), &state.z()));

        let p: Vec<f64> = ee::full_harvest_powers(config.theta_fix, ch, config)
            .iter()
            .map(|c| c * rng.random_range(0.05..1.0))
            .collect();
        let phi = ee::energy_efficiency(&Allocation::from_theta(config.theta_fix, p.clone()), ch, config);
        let state = ScaState::new(p, phi);
        worst = worst.max(check_gradients(&build_opa_subproblem(&state, &problem, config.theta_fix), &state.z()));
    }
    worst
}

pub fn run_all() -> Vec<CheckResult> {
    let mut out = Vec::new();

    let excess = bound_excess(10_000, 1);
    out.push(CheckResult {
        name: "bound",
        passed: excess <= 1e-12,
        detail: format!("largest minorant excess {excess:.3e} over 1e4 pairs"),
    });

    let err = subproblem_gradient_error(3, 4, 5);
    out.push(CheckResult {
        name: "gradients",
        passed: err < 1e-5,
        detail: format!("worst relative derivative error {err:.3e}"),
    });

    let settings = AlgorithmSettings::default();
    let mut solves = 0;
    let mut problems = Vec::new();
    for n in 2..=4 {
        for seed in 0..5 {
            let s = Scenario::generate(&ScenarioConfig::new(n, seed)).expect("default config is valid");
            let problem = Problem::new(&s.channels, &s.config);
            for algorithm in Algorithm::ALL {
                match algorithms::run(algorithm, &problem, &settings) {
                    Ok(rep) => {
                        solves += 1;
                        if !rep.trace_is_nondecreasing(algorithms::ASCENT_SLACK) {
                            problems.push(format!("{algorithm} N={n} seed {seed}: trace decreases"));
                        }
                        if !rep.feasibility.is_feasible_within(1e-8) {
                            problems.push(format!("{algorithm} N={n} seed {seed}: infeasible"));
                        }
                        if let Some(cf) = rep.ee_closed_form {
                            if (cf - rep.ee_nats_per_joule).abs() > 1e-10 * rep.ee_nats_per_joule {
                                problems.push(format!("OHT N={n} seed {seed}: closed form differs"));
                            }
                        }
                    }
                    Err(e) if e.is_infeasible() => {}
                    Err(e) => problems.push(format!("{algorithm} N={n} seed {seed}: {e}")),
                }
            }
        }
    }
    out.push(CheckResult {
        name: "sca",
        passed: problems.is_empty(),
        detail: if problems.is_empty() {
            format!("{solves} solves ascend and end feasible")
        } else {
            problems.join("; ")
        },
    });

    let s = Scenario::generate(&ScenarioConfig::new(3, 11)).expect("default config is valid");
    let problem = Problem::new(&s.channels, &s.config);
    let first = algorithms::run(Algorithm::Jhtpa, &problem, &settings).map(|r| r.allocation);
    let second = algorithms::run(Algorithm::Jhtpa, &problem, &settings).map(|r| r.allocation);
    let same = matches!((&first, &second), (Ok(a), Ok(b)) if a == b);
    out.push(CheckResult {
        name: "determinism",
        passed: same,
        detail: "repeated solve gives an identical allocation".into(),
    });
    out
}
