//! Network geometry and channel realizations.
//!
//! The UAV hovers above the origin at height `uav_height_m`. Transmitters are
//! dropped uniformly over the coverage disk and each receiver uniformly over a
//! small disk around its transmitter. D2D links use a distance power law with
//! Rayleigh power fading; the UAV to transmitter links use an elevation
//! dependent LOS/NLOS mixture.
//!
//! Index convention: `h[n][i]` is the gain from the transmitter of pair `i`
//! to the receiver of pair `n`, so `h[n][n]` is the desired link and row `n`
//! collects everything heard at receiver `n`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on rejection-sampling attempts before a configuration is
/// declared degenerate.
pub const MAX_REJECTIONS: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("rejection sampling exhausted after {0} attempts")]
    DegenerateGeometry(usize),
    #[error("placement has {tx} transmitters but {rx} receivers")]
    ShapeMismatch { tx: usize, rx: usize },
    #[error("malformed scenario JSON: {0}")]
    Json(String),
}

/// Physical and network parameters of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_pairs: usize,
    #[serde(default = "defaults::coverage_radius_m")]
    pub coverage_radius_m: f64,
    #[serde(default = "defaults::uav_height_m")]
    pub uav_height_m: f64,
    #[serde(default = "defaults::max_pair_dist_m")]
    pub max_pair_dist_m: f64,
    #[serde(default = "defaults::bandwidth_hz")]
    pub bandwidth_hz: f64,
    #[serde(default = "defaults::p0_watt")]
    pub p0_watt: f64,
    #[serde(default = "defaults::eta")]
    pub eta: f64,
    #[serde(default = "defaults::p_cir_watt")]
    pub p_cir_watt: f64,
    #[serde(default = "defaults::path_loss_exp")]
    pub alpha_h: f64,
    #[serde(default = "defaults::path_loss_exp")]
    pub alpha_g: f64,
    #[serde(default = "defaults::beta0_db")]
    pub beta0_db: f64,
    #[serde(default = "defaults::noise_density_dbm_hz")]
    pub noise_density_dbm_hz: f64,
    #[serde(default = "defaults::atg_a")]
    pub atg_a: f64,
    #[serde(default = "defaults::atg_b")]
    pub atg_b: f64,
    #[serde(default = "defaults::gamma_db")]
    pub gamma_db: f64,
    #[serde(default = "defaults::rate_cap_bpshz")]
    pub rate_cap_bpshz: f64,
    #[serde(default = "defaults::theta_fix")]
    pub theta_fix: f64,
    pub seed: u64,
}

mod defaults {
    pub fn coverage_radius_m() -> f64 {
        800.0
    }
    pub fn uav_height_m() -> f64 {
        50.0
    }
    pub fn max_pair_dist_m() -> f64 {
        50.0
    }
    pub fn bandwidth_hz() -> f64 {
        1e6
    }
    pub fn p0_watt() -> f64 {
        5.0
    }
    pub fn eta() -> f64 {
        0.5
    }
    pub fn p_cir_watt() -> f64 {
        4.0
    }
    pub fn path_loss_exp() -> f64 {
        3.0
    }
    pub fn beta0_db() -> f64 {
        -30.0
    }
    pub fn noise_density_dbm_hz() -> f64 {
        -130.0
    }
    pub fn atg_a() -> f64 {
        11.95
    }
    pub fn atg_b() -> f64 {
        0.136
    }
    pub fn gamma_db() -> f64 {
        20.0
    }
    pub fn rate_cap_bpshz() -> f64 {
        0.2
    }
    pub fn theta_fix() -> f64 {
        2.0
    }
}

impl ScenarioConfig {
    /// Default parameters for `num_pairs` pairs.
    pub fn new(num_pairs: usize, seed: u64) -> Self {
        Self {
            num_pairs,
            coverage_radius_m: defaults::coverage_radius_m(),
            uav_height_m: defaults::uav_height_m(),
            max_pair_dist_m: defaults::max_pair_dist_m(),
            bandwidth_hz: defaults::bandwidth_hz(),
            p0_watt: defaults::p0_watt(),
            eta: defaults::eta(),
            p_cir_watt: defaults::p_cir_watt(),
            alpha_h: defaults::path_loss_exp(),
            alpha_g: defaults::path_loss_exp(),
            beta0_db: defaults::beta0_db(),
            noise_density_dbm_hz: defaults::noise_density_dbm_hz(),
            atg_a: defaults::atg_a(),
            atg_b: defaults::atg_b(),
            gamma_db: defaults::gamma_db(),
            rate_cap_bpshz: defaults::rate_cap_bpshz(),
            theta_fix: defaults::theta_fix(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |what: &str| Err(ScenarioError::InvalidConfig(what.to_string()));
        if self.num_pairs == 0 {
            return bad("num_pairs must be at least 1");
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta must lie in (0, 1)");
        }
        if !(self.theta_fix > 1.0) || !self.theta_fix.is_finite() {
            return bad("theta_fix must exceed 1");
        }
        let positive = [
            ("coverage_radius_m", self.coverage_radius_m),
            ("uav_height_m", self.uav_height_m),
            ("max_pair_dist_m", self.max_pair_dist_m),
            ("bandwidth_hz", self.bandwidth_hz),
            ("p0_watt", self.p0_watt),
            ("p_cir_watt", self.p_cir_watt),
            ("alpha_h", self.alpha_h),
            ("alpha_g", self.alpha_g),
            ("atg_b", self.atg_b),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScenarioError::InvalidConfig(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        let finite = [
            ("beta0_db", self.beta0_db),
            ("noise_density_dbm_hz", self.noise_density_dbm_hz),
            ("atg_a", self.atg_a),
            ("gamma_db", self.gamma_db),
            ("rate_cap_bpshz", self.rate_cap_bpshz),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(ScenarioError::InvalidConfig(format!("{name} must be finite")));
            }
        }
        if self.rate_cap_bpshz < 0.0 {
            return bad("rate_cap_bpshz must be nonnegative");
        }
        Ok(())
    }

    /// Parses and validates a scenario JSON document.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| ScenarioError::Json(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Linear NLOS attenuation, `10^(-gamma_db/10)`.
    pub fn gamma_linear(&self) -> f64 {
        10f64.powf(-self.gamma_db / 10.0)
    }

    pub fn beta0_linear(&self) -> f64 {
        10f64.powf(self.beta0_db / 10.0)
    }

    /// Maximum harvested power per unit of `(theta - 1)`, i.e. `eta * P0`.
    pub fn harvest_scale(&self) -> f64 {
        self.eta * self.p0_watt
    }

    /// The generator this config's seed drives.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Node positions in meters, UAV ground projection at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub tx_pos: Vec<[f64; 2]>,
    pub rx_pos: Vec<[f64; 2]>,
}

impl Placement {
    pub fn num_pairs(&self) -> usize {
        self.tx_pos.len()
    }

    /// Distance from the transmitter of pair `i` to the receiver of pair `n`.
    pub fn link_distance(&self, n: usize, i: usize) -> f64 {
        distance(self.tx_pos[i], self.rx_pos[n])
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Realized gains for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub g: Vec<f64>,
    pub h: Vec<Vec<f64>>,
    pub sigma2_watt: f64,
}

impl ChannelRealization {
    pub fn num_pairs(&self) -> usize {
        self.g.len()
    }

    /// Checks shape and strict positivity of every gain.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let n = self.g.len();
        if n == 0 {
            return Err(ScenarioError::InvalidConfig("empty realization".into()));
        }
        if self.h.len() != n || self.h.iter().any(|row| row.len() != n) {
            return Err(ScenarioError::InvalidConfig(format!(
                "h must be {n}x{n} to match g"
            )));
        }
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !self.g.iter().copied().all(ok)
            || !self.h.iter().flatten().copied().all(ok)
            || !ok(self.sigma2_watt)
        {
            return Err(ScenarioError::InvalidConfig(
                "all gains and the noise power must be finite and positive".into(),
            ));
        }
        Ok(())
    }

    /// Cross-link sum `sum_{i != n} h[n][i] * w[i]` at receiver `n`.
    pub fn cross_sum(&self, n: usize, w: &[f64]) -> f64 {
        self.h[n]
            .iter()
            .zip(w)
            .enumerate()
            .filter(|(i, _)| *i != n)
            .map(|(_, (h, w))| h * w)
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("realization serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let ch: Self =
            serde_json::from_str(text).map_err(|e| ScenarioError::Json(e.to_string()))?;
        ch.validate()?;
        Ok(ch)
    }
}

/// Uniform point in a disk of the given radius centred at `center`.
fn uniform_in_disk<R: Rng + ?Sized>(rng: &mut R, center: [f64; 2], radius: f64) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let angle = std::f64::consts::TAU * rng.random::<f64>();
    [center[0] + r * angle.cos(), center[1] + r * angle.sin()]
}

pub fn generate_placement<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<Placement, ScenarioError> {
    config.validate()?;
    let mut tx_pos = Vec::with_capacity(config.num_pairs);
    let mut rx_pos = Vec::with_capacity(config.num_pairs);
    for _ in 0..config.num_pairs {
        let tx = uniform_in_disk(rng, [0.0, 0.0], config.coverage_radius_m);
        let mut attempts = 0;
        let rx = loop {
            let rx = uniform_in_disk(rng, tx, config.max_pair_dist_m);
            let d = distance(tx, rx);
            if d > 0.0 && d <= config.max_pair_dist_m {
                break rx;
            }
            attempts += 1;
            if attempts >= MAX_REJECTIONS {
                return Err(ScenarioError::DegenerateGeometry(attempts));
            }
        };
        tx_pos.push(tx);
        rx_pos.push(rx);
    }
    Ok(Placement { tx_pos, rx_pos })
}

/// Noise power in watts over the configured bandwidth.
pub fn noise_power(config: &ScenarioConfig) -> f64 {
    10f64.powf((config.noise_density_dbm_hz - 30.0) / 10.0) * config.bandwidth_hz
}

/// Elevation angle in degrees seen from a ground point towards the UAV.
pub fn elevation_angle_deg(pos: [f64; 2], height: f64) -> f64 {
    let d = (pos[0] * pos[0] + pos[1] * pos[1] + height * height).sqrt();
    (height / d).asin().to_degrees()
}

/// Sigmoid LOS probability for elevation `phi_deg` and environment constants `a`, `b`.
pub fn los_probability(phi_deg: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * (-b * (phi_deg - a)).exp())
}

/// UAV to ground power gain at `pos`, mixing LOS and attenuated NLOS path loss.
pub fn atg_gain(pos: [f64; 2], config: &ScenarioConfig) -> f64 {
    let h = config.uav_height_m;
    let d = (pos[0] * pos[0] + pos[1] * pos[1] + h * h).sqrt();
    let p_los = los_probability(elevation_angle_deg(pos, h), config.atg_a, config.atg_b);
    let path = d.powf(-config.alpha_g);
    p_los * path + (1.0 - p_los) * config.gamma_linear() * path
}

/// D2D power gain for a link of length `distance_m` and fading power `rho_sq`.
pub fn d2d_gain(distance_m: f64, rho_sq: f64, config: &ScenarioConfig) -> f64 {
    config.beta0_linear() * rho_sq * distance_m.powf(-config.alpha_h)
}

/// Draws an `n x n` matrix of unit-mean exponential fading powers, none zero.
pub fn draw_fading<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..n)
                .map(|_| loop {
                    let v: f64 = rng.sample(Exp1);
                    if v > 0.0 {
                        break v;
                    }
                })
                .collect()
        })
        .collect()
}

/// Builds gains from a placement and explicit fading draws.
pub fn channels_from_fading(
    placement: &Placement,
    fading: &[Vec<f64>],
    config: &ScenarioConfig,
) -> Result<ChannelRealization, ScenarioError> {
    let n = placement.num_pairs();
    if placement.rx_pos.len() != n {
        return Err(ScenarioError::ShapeMismatch {
            tx: n,
            rx: placement.rx_pos.len(),
        });
    }
    let g = placement
        .tx_pos
        .iter()
        .map(|&pos| atg_gain(pos, config))
        .collect();
    let mut h = vec![vec![0.0; n]; n];
    for (row_idx, row) in h.iter_mut().enumerate() {
        for (col_idx, gain) in row.iter_mut().enumerate() {
            let d = placement.link_distance(row_idx, col_idx);
            if d <= 0.0 {
                return Err(ScenarioError::DegenerateGeometry(1));
            }
            *gain = d2d_gain(d, fading[row_idx][col_idx], config);
        }
    }
    let ch = ChannelRealization {
        g,
        h,
        sigma2_watt: noise_power(config),
    };
    ch.validate()?;
    Ok(ch)
}

pub fn realize_channels<R: Rng + ?Sized>(
    placement: &Placement,
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<ChannelRealization, ScenarioError> {
    let fading = draw_fading(placement.num_pairs(), rng);
    channels_from_fading(placement, &fading, config)
}

/// A placement together with its channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub placement: Placement,
    pub channels: ChannelRealization,
}

impl Scenario {
    /// Placement then fading from the config's seed. Coincident cross-link
    /// nodes (probability zero, but possible in floating point) trigger a
    /// fresh placement from the same stream.
    pub fn generate(config: &ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let mut rng = config.rng();
        for _ in 0..MAX_REJECTIONS {
            let placement = generate_placement(config, &mut rng)?;
            match realize_channels(&placement, config, &mut rng) {
                Ok(channels) => {
                    return Ok(Self {
                        config: config.clone(),
                        placement,
                        channels,
                    })
                }
                Err(ScenarioError::DegenerateGeometry(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(ScenarioError::DegenerateGeometry(MAX_REJECTIONS))
    }
}
