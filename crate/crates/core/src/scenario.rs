//! Network data model and synthetic deployment generator.
//!
//! A [`NetworkScenario`] is the immutable world the load model and the
//! optimizer act on: base stations, test points (abstract demand locations),
//! a linear power-gain matrix, and the radio parameters of the link model.
//! Scenarios are generated on a hexagonal lattice with uniformly placed test
//! points, or parsed from a versioned JSON document. Equal `(m, n, seed,
//! params)` always produce byte-identical scenario files.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::rng;
use rand::Rng;

/// Version tag written into every scenario document.
pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// Distance floor for the path-loss model, in meters. Gains are computed as
/// if no receiver is closer than this, which keeps near-field gains bounded.
pub const MIN_DISTANCE_M: f64 = 35.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("station and test point counts must be positive (got m={m}, n={n})")]
    EmptyScenario { m: usize, n: usize },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unsupported scenario schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("failed to parse scenario document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A base station (cell) with its transmit and operating characteristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: usize,
    /// Position in meters.
    pub position: [f64; 2],
    /// Transmit power spectral density per resource unit, in watts.
    pub power_per_ru: f64,
    /// Operating (load-independent) energy cost, in watts.
    pub static_energy: f64,
}

/// An abstract demand location representing users in a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPoint {
    pub id: usize,
    /// Position in meters.
    pub position: [f64; 2],
    /// Required data rate, in bits per second.
    pub demand: f64,
}

/// Radio and deployment parameters used by the generator and the link model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// Lattice spacing between neighboring stations, in meters.
    pub inter_site_distance: f64,
    /// Number of schedulable resource units per interval (K).
    pub resource_units: u32,
    /// Effective bandwidth per resource unit, in hertz (B).
    pub bandwidth_per_ru: f64,
    /// Transmit power spectral density per resource unit, in watts (P_i).
    pub power_per_ru: f64,
    /// Operating cost per station, in watts (c_i).
    pub static_energy: f64,
    /// SINR scaling factor (eta), >= 1.
    pub sinr_scaling: f64,
    /// Noise power per resource unit, in watts (sigma^2).
    pub noise_power: f64,
    /// Required data rate per test point, in bits per second (d_j).
    pub demand_bps: f64,
    /// Optional spectral-efficiency cap, in bits per second per resource
    /// unit (omega-bar). `None` leaves the link model uncapped.
    pub spectral_efficiency_cap: Option<f64>,
}

impl Default for RadioParams {
    /// Macro-cell style defaults: 500 resource units of 200 kHz each
    /// (100 MHz per station), 40 W total transmit power, thermal noise for
    /// 200 kHz plus a 9 dB noise figure.
    fn default() -> Self {
        RadioParams {
            inter_site_distance: 500.0,
            resource_units: 500,
            bandwidth_per_ru: 200e3,
            power_per_ru: 0.08,
            static_energy: 800.0,
            sinr_scaling: 1.0,
            noise_power: 6.36e-15,
            demand_bps: 128e3,
            spectral_efficiency_cap: None,
        }
    }
}

/// The full network description consumed by the load model and optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkScenario {
    pub schema_version: u32,
    pub stations: Vec<BaseStation>,
    pub test_points: Vec<TestPoint>,
    /// Linear power gains, `gains[i][j]` from station `i` to test point `j`.
    pub gains: Vec<Vec<f64>>,
    /// Resource units per scheduling interval (K).
    pub resource_units: u32,
    /// Bandwidth per resource unit in hertz (B).
    pub bandwidth_per_ru: f64,
    /// SINR scaling factor (eta).
    pub sinr_scaling: f64,
    /// Noise power in watts (sigma^2).
    pub noise_power: f64,
    /// Optional spectral-efficiency cap in bits/s per resource unit.
    pub spectral_efficiency_cap: Option<f64>,
}

impl NetworkScenario {
    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    pub fn test_point_count(&self) -> usize {
        self.test_points.len()
    }

    /// Checks every structural invariant of the data model.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let m = self.stations.len();
        let n = self.test_points.len();
        if m == 0 || n == 0 {
            return Err(ScenarioError::EmptyScenario { m, n });
        }
        for (i, s) in self.stations.iter().enumerate() {
            if s.id != i {
                return Err(ScenarioError::Invalid(format!(
                    "station ids must be contiguous from 0 (index {i} has id {})",
                    s.id
                )));
            }
            if !(s.power_per_ru > 0.0) || !(s.static_energy > 0.0) {
                return Err(ScenarioError::Invalid(format!(
                    "station {i}: power_per_ru and static_energy must be positive"
                )));
            }
        }
        for (j, t) in self.test_points.iter().enumerate() {
            if t.id != j {
                return Err(ScenarioError::Invalid(format!(
                    "test point ids must be contiguous from 0 (index {j} has id {})",
                    t.id
                )));
            }
            if !(t.demand > 0.0) {
                return Err(ScenarioError::Invalid(format!(
                    "test point {j}: demand must be positive"
                )));
            }
        }
        if self.gains.len() != m {
            return Err(ScenarioError::Invalid(format!(
                "gain matrix has {} rows, expected {m}",
                self.gains.len()
            )));
        }
        for (i, row) in self.gains.iter().enumerate() {
            if row.len() != n {
                return Err(ScenarioError::Invalid(format!(
                    "gain row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
                return Err(ScenarioError::Invalid(format!(
                    "gain row {i} contains a non-positive or non-finite entry"
                )));
            }
        }
        if self.resource_units < 1 {
            return Err(ScenarioError::Invalid("resource_units must be >= 1".into()));
        }
        if !(self.bandwidth_per_ru > 0.0) {
            return Err(ScenarioError::Invalid("bandwidth_per_ru must be positive".into()));
        }
        if !(self.noise_power > 0.0) {
            return Err(ScenarioError::Invalid("noise_power must be positive".into()));
        }
        if !(self.sinr_scaling >= 1.0) {
            return Err(ScenarioError::Invalid("sinr_scaling must be >= 1".into()));
        }
        if let Some(cap) = self.spectral_efficiency_cap {
            if !(cap > 0.0) {
                return Err(ScenarioError::Invalid(
                    "spectral_efficiency_cap must be positive when present".into(),
                ));
            }
        }
        Ok(())
    }

    /// Serializes to the canonical JSON document (stable field order, one
    /// trailing newline). Serialize → parse → serialize is byte-identical.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: NetworkScenario = serde_json::from_str(text)?;
        if scenario.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(ScenarioError::SchemaVersion {
                found: scenario.schema_version,
                expected: SCENARIO_SCHEMA_VERSION,
            });
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

/// Path loss in dB at distance `d_m` meters: urban-macro style
/// `128.1 + 37.6 log10(d/km)`, with `d` floored at [`MIN_DISTANCE_M`].
pub fn path_loss_db(d_m: f64) -> f64 {
    let d_km = d_m.max(MIN_DISTANCE_M) / 1000.0;
    128.1 + 37.6 * d_km.log10()
}

/// Linear power gain at distance `d_m` meters.
pub fn gain_at(d_m: f64) -> f64 {
    10f64.powf(-path_loss_db(d_m) / 10.0)
}

/// Computes the M×N gain matrix from station and test-point geometry.
pub fn compute_gains(stations: &[BaseStation], test_points: &[TestPoint]) -> Vec<Vec<f64>> {
    stations
        .iter()
        .map(|s| {
            test_points
                .iter()
                .map(|t| {
                    let dx = s.position[0] - t.position[0];
                    let dy = s.position[1] - t.position[1];
                    gain_at(dx.hypot(dy))
                })
                .collect()
        })
        .collect()
}

/// Generates a reproducible deployment: `m` stations on a hexagonal lattice
/// covering a rectangle sized so the lattice spacing equals
/// `params.inter_site_distance`, and `n` test points placed uniformly at
/// random from the seeded stream.
pub fn generate_hex_scenario(
    m: usize,
    n: usize,
    seed: u64,
    params: &RadioParams,
) -> Result<NetworkScenario, ScenarioError> {
    if m == 0 || n == 0 {
        return Err(ScenarioError::EmptyScenario { m, n });
    }
    let s = params.inter_site_distance;
    let cols = (m as f64).sqrt().ceil() as usize;
    let rows = m.div_ceil(cols);
    let row_height = s * 3f64.sqrt() / 2.0;
    // Odd lattice rows are shifted by half a spacing; the region is widened to
    // keep them inside. A single row keeps the station(s) centered.
    let width = cols as f64 * s + if rows > 1 { s / 2.0 } else { 0.0 };
    let height = rows as f64 * row_height;

    let stations: Vec<BaseStation> = (0..m)
        .map(|k| {
            let r = k / cols;
            let c = k % cols;
            let offset = if r % 2 == 1 { s / 2.0 } else { 0.0 };
            BaseStation {
                id: k,
                position: [(c as f64 + 0.5) * s + offset, (r as f64 + 0.5) * row_height],
                power_per_ru: params.power_per_ru,
                static_energy: params.static_energy,
            }
        })
        .collect();

    let mut rng = rng::stream(seed, "scenario/test-points");
    let test_points: Vec<TestPoint> = (0..n)
        .map(|j| TestPoint {
            id: j,
            position: [rng.random::<f64>() * width, rng.random::<f64>() * height],
            demand: params.demand_bps,
        })
        .collect();

    let gains = compute_gains(&stations, &test_points);
    let scenario = NetworkScenario {
        schema_version: SCENARIO_SCHEMA_VERSION,
        stations,
        test_points,
        gains,
        resource_units: params.resource_units,
        bandwidth_per_ru: params.bandwidth_per_ru,
        sinr_scaling: params.sinr_scaling,
        noise_power: params.noise_power,
        spectral_efficiency_cap: params.spectral_efficiency_cap,
    };
    scenario.validate()?;
    Ok(scenario)
}
