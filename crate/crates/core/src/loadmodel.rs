//! Cellular load coupling: spectral efficiency, the load mapping, capped and
//! load-limited variants, and the network feasibility check.
//!
//! The load of station `i` is the fraction of its `K` resource units consumed
//! serving its assigned test points. Because spectral efficiency depends on
//! the interferers' loads, the load vector solves `rho = I(rho)` where each
//! `I_i` is a standard interference function; the fixed point is computed
//! with the certified solver from [`crate::ifcalc`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ifcalc::{self, FixedPointResult, IfcalcError, InterferenceMapping};
use crate::scenario::NetworkScenario;

/// Loads within this margin of 1.0 are treated as overloaded, so boundary
/// numerical noise is never classified as feasible.
pub const FEASIBILITY_MARGIN: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("assignment shape {rows}x{cols} does not match scenario {m}x{n}")]
    ShapeMismatch { rows: usize, cols: usize, m: usize, n: usize },
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error(
        "station {station} has zero assigned demand and cannot appear in a load mapping; \
         restrict the mapping to stations with positive assigned demand or assign it a test point"
    )]
    ZeroDemandStation { station: usize },
    #[error("spectral-efficiency cap must be strictly positive (got {0})")]
    NonPositiveCap(f64),
    #[error(transparent)]
    Solver(#[from] IfcalcError),
}

/// Relaxed assignments carry fractions in `[0,1]`; discrete ones are 0/1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    Relaxed,
    Discrete,
}

/// An M×N assignment of test points to stations with unit column sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    mode: AssignmentMode,
    /// Set when every station is declared to serve at least one test point.
    covering: bool,
    entries: Vec<Vec<f64>>,
}

impl AssignmentMatrix {
    /// Builds a relaxed (fractional) assignment. Entries may carry solver
    /// noise up to 1e-6 outside `[0,1]` and are clamped; column sums must be
    /// 1 within the same tolerance.
    pub fn relaxed(entries: Vec<Vec<f64>>) -> Result<Self, LoadError> {
        Self::build(entries, AssignmentMode::Relaxed)
    }

    /// Builds a discrete assignment: every entry exactly 0 or 1 and exactly
    /// one serving station per test point.
    pub fn discrete(entries: Vec<Vec<f64>>) -> Result<Self, LoadError> {
        Self::build(entries, AssignmentMode::Discrete)
    }

    /// The uniform relaxed assignment `x[i][j] = 1/m`.
    pub fn uniform(m: usize, n: usize) -> Self {
        let w = 1.0 / m as f64;
        AssignmentMatrix {
            mode: AssignmentMode::Relaxed,
            covering: true,
            entries: vec![vec![w; n]; m],
        }
    }

    fn build(entries: Vec<Vec<f64>>, mode: AssignmentMode) -> Result<Self, LoadError> {
        let m = entries.len();
        if m == 0 {
            return Err(LoadError::InvalidAssignment("assignment has no rows".into()));
        }
        let n = entries[0].len();
        if n == 0 {
            return Err(LoadError::InvalidAssignment("assignment has no columns".into()));
        }
        if entries.iter().any(|row| row.len() != n) {
            return Err(LoadError::InvalidAssignment("ragged assignment rows".into()));
        }
        let tol = 1e-6;
        let mut clamped = entries;
        for (i, row) in clamped.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if !v.is_finite() || *v < -tol || *v > 1.0 + tol {
                    return Err(LoadError::InvalidAssignment(format!(
                        "entry ({i},{j}) = {v} outside [0,1]"
                    )));
                }
                if mode == AssignmentMode::Discrete && (*v - v.round()).abs() > 0.0 {
                    return Err(LoadError::InvalidAssignment(format!(
                        "discrete assignment entry ({i},{j}) = {v} is not 0 or 1"
                    )));
                }
                *v = v.clamp(0.0, 1.0);
            }
        }
        for j in 0..n {
            let sum: f64 = clamped.iter().map(|row| row[j]).sum();
            if (sum - 1.0).abs() > tol {
                return Err(LoadError::InvalidAssignment(format!(
                    "column {j} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(AssignmentMatrix { mode, covering: false, entries: clamped })
    }

    /// Declares the covering invariant: every station serves at least one
    /// test point. Fails if some row is entirely zero.
    pub fn declare_covering(mut self) -> Result<Self, LoadError> {
        for (i, row) in self.entries.iter().enumerate() {
            if row.iter().all(|v| *v == 0.0) {
                return Err(LoadError::InvalidAssignment(format!(
                    "covering declared but station {i} serves no test point"
                )));
            }
        }
        self.covering = true;
        Ok(self)
    }

    pub fn mode(&self) -> AssignmentMode {
        self.mode
    }

    pub fn is_covering(&self) -> bool {
        self.covering
    }

    pub fn station_count(&self) -> usize {
        self.entries.len()
    }

    pub fn point_count(&self) -> usize {
        self.entries[0].len()
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i]
    }

    fn check_shape(&self, scenario: &NetworkScenario) -> Result<(), LoadError> {
        let (m, n) = (scenario.station_count(), scenario.test_point_count());
        if self.station_count() != m || self.point_count() != n {
            return Err(LoadError::ShapeMismatch {
                rows: self.station_count(),
                cols: self.point_count(),
                m,
                n,
            });
        }
        Ok(())
    }
}

/// Spectral efficiency (bits/s per resource unit) of the link from station
/// `i` to test point `j`, given the full load vector `rho` (one entry per
/// station): `B log2(1 + P_i g_ij / (eta (sum_{l != i} P_l g_lj rho_l + sigma^2)))`.
pub fn spectral_efficiency(
    scenario: &NetworkScenario,
    i: usize,
    j: usize,
    rho: &[f64],
) -> f64 {
    assert_eq!(rho.len(), scenario.station_count(), "rho must have one entry per station");
    let mut interference = 0.0;
    for (l, station) in scenario.stations.iter().enumerate() {
        if l != i {
            interference += station.power_per_ru * scenario.gains[l][j] * rho[l];
        }
    }
    let signal = scenario.stations[i].power_per_ru * scenario.gains[i][j];
    let sinr = signal / (scenario.sinr_scaling * (interference + scenario.noise_power));
    scenario.bandwidth_per_ru * (1.0 + sinr).log2()
}

/// A load mapping restricted to the stations that carry positive demand.
/// `active[a]` is the station index of mapping component `a`.
#[derive(Debug, Clone)]
pub struct CellLoadMap {
    pub mapping: InterferenceMapping,
    pub active: Vec<usize>,
}

impl CellLoadMap {
    /// Scatters an active-indexed load vector back to one entry per station,
    /// with zeros for stations outside the mapping.
    pub fn expand(&self, rho_active: &[f64], station_count: usize) -> Vec<f64> {
        let mut full = vec![0.0; station_count];
        for (a, &i) in self.active.iter().enumerate() {
            full[i] = rho_active[a];
        }
        full
    }
}

/// The load-coupling mapping `I_i(rho) = sum_j d_j x_ij / (K omega_ij(rho))`
/// over the stations with positive assigned demand.
pub fn load_mapping(
    scenario: &NetworkScenario,
    assignment: &AssignmentMatrix,
) -> Result<CellLoadMap, LoadError> {
    let active = positively_loaded_stations(scenario, assignment);
    build_load_map(scenario, assignment, &active, None)
}

/// Same as [`load_mapping`] with the per-link spectral efficiency capped at
/// `omega_bar`: each term becomes
/// `max(d_j x_ij / (K omega_ij(rho)), d_j x_ij / (K omega_bar))`,
/// still a standard interference mapping. Capping the efficiency from above
/// makes loads larger, never smaller.
pub fn capped_load_mapping(
    scenario: &NetworkScenario,
    assignment: &AssignmentMatrix,
    omega_bar: f64,
) -> Result<CellLoadMap, LoadError> {
    if !(omega_bar > 0.0) {
        return Err(LoadError::NonPositiveCap(omega_bar));
    }
    let active = positively_loaded_stations(scenario, assignment);
    build_load_map(scenario, assignment, &active, Some(omega_bar))
}

/// Builds the load mapping over exactly the given stations, which must all
/// carry positive assigned demand.
pub fn load_mapping_over(
    scenario: &NetworkScenario,
    assignment: &AssignmentMatrix,
    stations: &[usize],
    omega_bar: Option<f64>,
) -> Result<CellLoadMap, LoadError> {
    if let Some(cap) = omega_bar {
        if !(cap > 0.0) {
            return Err(LoadError::NonPositiveCap(cap));
        }
    }
    build_load_map(scenario, assignment, stations, omega_bar)
}

/// Limits every component at 1: `min(I_i(rho), 1)`. The result is bounded by
/// 1, so a fixed point always exists.
pub fn load_limited_mapping(inner: InterferenceMapping) -> InterferenceMapping {
    ifcalc::cap(inner, 1.0).expect("cap level 1.0 is valid")
}

fn positively_loaded_stations(
    scenario: &NetworkScenario,
    assignment: &AssignmentMatrix,
) -> Vec<usize> {
    (0..assignment.station_count())
        .filter(|&i| {
            assignment
                .row(i)
                .iter()
                .zip(&scenario.test_points)
                .any(|(x, t)| x * t.demand > 0.0)
        })
        .collect()
}

fn build_load_map(
    scenario: &NetworkScenario,
    assignment: &AssignmentMatrix,
    stations: &[usize],
    omega_bar: Option<f64>,
) -> Result<CellLoadMap, LoadError> {
    assignment.check_shape(scenario)?;
    let n = scenario.test_point_count();
    let active = stations.to_vec();

    // Precompute received powers and the demand each station serves.
    let mut power: Vec<Vec<f64>> = Vec::with_capacity(active.len());
    let mut served: Vec<Vec<(usize, f64)>> = Vec::with_capacity(active.len());
    for &i in &active {
        let p = scenario.stations[i].power_per_ru;
        power.push((0..n).map(|j| p * scenario.gains[i][j]).collect());
        let terms: Vec<(usize, f64)> = assignment
            .row(i)
            .iter()
            .zip(&scenario.test_points)
            .enumerate()
            .filter(|(_, (x, t))| *x * t.demand > 0.0)
            .map(|(j, (x, t))| (j, x * t.demand))
            .collect();
        if terms.is_empty() {
            return Err(LoadError::ZeroDemandStation { station: i });
        }
        served.push(terms);
    }

    let k = f64::from(scenario.resource_units);
    let bandwidth = scenario.bandwidth_per_ru;
    let eta = scenario.sinr_scaling;
    let sigma2 = scenario.noise_power;
    let dim = active.len();
    let name = if omega_bar.is_some() { "cell-load-capped" } else { "cell-load" };

    let mapping = InterferenceMapping::from_fn(dim, name, None, move |rho: &[f64]| {
        // Total received power per test point from all active stations,
        // weighted by their loads; each link subtracts its own term.
        let mut total = vec![0.0; n];
        for (a, pw) in power.iter().enumerate() {
            for (t, p) in total.iter_mut().zip(pw) {
                *t += p * rho[a];
            }
        }
        (0..dim)
            .map(|a| {
                let mut load = 0.0;
                for &(j, demand) in &served[a] {
                    let own = power[a][j];
                    let interference = (total[j] - own * rho[a]).max(0.0);
                    let sinr = own / (eta * (interference + sigma2));
                    let mut omega = bandwidth * (1.0 + sinr).log2();
                    if let Some(cap) = omega_bar {
                        omega = omega.min(cap);
                    }
                    load += demand / (k * omega);
                }
                load
            })
            .collect()
    });
    Ok(CellLoadMap { mapping, active })
}

/// Outcome of a feasibility check: either the load vector of a supportable
/// configuration, or the set of overloaded stations.
#[derive(Debug, Clone)]
pub enum FeasibilityReport {
    Feasible {
        /// Load per station (zero for stations without assigned demand).
        load: Vec<f64>,
        solve: FixedPointResult,
    },
    Infeasible {
        /// Stations pinned at full load by the limited mapping.
        overloaded: Vec<usize>,
        /// Fixed point of the load-limited mapping, per station.
        load: Vec<f64>,
    },
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        matches!(self, FeasibilityReport::Feasible { .. })
    }

    pub fn load(&self) -> &[f64] {
        match self {
            FeasibilityReport::Feasible { load, .. } => load,
            FeasibilityReport::Infeasible { load, .. } => load,
        }
    }
}

/// Checks whether the network can support the assigned demand.
///
/// Solves the fixed point of the load-limited mapping (which always exists),
/// then declares the configuration feasible iff every component stays below
/// `1 - FEASIBILITY_MARGIN` and the unlimited mapping is consistent at the
/// fixed point (residual at most `10 * epsilon`, i.e. the limiter never bit).
/// The capped variant is used when the scenario declares an efficiency cap.
pub fn feasibility_check(
    scenario: &NetworkScenario,
    assignment: &AssignmentMatrix,
    epsilon: f64,
) -> Result<FeasibilityReport, LoadError> {
    let inner = match scenario.spectral_efficiency_cap {
        Some(cap) => capped_load_mapping(scenario, assignment, cap)?,
        None => load_mapping(scenario, assignment)?,
    };
    let limited = load_limited_mapping(inner.mapping.clone());
    let solve = ifcalc::fixed_point(&limited, epsilon, 100_000)?;
    let rho = &solve.fixed_point;

    let image = inner.mapping.evaluate(rho);
    let unlimited_residual = rho
        .iter()
        .zip(&image)
        .map(|(r, v)| (r - v).abs())
        .fold(0.0f64, f64::max);
    let overloaded: Vec<usize> = inner
        .active
        .iter()
        .zip(rho)
        .filter(|(_, r)| **r >= 1.0 - FEASIBILITY_MARGIN)
        .map(|(&i, _)| i)
        .collect();

    let load = inner.expand(rho, scenario.station_count());
    if overloaded.is_empty() && unlimited_residual <= 10.0 * epsilon {
        Ok(FeasibilityReport::Feasible { load, solve })
    } else {
        Ok(FeasibilityReport::Infeasible { overloaded, load })
    }
}
