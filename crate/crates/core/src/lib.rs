//! Energy optimization toolkit for cellular radio networks.
//!
//! The crate is organized around four stages of a switch-off study:
//!
//! * [`scenario`] — network data model and reproducible synthetic deployments
//!   (hexagonal layouts, path-loss gains, radio parameters).
//! * [`ifcalc`] — standard interference mappings, combinators that preserve
//!   them, axiom checks, and fixed-point solvers with certified two-sided
//!   bounds.
//! * [`loadmodel`] — the cellular load-coupling mapping built from a scenario
//!   and an assignment, plus network feasibility checks.
//! * [`traffic`] — synthetic traffic generation, i.i.d. diagnostics,
//!   distribution-free provisioning levels, and Gaussian-process forecasts.
//! * [`energyopt`] — the base-station switch-off optimizer: a
//!   majorization-minimization loop over a log-surrogate objective with an
//!   internal simplex solver, a rounding heuristic, and an exact enumeration
//!   oracle for small instances.

pub mod energyopt;
pub mod ifcalc;
pub mod loadmodel;
pub mod rng;
pub mod scenario;
pub mod traffic;

pub use energyopt::{EnergyError, SwitchOffPlan, SwitchOffProblem};
pub use ifcalc::{FixedPointResult, IfcalcError, InterferenceMapping};
pub use loadmodel::{AssignmentMatrix, FeasibilityReport, LoadError};
pub use scenario::{BaseStation, NetworkScenario, RadioParams, ScenarioError, TestPoint};
pub use traffic::{GpForecast, ToleranceResult, TrafficError, TrafficSeries};
