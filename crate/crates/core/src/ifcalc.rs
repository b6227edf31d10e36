//! Standard interference mappings, combinators, axiom checks, and fixed-point
//! solvers with certified two-sided bounds.
//!
//! A mapping `J: R^M_+ -> R^M_++` is *standard* when it is scalable
//! (`a*J(x) > J(a*x)` for `a > 1`) and monotone (`x1 >= x2` implies
//! `J(x1) >= J(x2)`). Mappings here are immutable combinator trees over
//! opaque leaf functions; combinators preserve both axioms, so anything
//! assembled from standard leaves stays standard. When a uniform upper bound
//! `J(x) <= B*1` is known, a fixed point exists and [`fixed_point`] brackets
//! it between a nondecreasing lower and a nonincreasing upper Picard
//! sequence, stopping once the certified gap falls below the tolerance.

use std::sync::atomic::{AtomicU8, Ordering};
use std::sync::Arc;
use thiserror::Error;

use crate::rng;
use rand::Rng;

#[derive(Debug, Error)]
pub enum IfcalcError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("combinator requires {maps} weights, got {weights}")]
    WeightCountMismatch { maps: usize, weights: usize },
    #[error("combinator requires at least one mapping")]
    EmptyCombinator,
    #[error("weights must be strictly positive (weight {index} = {value})")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("cap level must be strictly positive (got {0})")]
    NonPositiveCap(f64),
    #[error("candidate point must be strictly positive in every component")]
    NonPositiveCandidate,
    #[error(
        "no convergence after {iterations} iterations (gap {gap:.3e}); \
         the mapping may have no fixed point"
    )]
    MaxIterations {
        iterations: usize,
        gap: f64,
        last_lower: Vec<f64>,
        last_upper: Option<Vec<f64>>,
    },
    #[error("malformed mapping: {reason}")]
    MalformedMapping { reason: String },
}

// Debug verification state: 0 unset (read env once), 1 off, 2 on.
static VERIFY: AtomicU8 = AtomicU8::new(0);

/// Enables or disables per-evaluation output verification (positivity,
/// finiteness, declared upper bound). Overrides the `CELLOPT_VERIFY`
/// environment switch.
pub fn set_debug_verification(enabled: bool) {
    VERIFY.store(if enabled { 2 } else { 1 }, Ordering::Relaxed);
}

/// Whether debug verification is active. Defaults to the `CELLOPT_VERIFY`
/// environment variable (`1` or `true`), read once.
pub fn debug_verification() -> bool {
    match VERIFY.load(Ordering::Relaxed) {
        2 => true,
        1 => false,
        _ => {
            let on = std::env::var("CELLOPT_VERIFY")
                .map(|v| v == "1" || v.eq_ignore_ascii_case("true"))
                .unwrap_or(false);
            VERIFY.store(if on { 2 } else { 1 }, Ordering::Relaxed);
            on
        }
    }
}

type LeafFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// An evaluable interference mapping `R^M_+ -> R^M_++` with combinator
/// structure and an optional uniform upper bound.
#[derive(Clone)]
pub struct InterferenceMapping {
    dim: usize,
    upper_bound: Option<f64>,
    node: Node,
}

#[derive(Clone)]
enum Node {
    Leaf { name: Arc<str>, f: Arc<LeafFn> },
    ScaledSum(Vec<(f64, InterferenceMapping)>),
    Min(Vec<InterferenceMapping>),
    Max(Vec<InterferenceMapping>),
    Compose { outer: Box<InterferenceMapping>, inner: Box<InterferenceMapping> },
    Cap { inner: Box<InterferenceMapping>, level: f64 },
}

impl std::fmt::Debug for InterferenceMapping {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "InterferenceMapping(dim={}, {})", self.dim, self.describe())
    }
}

impl InterferenceMapping {
    /// Wraps an arbitrary function as a leaf mapping. The caller asserts the
    /// interference axioms and, if given, the uniform bound; both can be
    /// spot-checked with [`InterferenceMapping::check_axioms`] and debug
    /// verification.
    pub fn from_fn<F>(dim: usize, name: &str, upper_bound: Option<f64>, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        InterferenceMapping {
            dim,
            upper_bound,
            node: Node::Leaf { name: Arc::from(name), f: Arc::new(f) },
        }
    }

    /// The constant mapping `x -> values` (every entry must be positive).
    pub fn constant(values: Vec<f64>) -> Self {
        assert!(
            values.iter().all(|v| *v > 0.0 && v.is_finite()),
            "constant mapping requires strictly positive entries"
        );
        let bound = values.iter().cloned().fold(f64::MIN, f64::max);
        let dim = values.len();
        InterferenceMapping {
            dim,
            upper_bound: Some(bound),
            node: Node::Leaf {
                name: Arc::from("constant"),
                f: Arc::new(move |_: &[f64]| values.clone()),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The declared uniform upper bound `B` with `J(x) <= B*1`, if any.
    pub fn upper_bound(&self) -> Option<f64> {
        self.upper_bound
    }

    fn describe(&self) -> String {
        match &self.node {
            Node::Leaf { name, .. } => format!("leaf:{name}"),
            Node::ScaledSum(terms) => format!("scaled-sum[{}]", terms.len()),
            Node::Min(maps) => format!("min[{}]", maps.len()),
            Node::Max(maps) => format!("max[{}]", maps.len()),
            Node::Compose { .. } => "compose".into(),
            Node::Cap { level, .. } => format!("cap@{level}"),
        }
    }

    /// Evaluates the mapping at a nonnegative point.
    ///
    /// Panics if the input length does not match the mapping dimension, and,
    /// under debug verification, if the output violates positivity or the
    /// declared bound.
    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "input dimension mismatch in evaluate");
        let out = match &self.node {
            Node::Leaf { f, .. } => f(x),
            Node::ScaledSum(terms) => {
                let mut acc = vec![0.0; self.dim];
                for (w, m) in terms {
                    for (a, b) in acc.iter_mut().zip(m.evaluate(x)) {
                        *a += w * b;
                    }
                }
                acc
            }
            Node::Min(maps) => {
                let mut acc = maps[0].evaluate(x);
                for m in &maps[1..] {
                    for (a, b) in acc.iter_mut().zip(m.evaluate(x)) {
                        *a = a.min(b);
                    }
                }
                acc
            }
            Node::Max(maps) => {
                let mut acc = maps[0].evaluate(x);
                for m in &maps[1..] {
                    for (a, b) in acc.iter_mut().zip(m.evaluate(x)) {
                        *a = a.max(b);
                    }
                }
                acc
            }
            Node::Compose { outer, inner } => outer.evaluate(&inner.evaluate(x)),
            Node::Cap { inner, level } => {
                inner.evaluate(x).into_iter().map(|v| v.min(*level)).collect()
            }
        };
        if debug_verification() {
            self.verify_output(&out);
        }
        out
    }

    fn verify_output(&self, out: &[f64]) {
        assert_eq!(
            out.len(),
            self.dim,
            "mapping {} produced {} components, expected {}",
            self.describe(),
            out.len(),
            self.dim
        );
        for (i, v) in out.iter().enumerate() {
            assert!(
                v.is_finite() && *v > 0.0,
                "mapping {} produced non-positive component {i}: {v}",
                self.describe()
            );
            if let Some(b) = self.upper_bound {
                assert!(
                    *v <= b + 1e-9 * b.max(1.0),
                    "mapping {} exceeded declared bound {b} at component {i}: {v}",
                    self.describe()
                );
            }
        }
    }

    /// Samples random points and reports every violation of the scalability
    /// or monotonicity axiom, with the witnessing inputs. A relative slack of
    /// 1e-12 absorbs floating-point noise; violations beyond it are real.
    pub fn check_axioms(&self, sample_count: usize, seed: u64) -> AxiomReport {
        let mut rng = rng::stream(seed, "ifcalc/axioms");
        let mut violations = Vec::new();
        for _ in 0..sample_count {
            let x = sample_point(&mut rng, self.dim);
            let alpha = 1.0 + rng.random::<f64>() * 9.0;
            let jx = self.evaluate(&x);
            let scaled: Vec<f64> = x.iter().map(|v| alpha * v).collect();
            let j_scaled = self.evaluate(&scaled);
            for i in 0..self.dim {
                let lhs = alpha * jx[i];
                let tol = 1e-12 * lhs.max(j_scaled[i]);
                if lhs < j_scaled[i] - tol {
                    violations.push(AxiomViolation::Scalability {
                        x: x.clone(),
                        alpha,
                        scaled_value: lhs,
                        value_at_scaled: j_scaled[i],
                        component: i,
                    });
                }
            }
            // x dominates x_lo componentwise by construction.
            let x_lo: Vec<f64> = x.iter().map(|v| v * rng.random::<f64>()).collect();
            let j_lo = self.evaluate(&x_lo);
            for i in 0..self.dim {
                let tol = 1e-12 * jx[i].max(j_lo[i]);
                if jx[i] < j_lo[i] - tol {
                    violations.push(AxiomViolation::Monotonicity {
                        x_hi: x.clone(),
                        x_lo: x_lo.clone(),
                        value_hi: jx[i],
                        value_lo: j_lo[i],
                        component: i,
                    });
                }
            }
        }
        AxiomReport { samples: sample_count, seed, violations }
    }
}

fn sample_point<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    // Log-uniform magnitudes over several decades, with occasional exact
    // zeros to probe the boundary of the domain.
    (0..dim)
        .map(|_| {
            if rng.random::<f64>() < 0.1 {
                0.0
            } else {
                let scale = 10f64.powf(rng.random_range(-2.0..2.0));
                scale * rng.random::<f64>()
            }
        })
        .collect()
}

/// Outcome of an axiom sampling run.
#[derive(Debug, Clone)]
pub struct AxiomReport {
    pub samples: usize,
    pub seed: u64,
    pub violations: Vec<AxiomViolation>,
}

impl AxiomReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone)]
pub enum AxiomViolation {
    /// `alpha * J(x) > J(alpha * x)` failed at `component`.
    Scalability {
        x: Vec<f64>,
        alpha: f64,
        scaled_value: f64,
        value_at_scaled: f64,
        component: usize,
    },
    /// `J(x_hi) >= J(x_lo)` failed at `component` despite `x_hi >= x_lo`.
    Monotonicity {
        x_hi: Vec<f64>,
        x_lo: Vec<f64>,
        value_hi: f64,
        value_lo: f64,
        component: usize,
    },
}

/// Weighted sum `sum_k w_k * J_k(x)`; weights must be strictly positive.
/// The bound combines as `sum_k w_k * B_k` when every term is bounded.
pub fn combine_scaled_sum(
    maps: Vec<InterferenceMapping>,
    weights: &[f64],
) -> Result<InterferenceMapping, IfcalcError> {
    if maps.is_empty() {
        return Err(IfcalcError::EmptyCombinator);
    }
    if maps.len() != weights.len() {
        return Err(IfcalcError::WeightCountMismatch { maps: maps.len(), weights: weights.len() });
    }
    let dim = shared_dim(&maps)?;
    for (index, w) in weights.iter().enumerate() {
        if !(*w > 0.0) || !w.is_finite() {
            return Err(IfcalcError::NonPositiveWeight { index, value: *w });
        }
    }
    let upper_bound = maps
        .iter()
        .zip(weights)
        .map(|(m, w)| m.upper_bound.map(|b| w * b))
        .sum::<Option<f64>>();
    Ok(InterferenceMapping {
        dim,
        upper_bound,
        node: Node::ScaledSum(weights.iter().cloned().zip(maps).map(|(w, m)| (w, m)).collect()),
    })
}

/// Componentwise minimum; inherits the smallest available upper bound.
pub fn combine_min(maps: Vec<InterferenceMapping>) -> Result<InterferenceMapping, IfcalcError> {
    if maps.is_empty() {
        return Err(IfcalcError::EmptyCombinator);
    }
    let dim = shared_dim(&maps)?;
    let upper_bound = maps.iter().filter_map(|m| m.upper_bound).fold(None, |acc: Option<f64>, b| {
        Some(acc.map_or(b, |a| a.min(b)))
    });
    Ok(InterferenceMapping { dim, upper_bound, node: Node::Min(maps) })
}

/// Componentwise maximum; bounded only when every term is.
pub fn combine_max(maps: Vec<InterferenceMapping>) -> Result<InterferenceMapping, IfcalcError> {
    if maps.is_empty() {
        return Err(IfcalcError::EmptyCombinator);
    }
    let dim = shared_dim(&maps)?;
    let upper_bound = maps
        .iter()
        .map(|m| m.upper_bound)
        .try_fold(f64::MIN, |acc, b| b.map(|b| acc.max(b)));
    Ok(InterferenceMapping { dim, upper_bound, node: Node::Max(maps) })
}

/// Composition `x -> outer(inner(x))`; inherits the outer bound.
pub fn compose(
    outer: InterferenceMapping,
    inner: InterferenceMapping,
) -> Result<InterferenceMapping, IfcalcError> {
    if outer.dim != inner.dim {
        return Err(IfcalcError::DimensionMismatch { expected: outer.dim, got: inner.dim });
    }
    Ok(InterferenceMapping {
        dim: outer.dim,
        upper_bound: outer.upper_bound,
        node: Node::Compose { outer: Box::new(outer), inner: Box::new(inner) },
    })
}

/// Componentwise minimum with the constant `level`, which therefore becomes
/// an upper bound of the result.
pub fn cap(inner: InterferenceMapping, level: f64) -> Result<InterferenceMapping, IfcalcError> {
    if !(level > 0.0) || !level.is_finite() {
        return Err(IfcalcError::NonPositiveCap(level));
    }
    let bound = inner.upper_bound.map_or(level, |b| b.min(level));
    Ok(InterferenceMapping {
        dim: inner.dim,
        upper_bound: Some(bound),
        node: Node::Cap { inner: Box::new(inner), level },
    })
}

fn shared_dim(maps: &[InterferenceMapping]) -> Result<usize, IfcalcError> {
    let dim = maps[0].dim;
    for m in maps {
        if m.dim != dim {
            return Err(IfcalcError::DimensionMismatch { expected: dim, got: m.dim });
        }
    }
    Ok(dim)
}

/// Solver knobs for [`fixed_point_with`].
#[derive(Debug, Clone)]
pub struct FixedPointOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Record the per-iteration lower/upper iterates (certified mode only).
    pub record_trace: bool,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions { tolerance: 1e-9, max_iterations: 100_000, record_trace: false }
    }
}

/// One certified iteration: the lower and upper iterate after applying `J`.
#[derive(Debug, Clone)]
pub struct SandwichStep {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Fixed point with convergence metadata and, when a bound is known,
/// certified two-sided bracketing.
#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub fixed_point: Vec<f64>,
    /// Final lower iterate (Picard sequence from 0).
    pub lower: Vec<f64>,
    /// Final upper iterate (Picard sequence from `B*1`); absent without a bound.
    pub upper: Option<Vec<f64>>,
    pub iterations: usize,
    /// `max(upper - lower)` at termination; absent without a bound.
    pub certified_gap: Option<f64>,
    /// `max |x* - J(x*)|` at the returned point.
    pub residual: f64,
    pub trace: Option<Vec<SandwichStep>>,
}

/// Computes the fixed point of `map` to within `tolerance`.
///
/// With a known upper bound `B`, two Picard sequences run in parallel from
/// `0` and `B*1`; the lower is nondecreasing, the upper nonincreasing, and
/// both bracket the fixed point at every step (checked each iteration), so
/// the final gap certifies the error. Without a bound, a single Picard
/// sequence from `0` stops on the successive-iterate gap and the result
/// carries a residual but no certificate.
pub fn fixed_point(
    map: &InterferenceMapping,
    tolerance: f64,
    max_iterations: usize,
) -> Result<FixedPointResult, IfcalcError> {
    fixed_point_with(
        map,
        &FixedPointOptions { tolerance, max_iterations, ..FixedPointOptions::default() },
    )
}

pub fn fixed_point_with(
    map: &InterferenceMapping,
    options: &FixedPointOptions,
) -> Result<FixedPointResult, IfcalcError> {
    assert!(options.tolerance > 0.0, "tolerance must be positive");
    match map.upper_bound {
        Some(bound) => certified_fixed_point(map, bound, options),
        None => picard_fixed_point(map, options),
    }
}

fn certified_fixed_point(
    map: &InterferenceMapping,
    bound: f64,
    options: &FixedPointOptions,
) -> Result<FixedPointResult, IfcalcError> {
    let dim = map.dim;
    let mut lower = vec![0.0; dim];
    let mut upper = vec![bound; dim];
    let mut trace = options.record_trace.then(Vec::new);
    let mut gap = f64::INFINITY;
    for iteration in 1..=options.max_iterations {
        let new_lower = checked_eval(map, &lower)?;
        let new_upper = checked_eval(map, &upper)?;
        check_sandwich(&lower, &upper, &new_lower, &new_upper)?;
        gap = new_upper
            .iter()
            .zip(&new_lower)
            .map(|(u, l)| u - l)
            .fold(0.0f64, f64::max)
            .max(0.0);
        lower = new_lower;
        upper = new_upper;
        if let Some(t) = trace.as_mut() {
            t.push(SandwichStep { lower: lower.clone(), upper: upper.clone() });
        }
        if gap <= options.tolerance {
            let fixed_point: Vec<f64> =
                lower.iter().zip(&upper).map(|(l, u)| 0.5 * (l + u)).collect();
            let image = checked_eval(map, &fixed_point)?;
            let residual = inf_distance(&fixed_point, &image);
            return Ok(FixedPointResult {
                fixed_point,
                lower,
                upper: Some(upper),
                iterations: iteration,
                certified_gap: Some(gap),
                residual,
                trace,
            });
        }
    }
    Err(IfcalcError::MaxIterations {
        iterations: options.max_iterations,
        gap,
        last_lower: lower,
        last_upper: Some(upper),
    })
}

fn picard_fixed_point(
    map: &InterferenceMapping,
    options: &FixedPointOptions,
) -> Result<FixedPointResult, IfcalcError> {
    let mut x = vec![0.0; map.dim];
    let mut gap = f64::INFINITY;
    for iteration in 1..=options.max_iterations {
        let next = checked_eval(map, &x)?;
        // From 0 the Picard sequence must be nondecreasing.
        for (i, (prev, cur)) in x.iter().zip(&next).enumerate() {
            if *cur < prev - slack(*prev) {
                return Err(IfcalcError::MalformedMapping {
                    reason: format!(
                        "Picard sequence from 0 decreased at component {i}: {prev} -> {cur}"
                    ),
                });
            }
        }
        gap = inf_distance(&x, &next);
        x = next;
        if gap <= options.tolerance {
            let image = checked_eval(map, &x)?;
            let residual = inf_distance(&x, &image);
            return Ok(FixedPointResult {
                fixed_point: x.clone(),
                lower: x,
                upper: None,
                iterations: iteration,
                certified_gap: None,
                residual,
                trace: None,
            });
        }
    }
    Err(IfcalcError::MaxIterations {
        iterations: options.max_iterations,
        gap,
        last_lower: x,
        last_upper: None,
    })
}

/// Plain Picard iteration from an arbitrary nonnegative start, stopping on
/// the successive-iterate gap. Used to probe uniqueness of the fixed point.
pub fn picard_from(
    map: &InterferenceMapping,
    start: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<Vec<f64>, IfcalcError> {
    if start.len() != map.dim {
        return Err(IfcalcError::DimensionMismatch { expected: map.dim, got: start.len() });
    }
    let mut x = start.to_vec();
    let mut gap = f64::INFINITY;
    for _ in 0..max_iterations {
        let next = checked_eval(map, &x)?;
        gap = inf_distance(&x, &next);
        x = next;
        if gap <= tolerance {
            return Ok(x);
        }
    }
    Err(IfcalcError::MaxIterations {
        iterations: max_iterations,
        gap,
        last_lower: x,
        last_upper: None,
    })
}

/// Existence certificate: true iff `J(candidate) <= candidate` componentwise,
/// which holds for some strictly positive point exactly when the mapping has
/// a fixed point.
pub fn has_fixed_point_certificate(
    map: &InterferenceMapping,
    candidate: &[f64],
) -> Result<bool, IfcalcError> {
    if candidate.len() != map.dim {
        return Err(IfcalcError::DimensionMismatch { expected: map.dim, got: candidate.len() });
    }
    if candidate.iter().any(|v| !(*v > 0.0)) {
        return Err(IfcalcError::NonPositiveCandidate);
    }
    let image = checked_eval(map, candidate)?;
    Ok(image.iter().zip(candidate).all(|(j, x)| j <= x))
}

fn checked_eval(map: &InterferenceMapping, x: &[f64]) -> Result<Vec<f64>, IfcalcError> {
    let out = map.evaluate(x);
    for (i, v) in out.iter().enumerate() {
        if !v.is_finite() || *v <= 0.0 {
            return Err(IfcalcError::MalformedMapping {
                reason: format!(
                    "evaluation produced non-positive or non-finite component {i}: {v}"
                ),
            });
        }
    }
    Ok(out)
}

fn check_sandwich(
    lower: &[f64],
    upper: &[f64],
    new_lower: &[f64],
    new_upper: &[f64],
) -> Result<(), IfcalcError> {
    for i in 0..lower.len() {
        if new_lower[i] < lower[i] - slack(lower[i]) {
            return Err(IfcalcError::MalformedMapping {
                reason: format!(
                    "lower iterate decreased at component {i}: {} -> {}",
                    lower[i], new_lower[i]
                ),
            });
        }
        if new_upper[i] > upper[i] + slack(upper[i]) {
            return Err(IfcalcError::MalformedMapping {
                reason: format!(
                    "upper iterate increased at component {i}: {} -> {}",
                    upper[i], new_upper[i]
                ),
            });
        }
        if new_lower[i] > new_upper[i] + slack(new_upper[i]) {
            return Err(IfcalcError::MalformedMapping {
                reason: format!(
                    "iterates crossed at component {i}: lower {} > upper {}",
                    new_lower[i], new_upper[i]
                ),
            });
        }
    }
    Ok(())
}

fn slack(v: f64) -> f64 {
    1e-12 * v.abs().max(1.0)
}

fn inf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
