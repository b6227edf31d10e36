//! Traffic statistics and forecasting: synthetic KPI generators, the
//! turning-point i.i.d. diagnostic, exact distribution-free provisioning
//! levels from order statistics, and Gaussian-process forecasts (see [`gp`]).

pub mod gp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use rand::Rng;
use rand_distr::{Distribution, Normal, Pareto, Poisson};

pub use gp::{gp_fit, gp_predict, GpForecast, GpModel, Kernel, KernelSpec};

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("order index k={k} out of range for n={n} (need 1 <= k <= n)")]
    OrderIndexOutOfRange { k: usize, n: usize },
    #[error("quantile p={0} must lie strictly between 0 and 1")]
    QuantileOutOfRange(f64),
    #[error("risk={0} must lie strictly between 0 and 1")]
    RiskOutOfRange(f64),
    #[error("samples must be nonempty and finite")]
    EmptySamples,
    #[error("series too short: {found} effective samples, need at least {needed}")]
    SeriesTooShort { found: usize, needed: usize },
    #[error("training window too short: {found} samples, need at least {needed} for kernel search")]
    TrainWindowTooShort { found: usize, needed: usize },
    #[error("covariance matrix not positive definite even after jitter (kernel: {kernel})")]
    NonPositiveDefinite { kernel: String },
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("failed to parse series CSV at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficKind {
    Voice,
    Data,
}

/// An hourly, nonnegative, normalized KPI time series.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSeries {
    pub values: Vec<f64>,
    /// Hours per sample.
    pub cadence_hours: f64,
    /// Hour-of-week of the first sample.
    pub start_offset: usize,
    pub kind: TrafficKind,
}

impl TrafficSeries {
    pub fn new(values: Vec<f64>, kind: TrafficKind) -> Result<Self, TrafficError> {
        if values.is_empty() {
            return Err(TrafficError::InvalidSeries("series must be nonempty".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(TrafficError::InvalidSeries(
                "series values must be finite and nonnegative".into(),
            ));
        }
        Ok(TrafficSeries { values, cadence_hours: 1.0, start_offset: 0, kind })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Groups samples by hour of day (requires hourly cadence). Samples of
    /// one group are spaced by multiples of 24 h, which is what makes the
    /// order-statistic machinery applicable per group.
    pub fn hour_of_day_samples(&self) -> Vec<Vec<f64>> {
        assert_eq!(self.cadence_hours, 1.0, "hour grouping requires hourly cadence");
        let mut groups = vec![Vec::new(); 24];
        for (i, v) in self.values.iter().enumerate() {
            groups[(self.start_offset + i) % 24].push(*v);
        }
        groups
    }

    /// Two-column CSV: hour index, value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("hour,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.start_offset + i, v));
        }
        out
    }

    pub fn from_csv(text: &str, kind: TrafficKind) -> Result<Self, TrafficError> {
        let mut values = Vec::new();
        let mut start_offset = None;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (idx == 0 && line.starts_with("hour")) {
                continue;
            }
            let mut parts = line.split(',');
            let hour: usize = parts
                .next()
                .ok_or_else(|| TrafficError::Parse { line: idx + 1, reason: "missing hour".into() })?
                .trim()
                .parse()
                .map_err(|e| TrafficError::Parse { line: idx + 1, reason: format!("hour: {e}") })?;
            let value: f64 = parts
                .next()
                .ok_or_else(|| TrafficError::Parse { line: idx + 1, reason: "missing value".into() })?
                .trim()
                .parse()
                .map_err(|e| TrafficError::Parse { line: idx + 1, reason: format!("value: {e}") })?;
            if start_offset.is_none() {
                start_offset = Some(hour);
            }
            values.push(value);
        }
        let mut series = TrafficSeries::new(values, kind)?;
        series.start_offset = start_offset.unwrap_or(0) % 168;
        Ok(series)
    }
}

/// Exact probability `P(F(X_{k:n}) > p)` that the k-th of n sorted i.i.d.
/// samples exceeds the p-quantile of their (arbitrary continuous)
/// distribution:
///
/// `1 - sum_{i=k}^{n} C(n,i) p^i (1-p)^{n-i}`
///
/// computed as the complementary binomial tail. For n > 60 the binomial
/// coefficients are evaluated in log space.
pub fn exceedance_probability(n: usize, k: usize, p: f64) -> Result<f64, TrafficError> {
    check_order_args(n, k, p)?;
    // 1 - sum_{i>=k} = sum_{i=0}^{k-1}: a direct positive-term sum.
    Ok(binomial_pmf_sum(n, 0, k - 1, p))
}

/// Probability `P(F(X_{k:n}) < p) = sum_{i=k}^{n} C(n,i) p^i (1-p)^{n-i}`
/// that the k-th order statistic fails to cover the p-quantile — the
/// complement of [`exceedance_probability`], summed directly for accuracy
/// near zero.
pub fn coverage_shortfall(n: usize, k: usize, p: f64) -> Result<f64, TrafficError> {
    check_order_args(n, k, p)?;
    Ok(binomial_pmf_sum(n, k, n, p))
}

fn check_order_args(n: usize, k: usize, p: f64) -> Result<(), TrafficError> {
    if k < 1 || k > n || n == 0 {
        return Err(TrafficError::OrderIndexOutOfRange { k, n });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(TrafficError::QuantileOutOfRange(p));
    }
    Ok(())
}

/// `sum_{i=lo}^{hi} C(n,i) p^i (1-p)^{n-i}`, clamped into [0,1].
fn binomial_pmf_sum(n: usize, lo: usize, hi: usize, p: f64) -> f64 {
    if hi < lo {
        return 0.0;
    }
    let q = 1.0 - p;
    let mut sum = 0.0;
    if n <= 60 {
        // C(n,i) by recurrence; values stay within f64 integer headroom.
        let mut binom = 1.0f64;
        for i in 0..=hi.min(n) {
            if i >= lo {
                sum += binom * p.powi(i as i32) * q.powi((n - i) as i32);
            }
            binom = binom * (n - i) as f64 / (i + 1) as f64;
        }
    } else {
        let ln_p = p.ln();
        let ln_q = q.ln();
        for i in lo..=hi.min(n) {
            let ln_term =
                ln_binomial(n as f64, i as f64) + i as f64 * ln_p + (n - i) as f64 * ln_q;
            sum += ln_term.exp();
        }
    }
    sum.clamp(0.0, 1.0)
}

fn ln_binomial(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// Lanczos approximation (g = 7, 9 terms), accurate to ~1e-13 relative.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut a = 0.999_999_999_999_809_93;
        let t = x + 7.5;
        for (i, c) in COEFFS.iter().enumerate() {
            a += c / (x + (i + 1) as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }
}

/// A provisioning level chosen from the sample order statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceResult {
    /// Chosen order index (1-based).
    pub k: usize,
    /// The order statistic `X_{k:n}` to provision for.
    pub level: f64,
    /// `P(F(X_{k:n}) > p)` at the chosen k.
    pub exceedance_probability: f64,
    pub p: f64,
    pub n: usize,
    /// False when even `k = n` cannot push the coverage shortfall below the
    /// risk target at this sample size (i.e. `p^n > risk`).
    pub attainable: bool,
}

/// Picks the smallest order index `k` whose coverage shortfall
/// `P(F(X_{k:n}) < p)` is at most `risk`, so that `X_{k:n}` upper-bounds the
/// p-quantile of the sampled distribution with confidence `1 - risk`,
/// whatever that distribution is. When no index qualifies, the largest order
/// statistic (`k = n`, the most conservative available level) is returned
/// flagged as unattainable.
pub fn select_provisioning_level(
    samples: &[f64],
    p: f64,
    risk: f64,
) -> Result<ToleranceResult, TrafficError> {
    if samples.is_empty() || samples.iter().any(|v| !v.is_finite()) {
        return Err(TrafficError::EmptySamples);
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(TrafficError::QuantileOutOfRange(p));
    }
    if !(risk > 0.0 && risk < 1.0) {
        return Err(TrafficError::RiskOutOfRange(risk));
    }
    let n = samples.len();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));

    // Shortfall is nonincreasing in k, so the first hit is the smallest k.
    let mut chosen = None;
    for k in 1..=n {
        if coverage_shortfall(n, k, p)? <= risk {
            chosen = Some(k);
            break;
        }
    }
    let (k, attainable) = match chosen {
        Some(k) => (k, true),
        None => (n, false),
    };
    Ok(ToleranceResult {
        k,
        level: sorted[k - 1],
        exceedance_probability: exceedance_probability(n, k, p)?,
        p,
        n,
        attainable,
    })
}

/// Turning-point test outcome at significance 0.05.
#[derive(Debug, Clone, PartialEq)]
pub struct TurningPointTest {
    /// Count of interior local extrema.
    pub turning_points: usize,
    /// Series length after collapsing tied adjacent samples.
    pub effective_len: usize,
    /// Normalized statistic `(T - 2(n-2)/3) / sqrt((16n-29)/90)`.
    pub statistic: f64,
    /// True when |statistic| > 1.96, rejecting the i.i.d. hypothesis.
    pub reject_iid: bool,
}

/// Counts interior turning points and compares against the i.i.d.
/// expectation `2(n-2)/3` with variance `(16n-29)/90`. Tied adjacent samples
/// are collapsed before counting.
pub fn turning_point_test(series: &[f64]) -> Result<TurningPointTest, TrafficError> {
    let mut collapsed: Vec<f64> = Vec::with_capacity(series.len());
    for &v in series {
        if collapsed.last() != Some(&v) {
            collapsed.push(v);
        }
    }
    let n = collapsed.len();
    if n < 3 {
        return Err(TrafficError::SeriesTooShort { found: n, needed: 3 });
    }
    let turning_points = collapsed
        .windows(3)
        .filter(|w| (w[1] - w[0]) * (w[2] - w[1]) < 0.0)
        .count();
    let nf = n as f64;
    let mean = 2.0 * (nf - 2.0) / 3.0;
    let var = (16.0 * nf - 29.0) / 90.0;
    let statistic = (turning_points as f64 - mean) / var.sqrt();
    Ok(TurningPointTest {
        turning_points,
        effective_len: n,
        statistic,
        reject_iid: statistic.abs() > 1.96,
    })
}

/// Generates a synthetic normalized KPI series: a daily plus weekly
/// sinusoidal profile with small i.i.d. noise, clipped at zero and scaled to
/// peak 1. `Data` adds Pareto-amplitude bursts at Poisson-distributed times,
/// their rate controlled by `burstiness` (expected bursts per day); with
/// `burstiness = 0` the output is identical to the voice generator's.
pub fn generate_synthetic_traffic(
    kind: TrafficKind,
    weeks: usize,
    seed: u64,
    burstiness: f64,
) -> TrafficSeries {
    assert!(weeks >= 1, "weeks must be at least 1");
    assert!(burstiness >= 0.0, "burstiness must be nonnegative");
    let len = weeks * 168;
    let two_pi = std::f64::consts::TAU;

    let mut noise_rng = rng::stream(seed, "traffic/noise");
    let noise = Normal::new(0.0, 0.02).expect("valid noise sigma");
    let mut values: Vec<f64> = (0..len)
        .map(|t| {
            let t = t as f64;
            let daily = 0.30 * (two_pi * (t - 9.0) / 24.0).sin();
            let weekly = 0.12 * (two_pi * (t - 60.0) / 168.0).sin();
            (0.55 + daily + weekly + noise.sample(&mut noise_rng)).max(0.0)
        })
        .collect();

    if kind == TrafficKind::Data && burstiness > 0.0 {
        let mut burst_rng = rng::stream(seed, "traffic/bursts");
        let count = Poisson::new(burstiness * weeks as f64 * 7.0)
            .expect("valid burst rate")
            .sample(&mut burst_rng) as usize;
        let amplitude = Pareto::new(0.15, 1.5).expect("valid pareto");
        for _ in 0..count {
            let at = burst_rng.random_range(0..len);
            let peak = amplitude.sample(&mut burst_rng);
            let width = burst_rng.random_range(1..=3usize);
            for (offset, scale) in (0..width).map(|o| (o, 0.6f64.powi(o as i32))) {
                if at + offset < len {
                    values[at + offset] += peak * scale;
                }
            }
        }
    }

    let max = values.iter().cloned().fold(f64::MIN, f64::max).max(f64::EPSILON);
    for v in &mut values {
        *v /= max;
    }
    TrafficSeries { values, cadence_hours: 1.0, start_offset: 0, kind }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exceedance_closed_forms() {
        // k = 1 collapses to (1-p)^n.
        let e = exceedance_probability(1, 1, 0.5).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
        for n in [2usize, 7, 19] {
            let e = exceedance_probability(n, 1, 0.3).unwrap();
            assert!((e - 0.7f64.powi(n as i32)).abs() < 1e-14);
        }
        // k = n leaves the single term p^n: E = 1 - p^n.
        let e = exceedance_probability(30, 30, 0.9).unwrap();
        let expected = 1.0 - 0.9f64.powi(30);
        assert!((e - expected).abs() < 1e-12, "got {e}, expected {expected}");
        assert!((expected - 0.95761).abs() < 1e-5);
    }

    #[test]
    fn exceedance_rejects_bad_arguments() {
        assert!(matches!(
            exceedance_probability(5, 0, 0.5),
            Err(TrafficError::OrderIndexOutOfRange { .. })
        ));
        assert!(matches!(
            exceedance_probability(5, 6, 0.5),
            Err(TrafficError::OrderIndexOutOfRange { .. })
        ));
        assert!(matches!(
            exceedance_probability(5, 3, 1.0),
            Err(TrafficError::QuantileOutOfRange(_))
        ));
    }

    #[test]
    fn log_space_path_matches_direct_sum() {
        // Same (n, k, p) evaluated with both code paths around the n = 60
        // switchover; scale one n past the boundary by exact halving.
        for &p in &[0.2, 0.5, 0.9] {
            for &(n_small, k_small) in &[(60usize, 30usize), (60, 55), (60, 5)] {
                let direct = binomial_pmf_sum(n_small, 0, k_small - 1, p);
                let logged = {
                    let ln_p = p.ln();
                    let ln_q = (1.0 - p).ln();
                    (0..k_small)
                        .map(|i| {
                            (ln_binomial(n_small as f64, i as f64)
                                + i as f64 * ln_p
                                + (n_small - i) as f64 * ln_q)
                                .exp()
                        })
                        .sum::<f64>()
                };
                assert!((direct - logged).abs() <= 1e-12, "n={n_small} k={k_small} p={p}");
            }
        }
        // Large-n path agrees with a Monte-Carlo-free sanity point: the full
        // sum over all i is 1.
        let total = binomial_pmf_sum(150, 0, 150, 0.37);
        assert!((total - 1.0).abs() < 1e-11);
    }

    #[test]
    fn exceedance_agrees_with_order_statistic_simulation() {
        // Direct simulation of the defining event: draw n samples, take the
        // k-th smallest, compare with the p-quantile.
        let (n, k, p) = (25usize, 22usize, 0.8);
        let trials = 100_000;
        let mut rng = crate::rng::stream(99, "traffic/mc-test");
        let mut hits = 0usize;
        let mut buf = vec![0.0f64; n];
        for _ in 0..trials {
            for v in buf.iter_mut() {
                *v = rng.random::<f64>();
            }
            buf.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if buf[k - 1] > p {
                hits += 1;
            }
        }
        let estimate = hits as f64 / trials as f64;
        let exact = exceedance_probability(n, k, p).unwrap();
        let se = (exact * (1.0 - exact) / trials as f64).sqrt();
        assert!(
            (estimate - exact).abs() <= 3.0 * se,
            "estimate {estimate}, exact {exact}, se {se}"
        );
    }

    #[test]
    fn provisioning_level_scans_the_exact_formula() {
        // Oracle: direct summation of the binomial upper tail per k.
        let shortfall_oracle = |n: usize, k: usize, p: f64| -> f64 {
            let mut c = vec![0.0f64; n + 1];
            c[0] = 1.0;
            for i in 0..n {
                c[i + 1] = c[i] * (n - i) as f64 / (i + 1) as f64;
            }
            (k..=n).map(|i| c[i] * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32)).sum()
        };
        let n = 50;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 * 0.731).sin().abs()).collect();
        let result = select_provisioning_level(&samples, 0.9, 0.05).unwrap();
        assert!(result.attainable);
        // Smallest k with oracle shortfall below risk.
        let expected_k = (1..=n).find(|&k| shortfall_oracle(n, k, 0.9) <= 0.05).unwrap();
        assert_eq!(result.k, expected_k);
        let mut sorted = samples.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(result.level, sorted[expected_k - 1]);
    }

    #[test]
    fn provisioning_falls_back_to_the_largest_order_statistic() {
        // p^n > risk for n = 10, p = 0.9, risk = 0.05: unattainable.
        let samples: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let result = select_provisioning_level(&samples, 0.9, 0.05).unwrap();
        assert_eq!(result.k, 10);
        assert!(!result.attainable);
        assert_eq!(result.level, 9.0);

        // Risk just above p^n makes k = n the smallest qualifying index.
        let risk = 0.9f64.powi(10) + 1e-6;
        let result = select_provisioning_level(&samples, 0.9, risk).unwrap();
        assert_eq!(result.k, 10);
        assert!(result.attainable);
    }

    #[test]
    fn constant_samples_provision_at_the_constant() {
        let samples = vec![0.7; 40];
        let result = select_provisioning_level(&samples, 0.9, 0.1).unwrap();
        assert_eq!(result.level, 0.7);
    }

    #[test]
    fn monotone_series_has_no_turning_points() {
        let series: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let t = turning_point_test(&series).unwrap();
        assert_eq!(t.turning_points, 0);
        assert!(t.statistic.abs() > 1.96);
        assert!(t.reject_iid);
    }

    #[test]
    fn alternating_series_turns_everywhere() {
        let series: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 }).collect();
        let t = turning_point_test(&series).unwrap();
        assert_eq!(t.turning_points, 98);
        assert!(t.reject_iid);
    }

    #[test]
    fn ties_are_collapsed_before_counting() {
        let series = vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 3.0];
        let t = turning_point_test(&series).unwrap();
        assert_eq!(t.effective_len, 4);
        assert_eq!(t.turning_points, 2);
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(matches!(
            turning_point_test(&[1.0, 2.0]),
            Err(TrafficError::SeriesTooShort { .. })
        ));
        // All-equal series collapses below the minimum too.
        assert!(matches!(
            turning_point_test(&[5.0; 10]),
            Err(TrafficError::SeriesTooShort { found: 1, .. })
        ));
    }

    #[test]
    fn turning_point_count_matches_iid_expectation() {
        let n = 100;
        let trials = 2000;
        let mut rng = crate::rng::stream(4, "traffic/tp-mean");
        let mut total = 0.0;
        for _ in 0..trials {
            let series: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            total += turning_point_test(&series).unwrap().turning_points as f64;
        }
        let mean = total / trials as f64;
        let expected = 2.0 * (n as f64 - 2.0) / 3.0;
        let sd = ((16.0 * n as f64 - 29.0) / 90.0).sqrt();
        let se = sd / (trials as f64).sqrt();
        assert!(
            (mean - expected).abs() <= 2.0 * se,
            "mean {mean}, expected {expected}, se {se}"
        );
    }

    #[test]
    fn voice_traffic_is_daily_periodic() {
        let series = generate_synthetic_traffic(TrafficKind::Voice, 4, 11, 0.0);
        assert_eq!(series.len(), 4 * 168);
        assert!(series.values.iter().all(|v| *v >= 0.0 && *v <= 1.0));
        let ac = autocorrelation(&series.values, 24);
        assert!(ac > 0.7, "lag-24 autocorrelation {ac}");
    }

    #[test]
    fn zero_burstiness_data_equals_voice() {
        let voice = generate_synthetic_traffic(TrafficKind::Voice, 2, 5, 0.0);
        let data = generate_synthetic_traffic(TrafficKind::Data, 2, 5, 0.0);
        assert_eq!(voice.values, data.values);
        // Positive burstiness changes the series.
        let bursty = generate_synthetic_traffic(TrafficKind::Data, 2, 5, 2.0);
        assert_ne!(voice.values, bursty.values);
    }

    #[test]
    fn generation_is_deterministic_in_seed() {
        let a = generate_synthetic_traffic(TrafficKind::Data, 3, 42, 1.5);
        let b = generate_synthetic_traffic(TrafficKind::Data, 3, 42, 1.5);
        assert_eq!(a, b);
        let c = generate_synthetic_traffic(TrafficKind::Data, 3, 43, 1.5);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn csv_round_trip() {
        let series = generate_synthetic_traffic(TrafficKind::Voice, 1, 9, 0.0);
        let text = series.to_csv();
        let parsed = TrafficSeries::from_csv(&text, TrafficKind::Voice).unwrap();
        assert_eq!(parsed.values, series.values);
        assert_eq!(parsed.start_offset, 0);

        assert!(matches!(
            TrafficSeries::from_csv("hour,value\n0,abc\n", TrafficKind::Voice),
            Err(TrafficError::Parse { line: 2, .. })
        ));
    }

    fn autocorrelation(values: &[f64], lag: usize) -> f64 {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var: f64 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let cov: f64 = (0..n - lag)
            .map(|i| (values[i] - mean) * (values[i + lag] - mean))
            .sum::<f64>()
            / (n - lag) as f64;
        cov / var
    }
}
