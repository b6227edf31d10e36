//! Gaussian-process regression for traffic forecasting.
//!
//! Covariance functions are assembled from atomic kernels (squared
//! exponential, periodic, white noise) with sum and product combinators, the
//! operations that preserve positive semidefiniteness. Hyperparameters are
//! chosen by grid search over candidate kernels, maximizing the exact
//! marginal log-likelihood; predictions use the exact GP posterior.
//!
//! White terms act as observation noise: they enter the training Gram matrix
//! diagonal and the predictive variance, but not the cross-covariance, so
//! the posterior mean smooths rather than chases noisy samples. The model
//! centers targets on the training mean.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::fmt;

use super::{TrafficError, TrafficSeries};

/// Diagonal regularization added to every training covariance matrix.
pub const JITTER: f64 = 1e-8;

/// Minimum training length for a hyperparameter search. A fixed kernel can
/// be fitted to any nonempty series.
pub const MIN_SEARCH_SAMPLES: usize = 48;

/// A covariance function over scalar inputs (hours).
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `v * exp(-(a-b)^2 / (2 l^2))`
    SquaredExp { variance: f64, length_scale: f64 },
    /// `v * exp(-2 sin^2(pi (a-b) / period) / l^2)`
    Periodic { variance: f64, length_scale: f64, period: f64 },
    /// Observation noise with the given variance; only meaningful inside
    /// top-level sums.
    White { variance: f64 },
    Sum(Box<Kernel>, Box<Kernel>),
    Product(Box<Kernel>, Box<Kernel>),
}

impl Kernel {
    /// Latent (noise-free) covariance between two inputs.
    pub fn latent(&self, a: f64, b: f64) -> f64 {
        match self {
            Kernel::SquaredExp { variance, length_scale } => {
                let r = a - b;
                variance * (-r * r / (2.0 * length_scale * length_scale)).exp()
            }
            Kernel::Periodic { variance, length_scale, period } => {
                let s = (std::f64::consts::PI * (a - b) / period).sin();
                variance * (-2.0 * s * s / (length_scale * length_scale)).exp()
            }
            Kernel::White { .. } => 0.0,
            Kernel::Sum(x, y) => x.latent(a, b) + y.latent(a, b),
            Kernel::Product(x, y) => x.latent(a, b) * y.latent(a, b),
        }
    }

    /// Total observation-noise variance contributed by white terms in sums.
    pub fn noise_variance(&self) -> f64 {
        match self {
            Kernel::White { variance } => *variance,
            Kernel::Sum(x, y) => x.noise_variance() + y.noise_variance(),
            _ => 0.0,
        }
    }

    pub fn plus(self, other: Kernel) -> Kernel {
        Kernel::Sum(Box::new(self), Box::new(other))
    }

    pub fn times(self, other: Kernel) -> Kernel {
        Kernel::Product(Box::new(self), Box::new(other))
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::SquaredExp { variance, length_scale } => {
                write!(f, "se(var={variance:.4e},len={length_scale})")
            }
            Kernel::Periodic { variance, length_scale, period } => {
                write!(f, "per(var={variance:.4e},len={length_scale},period={period})")
            }
            Kernel::White { variance } => write!(f, "white({variance:.4e})"),
            Kernel::Sum(a, b) => write!(f, "{a}+{b}"),
            Kernel::Product(a, b) => write!(f, "({a})*({b})"),
        }
    }
}

/// How to choose the kernel when fitting.
#[derive(Debug, Clone)]
pub enum KernelSpec {
    /// Use exactly this kernel; no search.
    Fixed(Kernel),
    /// Evaluate every candidate and keep the marginal-likelihood maximizer.
    Grid(Vec<Kernel>),
    /// Built-in candidate family for daily/weekly traffic: periodic kernels
    /// with the period left free over {12, 24, 48} h plus a weekly term and
    /// a noise grid scaled by the sample variance, with squared-exponential
    /// fallbacks.
    VoiceDefault,
}

impl KernelSpec {
    fn candidates(&self, values: &[f64]) -> Vec<Kernel> {
        match self {
            KernelSpec::Fixed(k) => vec![k.clone()],
            KernelSpec::Grid(ks) => ks.clone(),
            KernelSpec::VoiceDefault => {
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let s2 = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).max(1e-8);
                let mut out = Vec::new();
                for period in [12.0, 24.0, 48.0] {
                    for noise in [1e-3, 1e-2, 5e-2] {
                        let k = Kernel::Periodic {
                            variance: 0.8 * s2,
                            length_scale: 0.8,
                            period,
                        }
                        .plus(Kernel::Periodic {
                            variance: 0.4 * s2,
                            length_scale: 1.0,
                            period: 168.0,
                        })
                        .plus(Kernel::White { variance: noise * s2 });
                        out.push(k);
                    }
                }
                for length_scale in [24.0, 96.0] {
                    out.push(
                        Kernel::SquaredExp { variance: s2, length_scale }
                            .plus(Kernel::White { variance: 1e-2 * s2 }),
                    );
                }
                out
            }
        }
    }
}

/// A fitted GP: kernel, training data, and factorized covariance.
pub struct GpModel {
    kernel: Kernel,
    train_x: Vec<f64>,
    y_mean: f64,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_marginal: f64,
    train_window: usize,
    cadence: f64,
    scored: Vec<(Kernel, f64)>,
}

impl GpModel {
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    pub fn train_window(&self) -> usize {
        self.train_window
    }

    /// Every evaluated candidate with its marginal log-likelihood.
    pub fn scored_candidates(&self) -> &[(Kernel, f64)] {
        &self.scored
    }

    /// Posterior predictive mean and standard deviation at arbitrary inputs.
    /// The standard deviation includes the observation noise, so the band
    /// covers observations rather than the latent function.
    pub fn predict_at(&self, xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let noise = self.kernel.noise_variance();
        let n = self.train_x.len();
        let mut means = Vec::with_capacity(xs.len());
        let mut stds = Vec::with_capacity(xs.len());
        for &x in xs {
            let kstar = DVector::from_fn(n, |i, _| self.kernel.latent(x, self.train_x[i]));
            let mean = self.y_mean + kstar.dot(&self.alpha);
            let solved = self.chol.solve(&kstar);
            let latent_var = self.kernel.latent(x, x) - kstar.dot(&solved);
            let var = latent_var.max(0.0) + noise;
            means.push(mean);
            stds.push(var.sqrt());
        }
        (means, stds)
    }
}

/// Forecast with pointwise uncertainty.
#[derive(Debug, Clone)]
pub struct GpForecast {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// The fitted covariance function (hyperparameters embedded).
    pub kernel: Kernel,
    pub log_marginal: f64,
    pub train_window: usize,
}

/// Fits a GP to the series. Grid specs require at least
/// [`MIN_SEARCH_SAMPLES`] samples; the candidate maximizing the exact
/// marginal log-likelihood wins (first on ties, deterministically).
pub fn gp_fit(series: &TrafficSeries, spec: &KernelSpec) -> Result<GpModel, TrafficError> {
    let n = series.len();
    if n == 0 {
        return Err(TrafficError::InvalidSeries("empty training series".into()));
    }
    if !matches!(spec, KernelSpec::Fixed(_)) && n < MIN_SEARCH_SAMPLES {
        return Err(TrafficError::TrainWindowTooShort { found: n, needed: MIN_SEARCH_SAMPLES });
    }
    let x: Vec<f64> = (0..n)
        .map(|i| series.start_offset as f64 + i as f64 * series.cadence_hours)
        .collect();
    let y = &series.values;
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let yc = DVector::from_fn(n, |i, _| y[i] - y_mean);

    let candidates = spec.candidates(y);
    let mut scored = Vec::with_capacity(candidates.len());
    let mut best: Option<(Kernel, Cholesky<f64, Dyn>, DVector<f64>, f64)> = None;
    for kernel in candidates {
        let gram = build_gram(&kernel, &x);
        let chol = Cholesky::new(gram).ok_or_else(|| TrafficError::NonPositiveDefinite {
            kernel: kernel.to_string(),
        })?;
        let alpha = chol.solve(&yc);
        let log_det: f64 = (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum();
        let mll = -0.5 * yc.dot(&alpha)
            - log_det
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        scored.push((kernel.clone(), mll));
        if best.as_ref().map_or(true, |(_, _, _, b)| mll > *b) {
            best = Some((kernel, chol, alpha, mll));
        }
    }
    let (kernel, chol, alpha, log_marginal) = best.expect("at least one candidate");
    Ok(GpModel {
        kernel,
        train_x: x,
        y_mean,
        alpha,
        chol,
        log_marginal,
        train_window: n,
        cadence: series.cadence_hours,
        scored,
    })
}

/// Forecasts the `horizon` samples following the training window.
pub fn gp_predict(model: &GpModel, horizon: usize) -> GpForecast {
    let last = *model.train_x.last().expect("nonempty training window");
    let xs: Vec<f64> = (1..=horizon).map(|h| last + h as f64 * model.cadence).collect();
    let (mean, std) = model.predict_at(&xs);
    GpForecast {
        mean,
        std,
        kernel: model.kernel.clone(),
        log_marginal: model.log_marginal,
        train_window: model.train_window,
    }
}

fn build_gram(kernel: &Kernel, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let noise = kernel.noise_variance();
    DMatrix::from_fn(n, n, |i, j| {
        let mut v = kernel.latent(x[i], x[j]);
        if i == j {
            v += noise + JITTER;
        }
        v
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::{generate_synthetic_traffic, TrafficKind};

    fn three_point_series() -> TrafficSeries {
        TrafficSeries {
            values: vec![0.5, 0.2, 0.8],
            cadence_hours: 1.0,
            start_offset: 0,
            kind: TrafficKind::Voice,
        }
    }

    /// 3x3 inverse by cofactor expansion, independent of the Cholesky path.
    fn invert3(k: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let det = k[0][0] * (k[1][1] * k[2][2] - k[1][2] * k[2][1])
            - k[0][1] * (k[1][0] * k[2][2] - k[1][2] * k[2][0])
            + k[0][2] * (k[1][0] * k[2][1] - k[1][1] * k[2][0]);
        let mut inv = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let (a, b, c, d) = (
                    k[(i + 1) % 3][(j + 1) % 3],
                    k[(i + 1) % 3][(j + 2) % 3],
                    k[(i + 2) % 3][(j + 1) % 3],
                    k[(i + 2) % 3][(j + 2) % 3],
                );
                // Transposed cofactor (adjugate) over determinant.
                inv[j][i] = (a * d - b * c) / det;
            }
        }
        inv
    }

    #[test]
    fn posterior_matches_direct_three_by_three_inverse() {
        let kernel = Kernel::SquaredExp { variance: 1.0, length_scale: 1.5 }
            .plus(Kernel::White { variance: 0.1 });
        let series = three_point_series();
        let model = gp_fit(&series, &KernelSpec::Fixed(kernel.clone())).unwrap();

        let xs = [0.0, 1.0, 2.0];
        let ys = [0.5, 0.2, 0.8];
        let y_mean = (0.5 + 0.2 + 0.8) / 3.0;
        let se = |a: f64, b: f64| (-(a - b) * (a - b) / (2.0 * 1.5 * 1.5)).exp();
        let mut k = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                k[i][j] = se(xs[i], xs[j]) + if i == j { 0.1 + JITTER } else { 0.0 };
            }
        }
        let kinv = invert3(k);

        for x_star in [0.5, 1.7, 5.0] {
            let kstar = [se(x_star, 0.0), se(x_star, 1.0), se(x_star, 2.0)];
            let mut mean = y_mean;
            let mut quad = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    mean += kstar[i] * kinv[i][j] * (ys[j] - y_mean);
                    quad += kstar[i] * kinv[i][j] * kstar[j];
                }
            }
            let std = (se(x_star, x_star) - quad + 0.1f64).max(0.0).sqrt();

            let (got_mean, got_std) = model.predict_at(&[x_star]);
            assert!(
                (got_mean[0] - mean).abs() < 1e-10,
                "mean at {x_star}: {} vs {mean}",
                got_mean[0]
            );
            assert!(
                (got_std[0] - std).abs() < 1e-10,
                "std at {x_star}: {} vs {std}",
                got_std[0]
            );
        }
    }

    #[test]
    fn near_noiseless_gp_interpolates_training_points() {
        let kernel = Kernel::SquaredExp { variance: 1.0, length_scale: 1.5 }
            .plus(Kernel::White { variance: 1e-10 });
        let series = three_point_series();
        let model = gp_fit(&series, &KernelSpec::Fixed(kernel)).unwrap();
        let (mean, _) = model.predict_at(&[0.0, 1.0, 2.0]);
        for (got, want) in mean.iter().zip(&series.values) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn grid_search_selects_the_true_period() {
        let mut series = generate_synthetic_traffic(TrafficKind::Voice, 1, 3, 0.0);
        series.values = (0..168)
            .map(|t| 0.5 + 0.4 * (std::f64::consts::TAU * t as f64 / 24.0).sin())
            .collect();
        let grid: Vec<Kernel> = [16.0, 24.0, 32.0]
            .iter()
            .map(|&period| {
                Kernel::Periodic { variance: 0.1, length_scale: 1.0, period }
                    .plus(Kernel::White { variance: 1e-3 })
            })
            .collect();
        let model = gp_fit(&series, &KernelSpec::Grid(grid)).unwrap();
        match model.kernel() {
            Kernel::Sum(a, _) => match a.as_ref() {
                Kernel::Periodic { period, .. } => assert_eq!(*period, 24.0),
                other => panic!("unexpected kernel {other}"),
            },
            other => panic!("unexpected kernel {other}"),
        }
        // The winner's likelihood dominates the whole grid by construction.
        for (_, mll) in model.scored_candidates() {
            assert!(model.log_marginal() >= *mll);
        }
    }

    #[test]
    fn search_requires_enough_samples() {
        let series = three_point_series();
        assert!(matches!(
            gp_fit(&series, &KernelSpec::VoiceDefault),
            Err(TrafficError::TrainWindowTooShort { found: 3, .. })
        ));
    }

    #[test]
    fn posterior_std_never_exceeds_prior_std() {
        let series = generate_synthetic_traffic(TrafficKind::Voice, 2, 17, 0.0);
        let model = gp_fit(&series, &KernelSpec::VoiceDefault).unwrap();
        let xs: Vec<f64> = (0..series.len()).map(|i| i as f64).collect();
        let (_, stds) = model.predict_at(&xs);
        let noise = model.kernel().noise_variance();
        for (i, std) in stds.iter().enumerate() {
            let prior = (model.kernel().latent(xs[i], xs[i]) + noise).sqrt();
            assert!(*std <= prior + 1e-12, "std {std} above prior {prior} at {i}");
        }
    }

    #[test]
    fn voice_forecast_covers_held_out_week() {
        let series = generate_synthetic_traffic(TrafficKind::Voice, 3, 8, 0.0);
        let train = TrafficSeries {
            values: series.values[..336].to_vec(),
            ..series.clone()
        };
        let model = gp_fit(&train, &KernelSpec::VoiceDefault).unwrap();
        let forecast = gp_predict(&model, 168);
        let held_out = &series.values[336..];
        let covered = held_out
            .iter()
            .zip(forecast.mean.iter().zip(&forecast.std))
            .filter(|(y, (m, s))| (*y - *m).abs() <= 1.96 * *s)
            .count();
        let coverage = covered as f64 / held_out.len() as f64;
        assert!(coverage >= 0.8, "coverage {coverage}");
        assert!(forecast.std.iter().all(|s| *s > 0.0));
    }
}
