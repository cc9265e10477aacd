//! Levy-driven Ornstein-Uhlenbeck drift coupled to a geometric Brownian
//! motion price.
//!
//! The drift follows `dmu = theta (mu_l - mu) dt + dL` and the price
//! `dS = mu S dt + sigma S dW`, with `L` a symmetric, zero-mean, finite
//! variance Levy process independent of `W`. Everything here is expressed in
//! the model's own time unit; `dt` is only used by the simulators and by the
//! discrete autocorrelation laws.
//!
//! Closed forms are plain functions. The simulators produce [`PathEnsemble`]s
//! whose moments serve as independent checks of the closed forms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;

/// Compound Poisson jump driver with symmetric Laplace sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec<F> {
    /// Jump arrival rate per unit time.
    pub rate: F,
    /// Laplace scale `b`; each jump has variance `2 b^2`.
    pub scale: F,
}

impl<F: Float> JumpSpec<F> {
    /// Variance contributed per unit time, `2 rate b^2`.
    pub fn variance_rate(&self) -> F {
        F::lit(2.0) * self.rate * self.scale * self.scale
    }
}

/// Parameter bundle for the coupled drift/price model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuGbmParams<F> {
    /// Mean-reversion speed of the drift.
    pub theta: F,
    /// Long-run drift level `mu_l`.
    #[serde(default)]
    pub long_run_drift: F,
    /// Per-unit-time variance of the Levy driver, `sigma_L^2`.
    pub levy_variance: F,
    /// Concrete jump law. When absent the driver is Brownian with the same
    /// variance rate.
    #[serde(default)]
    pub jumps: Option<JumpSpec<F>>,
    /// GBM volatility `sigma`.
    pub volatility: F,
    /// Correlation between the metric and contemporaneous price changes.
    pub correlation: F,
    /// Linear scale from the metric to drift units.
    pub impact_scale: F,
    /// Simulation step.
    pub dt: F,
}

impl<F: Float> OuGbmParams<F> {
    pub fn new(theta: F, levy_variance: F, volatility: F) -> Self {
        Self {
            theta,
            long_run_drift: F::zero(),
            levy_variance,
            jumps: None,
            volatility,
            correlation: F::one(),
            impact_scale: F::one(),
            dt: F::lit(0.01),
        }
    }

    pub fn with_dt(mut self, dt: F) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_coupling(mut self, correlation: F, impact_scale: F) -> Self {
        self.correlation = correlation;
        self.impact_scale = impact_scale;
        self
    }

    pub fn with_long_run_drift(mut self, mu_l: F) -> Self {
        self.long_run_drift = mu_l;
        self
    }

    /// Attach a Laplace compound Poisson driver with the given arrival rate,
    /// choosing the jump scale so that `2 rate b^2 = levy_variance`.
    pub fn with_laplace_jumps(mut self, rate: F) -> Self {
        if self.levy_variance > F::zero() && rate > F::zero() {
            let scale = (self.levy_variance / (F::lit(2.0) * rate)).sqrt();
            self.jumps = Some(JumpSpec { rate, scale });
        } else {
            self.jumps = None;
        }
        self
    }

    /// Composite coupling `rho * k`.
    pub fn coupling(&self) -> F {
        self.correlation * self.impact_scale
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.theta > F::zero()) || !self.theta.is_finite() {
            return bad("theta must be positive and finite");
        }
        if !(self.levy_variance >= F::zero()) {
            return bad("levy_variance must be non-negative");
        }
        if !(self.volatility >= F::zero()) {
            return bad("volatility must be non-negative");
        }
        if !(self.dt > F::zero()) {
            return bad("dt must be positive");
        }
        if !self.long_run_drift.is_finite() || !self.coupling().is_finite() {
            return bad("drift level and coupling must be finite");
        }
        if let Some(j) = &self.jumps {
            if !(j.rate > F::zero()) || !(j.scale > F::zero()) {
                return bad("jump rate and scale must be positive");
            }
            let implied = j.variance_rate();
            let tol = F::lit(1e-9) * (F::one() + self.levy_variance);
            if (implied - self.levy_variance).abs() > tol {
                return Err(Error::Config(format!(
                    "jump spec implies levy variance {implied}, params say {}",
                    self.levy_variance
                )));
            }
        }
        Ok(())
    }
}

/// Initial shock: a metric value `ofi0` mapped to an initial drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockState<F> {
    pub ofi0: F,
    pub initial_drift: F,
}

impl<F: Float> ShockState<F> {
    pub fn new(ofi0: F, params: &OuGbmParams<F>) -> Self {
        Self {
            ofi0,
            initial_drift: ofi0 * params.coupling(),
        }
    }
}

/// `1 - e^{-x}` without cancellation for small `x`.
#[inline]
fn one_minus_exp_neg<F: Float>(x: F) -> F {
    -(-x).exp_m1()
}

/// Which autocorrelation law to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AcfForm {
    /// `e^{-theta k dt}`.
    #[default]
    Exact,
    /// First-order expansion `(1 - theta dt)^k`.
    FirstOrder,
}

/// Lag-`k` autocorrelation of a stationary O-U process sampled every `dt`.
pub fn ou_acf<F: Float>(theta: F, dt: F, lag: usize, form: AcfForm) -> F {
    let k = F::from_usize_lossy(lag);
    match form {
        AcfForm::Exact => (-theta * k * dt).exp(),
        AcfForm::FirstOrder => (F::one() - theta * dt).powf(k),
    }
}

/// Lag-`k` autocorrelation of non-overlapping `p`-step sums of the process.
pub fn aggregated_ou_acf<F: Float>(theta: F, p: usize, lag: usize, dt: F) -> F {
    let pk = F::from_usize_lossy(p) * F::from_usize_lossy(lag);
    (-theta * pk * dt).exp()
}

/// Expected cumulative sum `E[S_n] = sum_{t=0}^{n} E[x_t]` for a shock of
/// size `ofi` decaying at rate `theta` toward `long_run`.
///
/// `n` may be `F::infinity()`; with a zero long-run level the sum converges.
pub fn expected_cumsum<F: Float>(ofi: F, theta: F, n: F, long_run: F) -> F {
    let denom = one_minus_exp_neg(theta);
    if n.is_infinite() {
        let geometric = (ofi - long_run) / denom;
        return if long_run == F::zero() {
            geometric
        } else {
            long_run * F::infinity()
        };
    }
    let terms = n + F::one();
    terms * long_run + (ofi - long_run) * one_minus_exp_neg(theta * terms) / denom
}

/// Aggregate drift contribution `ofi rho k (1 - e^{-theta t}) / (1 - e^{-theta})`.
/// `t` may be infinite.
pub fn total_drift_impact<F: Float>(ofi: F, rho: F, k: F, theta: F, t: F) -> F {
    let scale = ofi * rho * k / one_minus_exp_neg(theta);
    if t.is_infinite() {
        scale
    } else {
        scale * one_minus_exp_neg(theta * t)
    }
}

/// Mean and variance of the drift at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftMoments<F> {
    pub mean: F,
    pub variance: F,
}

pub fn drift_moments<F: Float>(mu0: F, theta: F, levy_variance: F, t: F) -> DriftMoments<F> {
    let two_theta = F::lit(2.0) * theta;
    let variance = if t.is_infinite() {
        levy_variance / two_theta
    } else {
        levy_variance / two_theta * one_minus_exp_neg(two_theta * t)
    };
    let mean = if t.is_infinite() {
        F::zero()
    } else {
        mu0 * (-theta * t).exp()
    };
    DriftMoments { mean, variance }
}

/// Expected log-return `mu0 (1 - e^{-theta t}) / theta - sigma^2 t / 2`.
pub fn logret_mean<F: Float>(mu0: F, theta: F, sigma: F, t: F) -> F {
    mu0 * one_minus_exp_neg(theta * t) / theta - sigma * sigma * t / F::lit(2.0)
}

/// `int_0^t (1 - e^{-theta s})^2 ds`, evaluated by series when `theta t` is
/// small enough for the closed form to cancel badly.
fn squared_kernel_integral<F: Float>(theta: F, t: F) -> F {
    let x = theta * t;
    if x < F::lit(0.1) {
        // x^k coefficient: (-1)^{k+1} (2^{k-1} - 2) / k!, zero for k <= 2.
        let mut sum = F::zero();
        let mut power = x * x; // x^2
        let mut factorial = F::lit(2.0);
        let mut two_pow = F::lit(2.0); // 2^{k-1} at k = 2
        for k in 3..30 {
            let kf = F::from_usize_lossy(k);
            power = power * x;
            factorial = factorial * kf;
            two_pow = two_pow * F::lit(2.0);
            let sign = if k % 2 == 1 { F::one() } else { -F::one() };
            let term = sign * (two_pow - F::lit(2.0)) / factorial * power;
            sum = sum + term;
            if term.abs() <= F::epsilon() * sum.abs() {
                break;
            }
        }
        sum / theta
    } else {
        t - F::lit(2.0) / theta * one_minus_exp_neg(x)
            + one_minus_exp_neg(F::lit(2.0) * x) / (F::lit(2.0) * theta)
    }
}

/// Log-return variance
/// `sigma^2 t + sigma_L^2/theta^2 [t - 2/theta (1 - e^{-theta t}) + 1/(2 theta) (1 - e^{-2 theta t})]`.
pub fn logret_var<F: Float>(sigma: F, levy_variance: F, theta: F, t: F) -> F {
    sigma * sigma * t + levy_variance / (theta * theta) * squared_kernel_integral(theta, t)
}

pub fn logret_std<F: Float>(sigma: F, levy_variance: F, theta: F, t: F) -> F {
    logret_var(sigma, levy_variance, theta, t).sqrt()
}

/// Expected log-return over its standard deviation. `QS(0)` is its limit, 0.
pub fn quasi_sharpe<F: Float>(mu0: F, theta: F, sigma: F, levy_variance: F, t: F) -> Result<F> {
    if t < F::zero() || t.is_nan() {
        return Err(Error::Numerical(format!("quasi-Sharpe undefined for t = {t}")));
    }
    if t == F::zero() {
        return Ok(F::zero());
    }
    let var = logret_var(sigma, levy_variance, theta, t);
    if !(var > F::zero()) {
        return Err(Error::ZeroVariance(
            "log-return variance vanishes (sigma = sigma_L = 0)".into(),
        ));
    }
    Ok(logret_mean(mu0, theta, sigma, t) / var.sqrt())
}

/// Location and value of the maximum of the expected log-return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogretPeak<F> {
    pub t_star: F,
    pub max: F,
}

pub fn logret_mean_argmax<F: Float>(mu0: F, theta: F, sigma: F) -> Result<LogretPeak<F>> {
    let half_var = sigma * sigma / F::lit(2.0);
    if sigma == F::zero() {
        return Err(Error::NoInteriorMaximum(
            "sigma = 0: expected log-return saturates monotonically".into(),
        ));
    }
    if !(mu0 > half_var) {
        return Err(Error::NoInteriorMaximum(format!(
            "initial drift {mu0} must exceed sigma^2/2 = {half_var}"
        )));
    }
    let ratio = half_var / mu0;
    let t_star = -ratio.ln() / theta;
    let max = mu0 / theta + half_var / theta * (ratio.ln() - F::one());
    Ok(LogretPeak { t_star, max })
}

/// Time discretisation for the simulators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Explicit Euler: `mu += -theta (mu - mu_l) dt + dL`, log price driven by
    /// the drift at the start of the step.
    #[default]
    Euler,
    /// Exact transition of the linear drift: jumps decay from their arrival
    /// time and the drift integral over each step is taken in closed form.
    Exact,
}

/// Ensemble dimensions and seeding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Keep every `record_stride`-th step (step 0 always kept).
    pub record_stride: usize,
}

impl SimSpec {
    pub fn new(n_steps: usize, n_paths: usize, seed: u64) -> Self {
        Self {
            n_steps,
            n_paths,
            seed,
            record_stride: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    fn recorded_steps(&self) -> Vec<usize> {
        (0..=self.n_steps).step_by(self.record_stride.max(1)).collect()
    }
}

/// Recorded Monte Carlo paths, path-major: value of path `p` at record `r`
/// lives at `p * times.len() + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble<F> {
    pub seed: u64,
    pub dt: F,
    pub n_paths: usize,
    pub steps: Vec<usize>,
    pub times: Vec<F>,
    pub drift: Vec<F>,
    /// `ln(S_t / S_0)`; empty for drift-only simulations.
    pub log_return: Vec<F>,
}

/// Sample mean, sample variance and their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleMoments<F> {
    pub mean: F,
    pub variance: F,
    pub mean_se: F,
    pub variance_se: F,
    pub n: usize,
}

impl<F: Float> EnsembleMoments<F> {
    fn from_samples(xs: impl Iterator<Item = F> + Clone) -> Self {
        let n = xs.clone().count();
        let nf = F::from_usize_lossy(n);
        let mean = xs.clone().sum::<F>() / nf;
        let (mut m2, mut m4) = (F::zero(), F::zero());
        for x in xs {
            let d = x - mean;
            let d2 = d * d;
            m2 = m2 + d2;
            m4 = m4 + d2 * d2;
        }
        let variance = m2 / (nf - F::one());
        let pop_var = m2 / nf;
        let m4 = m4 / nf;
        Self {
            mean,
            variance,
            mean_se: (variance / nf).sqrt(),
            variance_se: ((m4 - pop_var * pop_var).max(F::zero()) / nf).sqrt(),
            n,
        }
    }
}

impl<F: Float> PathEnsemble<F> {
    pub fn n_records(&self) -> usize {
        self.times.len()
    }

    /// Index of the record closest to time `t`.
    pub fn record_at(&self, t: F) -> Option<usize> {
        self.times
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (*a.1 - t)
                    .abs()
                    .partial_cmp(&(*b.1 - t).abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|(i, _)| i)
    }

    fn column<'a>(&'a self, data: &'a [F], record: usize) -> impl Iterator<Item = F> + Clone + 'a {
        let width = self.n_records();
        (0..self.n_paths).map(move |p| data[p * width + record])
    }

    pub fn drift_path(&self, path: usize) -> &[F] {
        let w = self.n_records();
        &self.drift[path * w..(path + 1) * w]
    }

    pub fn drift_moments(&self, record: usize) -> EnsembleMoments<F> {
        EnsembleMoments::from_samples(self.column(&self.drift, record))
    }

    pub fn log_return_moments(&self, record: usize) -> Option<EnsembleMoments<F>> {
        if self.log_return.is_empty() {
            return None;
        }
        Some(EnsembleMoments::from_samples(
            self.column(&self.log_return, record),
        ))
    }
}

/// Per-path random source. Each path owns a ChaCha stream keyed by
/// `(seed, path index)`, so results do not depend on how paths are split
/// across threads.
fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn laplace(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    if rng.random::<bool>() {
        scale * e
    } else {
        -scale * e
    }
}

/// Increments of the Levy driver over one step, in `f64`.
struct Driver {
    jumps: Option<(f64, f64)>,
    levy_variance: f64,
    next_jump: f64,
}

impl Driver {
    fn new<F: Float>(params: &OuGbmParams<F>, rng: &mut ChaCha8Rng) -> Self {
        let jumps = params.jumps.map(|j| (j.rate.as_f64(), j.scale.as_f64()));
        let mut d = Self {
            jumps,
            levy_variance: params.levy_variance.as_f64(),
            next_jump: f64::INFINITY,
        };
        if let Some((rate, _)) = d.jumps {
            let w: f64 = Exp1.sample(rng);
            d.next_jump = w / rate;
        }
        d
    }

    /// Visit each jump `(arrival time, size)` in `(start, end]`.
    fn jumps_in(&mut self, end: f64, rng: &mut ChaCha8Rng, mut visit: impl FnMut(f64, f64)) {
        let Some((rate, scale)) = self.jumps else {
            return;
        };
        while self.next_jump <= end {
            let size = laplace(rng, scale);
            visit(self.next_jump, size);
            let w: f64 = Exp1.sample(rng);
            self.next_jump += w / rate;
        }
    }
}

/// Advance one path, recording drift (and optionally log-return) at the
/// requested steps.
#[allow(clippy::too_many_arguments)]
fn run_path(
    params: &OuGbmParams<f64>,
    mu0: f64,
    spec: &SimSpec,
    scheme: Scheme,
    path: usize,
    with_price: bool,
    drift_out: &mut [f64],
    ret_out: &mut [f64],
) {
    let mut rng = path_rng(spec.seed, path);
    let mut driver = Driver::new(params, &mut rng);
    let theta = params.theta;
    let dt = params.dt;
    let mu_l = params.long_run_drift;
    let sigma = params.volatility;
    let sqrt_dt = dt.sqrt();
    let decay = (-theta * dt).exp();
    let integral_factor = -(-theta * dt).exp_m1() / theta;

    // Exact Gaussian transition for a Brownian driver: joint law of the drift
    // increment and its step integral.
    let gauss = if driver.jumps.is_none() && driver.levy_variance > 0.0 {
        let s2 = driver.levy_variance;
        let var_m = s2 * -(-2.0 * theta * dt).exp_m1() / (2.0 * theta);
        let var_g = s2 / (theta * theta) * squared_kernel_integral(theta, dt);
        let cov = s2 / theta * (integral_factor - -(-2.0 * theta * dt).exp_m1() / (2.0 * theta));
        let l11 = var_m.sqrt();
        let l21 = if l11 > 0.0 { cov / l11 } else { 0.0 };
        let l22 = (var_g - l21 * l21).max(0.0).sqrt();
        Some((l11, l21, l22))
    } else {
        None
    };

    let stride = spec.record_stride.max(1);
    let mut mu = mu0;
    let mut log_ret = 0.0;
    drift_out[0] = mu;
    if with_price {
        ret_out[0] = 0.0;
    }
    let mut rec = 1;
    for step in 0..spec.n_steps {
        let t_start = step as f64 * dt;
        let t_end = t_start + dt;
        match scheme {
            Scheme::Euler => {
                let mut dl = 0.0;
                driver.jumps_in(t_end, &mut rng, |_, size| dl += size);
                if driver.jumps.is_none() && driver.levy_variance > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    dl += (driver.levy_variance * dt).sqrt() * z;
                }
                if with_price {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    log_ret += (mu - 0.5 * sigma * sigma) * dt + sigma * sqrt_dt * z;
                }
                mu += theta * (mu_l - mu) * dt + dl;
            }
            Scheme::Exact => {
                let mut integral = mu_l * dt + (mu - mu_l) * integral_factor;
                let mut next = mu_l + (mu - mu_l) * decay;
                driver.jumps_in(t_end, &mut rng, |at, size| {
                    let tail = t_end - at;
                    next += size * (-theta * tail).exp();
                    integral += size * -(-theta * tail).exp_m1() / theta;
                });
                if let Some((l11, l21, l22)) = gauss {
                    let z1: f64 = StandardNormal.sample(&mut rng);
                    let z2: f64 = StandardNormal.sample(&mut rng);
                    next += l11 * z1;
                    integral += l21 * z1 + l22 * z2;
                }
                if with_price {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    log_ret += integral - 0.5 * sigma * sigma * dt + sigma * sqrt_dt * z;
                }
                mu = next;
            }
        }
        if (step + 1) % stride == 0 {
            drift_out[rec] = mu;
            if with_price {
                ret_out[rec] = log_ret;
            }
            rec += 1;
        }
    }
}

fn simulate<F: Float>(
    params: &OuGbmParams<F>,
    mu0: F,
    spec: &SimSpec,
    scheme: Scheme,
    with_price: bool,
    stability_limit: f64,
) -> Result<PathEnsemble<F>> {
    params.validate()?;
    if spec.n_paths == 0 || spec.n_steps == 0 {
        return Err(Error::Config("n_paths and n_steps must be positive".into()));
    }
    let product = (params.theta * params.dt).as_f64();
    if product >= stability_limit {
        return Err(Error::Unstable {
            product,
            limit: stability_limit,
        });
    }
    let p64 = OuGbmParams {
        theta: params.theta.as_f64(),
        long_run_drift: params.long_run_drift.as_f64(),
        levy_variance: params.levy_variance.as_f64(),
        jumps: params.jumps.map(|j| JumpSpec {
            rate: j.rate.as_f64(),
            scale: j.scale.as_f64(),
        }),
        volatility: params.volatility.as_f64(),
        correlation: params.correlation.as_f64(),
        impact_scale: params.impact_scale.as_f64(),
        dt: params.dt.as_f64(),
    };
    let steps = spec.recorded_steps();
    let width = steps.len();
    let mu0 = mu0.as_f64();

    let mut drift = vec![0.0f64; spec.n_paths * width];
    let mut ret = if with_price {
        vec![0.0f64; spec.n_paths * width]
    } else {
        Vec::new()
    };
    if with_price {
        drift
            .par_chunks_mut(width)
            .zip(ret.par_chunks_mut(width))
            .enumerate()
            .for_each(|(p, (d, r))| run_path(&p64, mu0, spec, scheme, p, true, d, r));
    } else {
        drift
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(p, d)| run_path(&p64, mu0, spec, scheme, p, false, d, &mut []));
    }

    let dt = params.dt;
    Ok(PathEnsemble {
        seed: spec.seed,
        dt,
        n_paths: spec.n_paths,
        times: steps.iter().map(|&s| F::from_usize_lossy(s) * dt).collect(),
        steps,
        drift: drift.into_iter().map(F::lit).collect(),
        log_return: ret.into_iter().map(F::lit).collect(),
    })
}

/// Simulate the drift process alone. Explicit Euler requires `theta dt < 1`.
pub fn simulate_ou<F: Float>(
    params: &OuGbmParams<F>,
    mu0: F,
    spec: &SimSpec,
    scheme: Scheme,
) -> Result<PathEnsemble<F>> {
    simulate(params, mu0, spec, scheme, false, 1.0)
}

/// Simulate drift and log-return jointly, with `L` and `W` independent.
/// Requires `theta dt < 0.5`.
pub fn simulate_coupled<F: Float>(
    params: &OuGbmParams<F>,
    mu0: F,
    spec: &SimSpec,
    scheme: Scheme,
) -> Result<PathEnsemble<F>> {
    simulate(params, mu0, spec, scheme, true, 0.5)
}
