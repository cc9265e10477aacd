//! L1-penalised least squares by cyclic coordinate descent with
//! time-contiguous k-fold cross-validation.
//!
//! Fits run on sufficient statistics (centred cross-products), so folds can
//! be combined without revisiting rows and held-out errors cost `O(p^2)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::float::Float;

/// Row-major design matrix with a target vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    pub names: Vec<String>,
    features: Vec<F>,
    target: Vec<F>,
    n_cols: usize,
}

/// Per-column location and scale used to standardise features.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardization<F> {
    pub mean: Vec<F>,
    pub std: Vec<F>,
}

impl<F: Float> Dataset<F> {
    pub fn new(names: Vec<String>, features: Vec<F>, target: Vec<F>) -> Result<Self> {
        let n_cols = names.len();
        if n_cols == 0 {
            return Err(Error::Config("dataset needs at least one feature".into()));
        }
        if features.len() != n_cols * target.len() {
            return Err(Error::Data(format!(
                "{} feature values for {} rows of {} columns",
                features.len(),
                target.len(),
                n_cols
            )));
        }
        if features.iter().chain(&target).any(|v| !v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(Self {
            names,
            features,
            target,
            n_cols,
        })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<F>], target: Vec<F>) -> Result<Self> {
        if rows.iter().any(|r| r.len() != names.len()) {
            return Err(Error::Data("row arity does not match column names".into()));
        }
        Self::new(names, rows.concat(), target)
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.features[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn target(&self) -> &[F] {
        &self.target
    }

    pub fn features(&self) -> &[F] {
        &self.features
    }

    pub fn column(&self, j: usize) -> Vec<F> {
        (0..self.n_rows()).map(|i| self.row(i)[j]).collect()
    }

    /// Rows `range`, as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            names: self.names.clone(),
            features: self.features[range.start * self.n_cols..range.end * self.n_cols].to_vec(),
            target: self.target[range].to_vec(),
            n_cols: self.n_cols,
        }
    }

    pub fn with_target(&self, target: Vec<F>) -> Result<Self> {
        Self::new(self.names.clone(), self.features.clone(), target)
    }

    pub fn standardization(&self) -> Standardization<F> {
        let m = Moments::from_dataset(self, 0..self.n_rows());
        Standardization {
            mean: m.mean_x.iter().map(|&v| F::lit(v)).collect(),
            std: (0..self.n_cols)
                .map(|j| F::lit((m.cxx[j * self.n_cols + j] / m.n as f64).sqrt()))
                .collect(),
        }
    }
}

/// Centred first and second moments of a block of rows. Blocks merge
/// exactly, so fold statistics can be combined into training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean_x: Vec<f64>,
    pub mean_y: f64,
    /// Centred cross-products of features, row-major `p x p`.
    pub cxx: Vec<f64>,
    pub cxy: Vec<f64>,
    pub cyy: f64,
}

impl Moments {
    pub fn empty(p: usize) -> Self {
        Self {
            n: 0,
            mean_x: vec![0.0; p],
            mean_y: 0.0,
            cxx: vec![0.0; p * p],
            cxy: vec![0.0; p],
            cyy: 0.0,
        }
    }

    pub fn from_dataset<F: Float>(data: &Dataset<F>, rows: std::ops::Range<usize>) -> Self {
        let p = data.n_cols();
        let mut m = Self::empty(p);
        if rows.is_empty() {
            return m;
        }
        let n = rows.len() as f64;
        for i in rows.clone() {
            for (j, v) in data.row(i).iter().enumerate() {
                m.mean_x[j] += v.as_f64();
            }
            m.mean_y += data.target[i].as_f64();
        }
        m.mean_x.iter_mut().for_each(|v| *v /= n);
        m.mean_y /= n;
        let mut dx = vec![0.0; p];
        for i in rows.clone() {
            for (j, v) in data.row(i).iter().enumerate() {
                dx[j] = v.as_f64() - m.mean_x[j];
            }
            let dy = data.target[i].as_f64() - m.mean_y;
            for j in 0..p {
                for k in 0..p {
                    m.cxx[j * p + k] += dx[j] * dx[k];
                }
                m.cxy[j] += dx[j] * dy;
            }
            m.cyy += dy * dy;
        }
        m.n = rows.len();
        m
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.n == 0 {
            return other.clone();
        }
        if other.n == 0 {
            return self.clone();
        }
        let p = self.mean_x.len();
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let dx: Vec<f64> = (0..p).map(|j| other.mean_x[j] - self.mean_x[j]).collect();
        let dy = other.mean_y - self.mean_y;
        let w = na * nb / n;
        let mut m = Self::empty(p);
        m.n = self.n + other.n;
        for j in 0..p {
            m.mean_x[j] = self.mean_x[j] + dx[j] * nb / n;
            for k in 0..p {
                m.cxx[j * p + k] = self.cxx[j * p + k] + other.cxx[j * p + k] + w * dx[j] * dx[k];
            }
            m.cxy[j] = self.cxy[j] + other.cxy[j] + w * dx[j] * dy;
        }
        m.mean_y = self.mean_y + dy * nb / n;
        m.cyy = self.cyy + other.cyy + w * dy * dy;
        m
    }

    /// Sum of squared residuals of `y - intercept - x.beta` over the block.
    pub fn sse(&self, beta: &[f64], intercept: f64) -> f64 {
        let p = beta.len();
        let mut quad = 0.0;
        for j in 0..p {
            for k in 0..p {
                quad += beta[j] * self.cxx[j * p + k] * beta[k];
            }
        }
        let lin: f64 = (0..p).map(|j| beta[j] * self.cxy[j]).sum();
        let offset = self.mean_y - intercept - (0..p).map(|j| beta[j] * self.mean_x[j]).sum::<f64>();
        (self.cyy - 2.0 * lin + quad).max(0.0) + self.n as f64 * offset * offset
    }

    /// Smallest penalty at which every standardised coefficient is zero.
    pub fn lambda_max(&self) -> f64 {
        let n = self.n as f64;
        let p = self.mean_x.len();
        (0..p)
            .filter_map(|j| {
                let var = self.cxx[j * p + j] / n;
                (var > 0.0).then(|| (self.cxy[j] / n / var.sqrt()).abs())
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LassoOptions {
    /// Stop when the largest coordinate update (standardised scale) falls
    /// below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoFit<F> {
    pub names: Vec<String>,
    /// Coefficients on the original feature scale.
    pub coefficients: Vec<F>,
    pub intercept: F,
    pub lambda: F,
    pub iterations: usize,
    pub last_update: F,
    pub converged: bool,
    /// Objective value after each sweep.
    pub objective: Vec<F>,
}

impl<F: Float> LassoFit<F> {
    pub fn predict_row(&self, row: &[F]) -> Result<F> {
        if row.len() != self.coefficients.len() {
            return Err(Error::Data(format!(
                "row has {} features, fit has {}",
                row.len(),
                self.coefficients.len()
            )));
        }
        Ok(self
            .coefficients
            .iter()
            .zip(row)
            .fold(self.intercept, |acc, (&b, &x)| acc + b * x))
    }

    pub fn l1_norm(&self) -> F {
        self.coefficients.iter().map(|b| b.abs()).sum()
    }
}

/// Predictions for every row of a dataset.
pub fn predict<F: Float>(fit: &LassoFit<F>, data: &Dataset<F>) -> Result<Vec<F>> {
    (0..data.n_rows()).map(|i| fit.predict_row(data.row(i))).collect()
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

struct RawFit {
    beta: Vec<f64>,
    intercept: f64,
    iterations: usize,
    last_update: f64,
    converged: bool,
    objective: Vec<f64>,
}

/// Coordinate descent on the standardised problem described by `m`,
/// optionally warm-started from standardised coefficients.
fn fit_moments(
    m: &Moments,
    lambda: f64,
    opts: &LassoOptions,
    warm: Option<&[f64]>,
) -> Result<(RawFit, Vec<f64>)> {
    let p = m.mean_x.len();
    if m.n == 0 {
        return Err(Error::EmptyDataset("no rows to fit".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!(
            "penalty must be non-negative, got {lambda}"
        )));
    }
    let n = m.n as f64;
    let scale: Vec<f64> = (0..p).map(|j| (m.cxx[j * p + j] / n).sqrt()).collect();
    let active: Vec<bool> = scale.iter().map(|&s| s > 0.0 && s.is_finite()).collect();
    // Standardised Gram matrix and correlations with the centred target.
    let mut gram = vec![0.0; p * p];
    let mut c = vec![0.0; p];
    for j in 0..p {
        if !active[j] {
            continue;
        }
        for k in 0..p {
            if active[k] {
                gram[j * p + k] = m.cxx[j * p + k] / n / (scale[j] * scale[k]);
            }
        }
        gram[j * p + j] = 1.0;
        c[j] = m.cxy[j] / n / scale[j];
    }
    let yy = m.cyy / n;
    let objective = |b: &[f64]| {
        let mut quad = 0.0;
        for j in 0..p {
            for k in 0..p {
                quad += b[j] * gram[j * p + k] * b[k];
            }
        }
        let lin: f64 = b.iter().zip(&c).map(|(b, c)| b * c).sum();
        0.5 * (yy - 2.0 * lin + quad) + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
    };

    let mut b = match warm {
        Some(w) => w.to_vec(),
        None => vec![0.0; p],
    };
    let mut trace = Vec::new();
    let mut last_update = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        last_update = 0.0f64;
        for j in 0..p {
            if !active[j] {
                b[j] = 0.0;
                continue;
            }
            let partial: f64 = (0..p).filter(|&k| k != j).map(|k| gram[j * p + k] * b[k]).sum();
            let new = soft_threshold(c[j] - partial, lambda);
            last_update = last_update.max((new - b[j]).abs());
            b[j] = new;
        }
        trace.push(objective(&b));
        if last_update < opts.tol {
            converged = true;
            break;
        }
    }
    let beta: Vec<f64> = (0..p)
        .map(|j| if active[j] { b[j] / scale[j] } else { 0.0 })
        .collect();
    let intercept = m.mean_y - (0..p).map(|j| beta[j] * m.mean_x[j]).sum::<f64>();
    Ok((
        RawFit {
            beta,
            intercept,
            iterations,
            last_update,
            converged,
            objective: trace,
        },
        b,
    ))
}

fn to_fit<F: Float>(raw: RawFit, names: &[String], lambda: f64) -> LassoFit<F> {
    LassoFit {
        names: names.to_vec(),
        coefficients: raw.beta.iter().map(|&v| F::lit(v)).collect(),
        intercept: F::lit(raw.intercept),
        lambda: F::lit(lambda),
        iterations: raw.iterations,
        last_update: F::lit(raw.last_update),
        converged: raw.converged,
        objective: raw.objective.iter().map(|&v| F::lit(v)).collect(),
    }
}

fn not_converged(raw: &RawFit) -> Error {
    Error::NotConverged {
        iterations: raw.iterations,
        last_update: raw.last_update,
        coefficients: raw.beta.clone(),
        intercept: raw.intercept,
    }
}

/// Minimise `(1/2N)|y - X b - a|^2 + lambda |b|_1` over standardised
/// features with an unpenalised intercept.
pub fn fit<F: Float>(data: &Dataset<F>, lambda: F, opts: &LassoOptions) -> Result<LassoFit<F>> {
    let m = Moments::from_dataset(data, 0..data.n_rows());
    fit_from_moments(&m, &data.names, lambda, opts)
}

pub fn fit_from_moments<F: Float>(
    m: &Moments,
    names: &[String],
    lambda: F,
    opts: &LassoOptions,
) -> Result<LassoFit<F>> {
    let (raw, _) = fit_moments(m, lambda.as_f64(), opts, None)?;
    if !raw.converged {
        return Err(not_converged(&raw));
    }
    Ok(to_fit(raw, names, lambda.as_f64()))
}

/// Smallest penalty yielding the null model, on standardised features.
pub fn lambda_max<F: Float>(data: &Dataset<F>) -> F {
    F::lit(Moments::from_dataset(data, 0..data.n_rows()).lambda_max())
}

/// `n` log-spaced penalties from `lambda_max` down to `ratio * lambda_max`,
/// in decreasing order.
pub fn lambda_grid(lambda_max: f64, n: usize, ratio: f64) -> Vec<f64> {
    if lambda_max <= 0.0 || n == 0 {
        return vec![0.0];
    }
    if n == 1 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..n)
        .map(|i| (hi + (lo - hi) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvOptions {
    pub folds: usize,
    /// Explicit penalty grid; when absent a log-spaced grid is derived from
    /// the data.
    pub lambdas: Option<Vec<f64>>,
    pub n_lambdas: usize,
    pub lambda_ratio: f64,
    /// Errors within this absolute distance of the minimum count as tied;
    /// ties go to the larger penalty.
    pub tie_tol: f64,
    pub lasso: LassoOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            lambdas: None,
            n_lambdas: 50,
            lambda_ratio: 1e-4,
            tie_tol: 1e-10,
            lasso: LassoOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub lambda: f64,
    /// Penalties in decreasing order.
    pub lambdas: Vec<f64>,
    /// Mean held-out MSE per penalty.
    pub cv_error: Vec<f64>,
    pub skipped_folds: Vec<usize>,
}

/// Contiguous fold boundaries over `n` rows.
pub fn fold_ranges(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    (0..k).map(|f| (f * n / k)..((f + 1) * n / k)).collect()
}

/// Choose the penalty by k-fold cross-validation over contiguous blocks.
pub fn cv_select<F: Float>(data: &Dataset<F>, opts: &CvOptions) -> Result<CvResult> {
    if opts.folds < 2 {
        return Err(Error::Config("cross-validation needs at least 2 folds".into()));
    }
    if data.n_rows() < opts.folds * 2 {
        return Err(Error::Insufficient {
            needed: opts.folds * 2,
            got: data.n_rows(),
        });
    }
    let fold_moments: Vec<Moments> = fold_ranges(data.n_rows(), opts.folds)
        .into_par_iter()
        .map(|r| Moments::from_dataset(data, r))
        .collect();
    cv_select_moments(&fold_moments, opts)
}

pub fn cv_select_moments(folds: &[Moments], opts: &CvOptions) -> Result<CvResult> {
    let p = folds.first().map(|m| m.mean_x.len()).unwrap_or(0);
    let total = folds.iter().fold(Moments::empty(p), |acc, m| acc.merge(m));
    let mut lambdas = match &opts.lambdas {
        Some(l) if !l.is_empty() => l.clone(),
        Some(_) => return Err(Error::Config("empty penalty grid".into())),
        None => lambda_grid(total.lambda_max(), opts.n_lambdas, opts.lambda_ratio),
    };
    if lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::Config("penalties must be non-negative".into()));
    }
    lambdas.sort_by(|a, b| b.total_cmp(a));

    let mut skipped = Vec::new();
    let used: Vec<usize> = (0..folds.len())
        .filter(|&f| {
            let ok = folds[f].cyy > 0.0;
            if !ok {
                log::warn!("skipping fold {f}: held-out target has zero variance");
                skipped.push(f);
            }
            ok
        })
        .collect();
    if used.is_empty() {
        return Err(Error::ZeroVariance("every fold has a constant target".into()));
    }

    let per_fold: Vec<Vec<f64>> = used
        .par_iter()
        .map(|&f| {
            let train = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .fold(Moments::empty(p), |acc, (_, m)| acc.merge(m));
            let mut warm: Option<Vec<f64>> = None;
            let mut errs = Vec::with_capacity(lambdas.len());
            for &lambda in &lambdas {
                let (raw, std_beta) = fit_moments(&train, lambda, &opts.lasso, warm.as_deref())?;
                if !raw.converged {
                    return Err(not_converged(&raw));
                }
                errs.push(folds[f].sse(&raw.beta, raw.intercept) / folds[f].n as f64);
                warm = Some(std_beta);
            }
            Ok(errs)
        })
        .collect::<Result<_>>()?;

    let cv_error: Vec<f64> = (0..lambdas.len())
        .map(|i| per_fold.iter().map(|e| e[i]).sum::<f64>() / per_fold.len() as f64)
        .collect();
    let best = cv_error.iter().copied().fold(f64::INFINITY, f64::min);
    // Grid is decreasing, so the first tied entry is the largest penalty.
    let pick = cv_error
        .iter()
        .position(|&e| e <= best + opts.tie_tol)
        .ok_or_else(|| Error::Numerical("cross-validation errors are not finite".into()))?;
    Ok(CvResult {
        lambda: lambdas[pick],
        lambdas,
        cv_error,
        skipped_folds: skipped,
    })
}
