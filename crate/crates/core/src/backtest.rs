//! Rolling OFI regressions over (historical window, forecast horizon) grids,
//! long/short PnL accounting and two-factor combinations.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::lasso::{self, CvOptions, Dataset, LassoFit};
use crate::metrics::EventSeries;

pub const DEFAULT_HIST_WINDOWS: [usize; 9] = [1, 2, 5, 10, 20, 30, 60, 120, 240];
pub const DEFAULT_HORIZONS: [usize; 12] = [1, 2, 5, 10, 20, 30, 60, 120, 240, 600, 1200, 3600];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub hist_windows: Vec<usize>,
    pub horizons: Vec<usize>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_train_fraction() -> f64 {
    0.8
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            hist_windows: DEFAULT_HIST_WINDOWS.to_vec(),
            horizons: DEFAULT_HORIZONS.to_vec(),
            train_fraction: default_train_fraction(),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hist_windows.is_empty() || self.horizons.is_empty() {
            return Err(Error::Config("grid needs windows and horizons".into()));
        }
        if self.hist_windows.iter().chain(&self.horizons).any(|&v| v == 0) {
            return Err(Error::Config("grid values must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// A regression feature evaluated at tick `i` from the `hist` events ending
/// there.
#[derive(Debug, Clone, PartialEq)]
pub enum Feature {
    /// OFI over the window ending `lag` windows before `i`.
    Ofi {
        lag: usize,
    },
    Ti,
    /// Mid-price change over the window.
    DeltaP,
    Lambda,
    /// Running session mean of `e` at `i`.
    AvgEn,
    /// Caller-supplied per-tick values, indexed like the tick sequence.
    External {
        name: String,
        values: Arc<[f64]>,
    },
}

impl Feature {
    pub fn name(&self) -> String {
        match self {
            Feature::Ofi { lag: 0 } => "OFI".into(),
            Feature::Ofi { lag } => format!("OFI_lag{lag}"),
            Feature::Ti => "TI".into(),
            Feature::DeltaP => "DeltaP".into(),
            Feature::Lambda => "Lambda".into(),
            Feature::AvgEn => "AvgEn".into(),
            Feature::External { name, .. } => name.clone(),
        }
    }

    /// Events before `i` (inclusive of `i`) the feature needs.
    fn lookback(&self, hist: usize) -> usize {
        match self {
            Feature::Ofi { lag } => hist * (lag + 1),
            Feature::AvgEn | Feature::External { .. } => 0,
            _ => hist,
        }
    }

    fn value(&self, s: &EventSeries, i: usize, hist: usize) -> f64 {
        match self {
            Feature::Ofi { lag } => {
                let last = i - lag * hist;
                s.ofi(last + 1 - hist, last) as f64
            }
            Feature::Ti => s.ti(i + 1 - hist, i) as f64,
            Feature::DeltaP => s.mid[i] - s.mid[i - hist],
            Feature::Lambda => s.lambda(i + 1 - hist, i),
            Feature::AvgEn => s.running_mean_e[i],
            Feature::External { values, .. } => values[i],
        }
    }
}

/// A dataset together with the tick index of each row.
#[derive(Debug, Clone)]
pub struct RollingData {
    pub data: Dataset<f64>,
    pub ticks: Vec<usize>,
}

/// One row per tick `i` with `features` computed over the trailing `hist`
/// events and target `mid(i + horizon) - mid(i)`. Rows whose lookback or
/// horizon leaves the session are dropped.
pub fn build_dataset_with(
    series: &EventSeries,
    features: &[Feature],
    hist: usize,
    horizon: usize,
) -> Result<RollingData> {
    if hist == 0 || horizon == 0 {
        return Err(Error::Config("window and horizon must be positive".into()));
    }
    for f in features {
        if let Feature::External { name, values } = f {
            if values.len() != series.len() {
                return Err(Error::Data(format!(
                    "feature {name} has {} values for {} ticks",
                    values.len(),
                    series.len()
                )));
            }
        }
    }
    let lookback = features.iter().map(|f| f.lookback(hist)).max().unwrap_or(hist);
    let n = series.len();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut ticks = Vec::new();
    for i in 0..n.saturating_sub(horizon) {
        let start = series.session_start[i];
        if i - start < lookback || series.session_start[i + horizon] != start {
            continue;
        }
        for f in features {
            x.push(f.value(series, i, hist));
        }
        y.push(series.mid[i + horizon] - series.mid[i]);
        ticks.push(i);
    }
    if y.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no rows for window {hist} and horizon {horizon}; sessions too short"
        )));
    }
    let data = Dataset::new(features.iter().map(Feature::name).collect(), x, y)?;
    Ok(RollingData { data, ticks })
}

/// Single-feature dataset: trailing OFI against the forward mid change.
pub fn build_dataset(series: &EventSeries, hist: usize, horizon: usize) -> Result<RollingData> {
    build_dataset_with(series, &[Feature::Ofi { lag: 0 }], hist, horizon)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Pnl {
    pub long: f64,
    pub short: f64,
}

impl Pnl {
    pub fn total(&self) -> f64 {
        self.long + self.short
    }
}

/// Long PnL sums price changes where the prediction is positive; short PnL
/// sums negated price changes where it is negative.
pub fn pnl_evaluate<F: Float>(predictions: &[F], actual: &[F]) -> Result<Pnl> {
    if predictions.len() != actual.len() {
        return Err(Error::Data("predictions and targets differ in length".into()));
    }
    let mut pnl = Pnl::default();
    for (&p, &a) in predictions.iter().zip(actual) {
        if p > F::zero() {
            pnl.long += a.as_f64();
        } else if p < F::zero() {
            pnl.short -= a.as_f64();
        }
    }
    Ok(pnl)
}

/// Spread of PnL when positions keep their size but take random signs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapNull {
    pub observed: f64,
    pub mean: f64,
    pub std: f64,
    pub draws: usize,
}

impl BootstrapNull {
    pub fn z_score(&self) -> f64 {
        if self.std > 0.0 {
            (self.observed - self.mean) / self.std
        } else {
            0.0
        }
    }
}

pub fn sign_bootstrap(predictions: &[f64], actual: &[f64], draws: usize, seed: u64) -> Result<BootstrapNull> {
    let observed = pnl_evaluate(predictions, actual)?.total();
    let traded: Vec<f64> = predictions
        .iter()
        .zip(actual)
        .filter(|(p, _)| **p != 0.0)
        .map(|(_, a)| *a)
        .collect();
    let totals: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64);
            traded
                .iter()
                .map(|a| if rng.random::<bool>() { *a } else { -*a })
                .sum()
        })
        .collect();
    let n = draws.max(1) as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(BootstrapNull {
        observed,
        mean,
        std: var.sqrt(),
        draws,
    })
}

/// Flip the sign of every target independently.
pub fn randomize_target_signs(data: &Dataset<f64>, seed: u64) -> Result<Dataset<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = data
        .target()
        .iter()
        .map(|&v| if rng.random::<bool>() { v } else { -v })
        .collect();
    data.with_target(y)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestOptions {
    pub cv: CvOptions,
    pub train_fraction: f64,
}

impl Default for BacktestOptions {
    fn default() -> Self {
        Self {
            cv: CvOptions::default(),
            train_fraction: 0.8,
        }
    }
}

/// Result of one (window, horizon) cell. Test-partition MSE and R^2 go to
/// the table; training values are kept for the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestRow {
    pub partner: Option<String>,
    pub hist_win: usize,
    pub fcast_horizon: usize,
    pub mse: f64,
    pub r2: f64,
    pub train_mse: f64,
    pub train_r2: f64,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub trainpnl_l: f64,
    pub testpnl_l: f64,
    pub trainpnl_s: f64,
    pub testpnl_s: f64,
    pub totalpnl: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub error: Option<String>,
}

impl BacktestRow {
    fn failed(partner: Option<String>, hist: usize, horizon: usize, n_coef: usize, err: &Error) -> Self {
        let nan = f64::NAN;
        Self {
            partner,
            hist_win: hist,
            fcast_horizon: horizon,
            mse: nan,
            r2: nan,
            train_mse: nan,
            train_r2: nan,
            coefficients: vec![nan; n_coef],
            intercept: nan,
            lambda: nan,
            trainpnl_l: nan,
            testpnl_l: nan,
            trainpnl_s: nan,
            testpnl_s: nan,
            totalpnl: nan,
            n_train: 0,
            n_test: 0,
            error: Some(err.to_string()),
        }
    }
}

/// Everything computed for one cell, including the fit and predictions.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub fit: LassoFit<f64>,
    pub cv: lasso::CvResult,
    pub split: usize,
    pub predictions: Vec<f64>,
    pub train_pnl: Pnl,
    pub test_pnl: Pnl,
    pub train_mse: f64,
    pub train_r2: f64,
    pub test_mse: f64,
    pub test_r2: f64,
}

fn mse_r2(pred: &[f64], y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sse: f64 = pred.iter().zip(y).map(|(p, a)| (a - p).powi(2)).sum();
    let sst: f64 = y.iter().map(|a| (a - mean).powi(2)).sum();
    let r2 = if sst > 0.0 { 1.0 - sse / sst } else { f64::NAN };
    (sse / n, r2)
}

/// Time-ordered split, cross-validated penalty on the training part, refit,
/// and evaluation on both parts.
pub fn evaluate_dataset(data: &Dataset<f64>, opts: &BacktestOptions) -> Result<CellResult> {
    let n = data.n_rows();
    let split = (n as f64 * opts.train_fraction).floor() as usize;
    if split < 2 || split >= n {
        return Err(Error::Insufficient {
            needed: 2,
            got: split.min(n - split),
        });
    }
    let train = data.slice(0..split);
    let cv = lasso::cv_select(&train, &opts.cv)?;
    let fit = lasso::fit(&train, cv.lambda, &opts.cv.lasso)?;
    let predictions = lasso::predict(&fit, data)?;
    let y = data.target();
    let train_pnl = pnl_evaluate(&predictions[..split], &y[..split])?;
    let test_pnl = pnl_evaluate(&predictions[split..], &y[split..])?;
    let (train_mse, train_r2) = mse_r2(&predictions[..split], &y[..split]);
    let (test_mse, test_r2) = mse_r2(&predictions[split..], &y[split..]);
    Ok(CellResult {
        fit,
        cv,
        split,
        predictions,
        train_pnl,
        test_pnl,
        train_mse,
        train_r2,
        test_mse,
        test_r2,
    })
}

fn row_from(partner: Option<String>, hist: usize, horizon: usize, r: &CellResult, n: usize) -> BacktestRow {
    BacktestRow {
        partner,
        hist_win: hist,
        fcast_horizon: horizon,
        mse: r.test_mse,
        r2: r.test_r2,
        train_mse: r.train_mse,
        train_r2: r.train_r2,
        coefficients: r.fit.coefficients.clone(),
        intercept: r.fit.intercept,
        lambda: r.fit.lambda,
        trainpnl_l: r.train_pnl.long,
        testpnl_l: r.test_pnl.long,
        trainpnl_s: r.train_pnl.short,
        testpnl_s: r.test_pnl.short,
        totalpnl: r.train_pnl.long + r.test_pnl.long + r.train_pnl.short + r.test_pnl.short,
        n_train: r.split,
        n_test: n - r.split,
        error: None,
    }
}

fn run_cell(
    series: &EventSeries,
    features: &[Feature],
    partner: Option<String>,
    hist: usize,
    horizon: usize,
    opts: &BacktestOptions,
) -> BacktestRow {
    let result = build_dataset_with(series, features, hist, horizon)
        .and_then(|d| evaluate_dataset(&d.data, opts).map(|r| (r, d.data.n_rows())));
    match result {
        Ok((r, n)) => row_from(partner, hist, horizon, &r, n),
        Err(e) => {
            log::warn!("cell ({hist}, {horizon}) failed: {e}");
            BacktestRow::failed(partner, hist, horizon, features.len(), &e)
        }
    }
}

/// One row per (window, horizon) pair, in grid order. Failed cells produce
/// rows carrying the error instead of aborting the grid.
pub fn run_grid(series: &EventSeries, grid: &GridSpec, opts: &BacktestOptions) -> Result<Vec<BacktestRow>> {
    grid.validate()?;
    let opts = BacktestOptions {
        train_fraction: grid.train_fraction,
        ..opts.clone()
    };
    let cells: Vec<(usize, usize)> = grid
        .hist_windows
        .iter()
        .flat_map(|&h| grid.horizons.iter().map(move |&t| (h, t)))
        .collect();
    Ok(cells
        .into_par_iter()
        .map(|(h, t)| run_cell(series, &[Feature::Ofi { lag: 0 }], None, h, t, &opts))
        .collect())
}

/// Second regressor paired with OFI.
#[derive(Debug, Clone, PartialEq)]
pub struct ComboSpec {
    pub partner: Feature,
    pub hist_win: usize,
}

impl ComboSpec {
    pub fn new(partner: Feature) -> Self {
        Self { partner, hist_win: 2 }
    }

    /// Lagged OFI, TI, mid change, Lambda and AvgEn on a 2-tick window.
    pub fn standard() -> Vec<Self> {
        [
            Feature::Ofi { lag: 1 },
            Feature::Ti,
            Feature::DeltaP,
            Feature::Lambda,
            Feature::AvgEn,
        ]
        .into_iter()
        .map(Self::new)
        .collect()
    }
}

/// Two-factor runs per combination and horizon, plus the single-factor
/// baseline (partner `None`) at the same window.
pub fn run_combo(
    series: &EventSeries,
    combos: &[ComboSpec],
    horizons: &[usize],
    opts: &BacktestOptions,
) -> Result<Vec<BacktestRow>> {
    if combos.is_empty() || horizons.is_empty() || horizons.contains(&0) {
        return Err(Error::Config(
            "combination run needs partners and positive horizons".into(),
        ));
    }
    let mut windows: Vec<usize> = combos.iter().map(|c| c.hist_win).collect();
    windows.sort_unstable();
    windows.dedup();
    let mut jobs: Vec<(Option<&ComboSpec>, usize, usize)> = Vec::new();
    for &t in horizons {
        jobs.extend(windows.iter().map(|&h| (None, h, t)));
        jobs.extend(combos.iter().map(|c| (Some(c), c.hist_win, t)));
    }
    Ok(jobs
        .into_par_iter()
        .map(|(combo, h, t)| match combo {
            None => run_cell(series, &[Feature::Ofi { lag: 0 }], None, h, t, opts),
            Some(c) => run_cell(
                series,
                &[Feature::Ofi { lag: 0 }, c.partner.clone()],
                Some(c.partner.name()),
                c.hist_win,
                t,
                opts,
            ),
        })
        .collect())
}

pub const BACKTEST_HEADER: &str =
    "HistWinSize,FcastHorzn,MSE,R2,Coef0,Intcpt,Trainpnl-l,Testpnl-l,Trainpnl-s,Testpnl-s,Totalpnl";
pub const COMBO_HEADER: &str =
    "Partner,HistWinSize,FcastHorzn,MSE,R2,Coef0,Coef1,Intcpt,Trainpnl-l,Testpnl-l,Trainpnl-s,Testpnl-s,Totalpnl";

fn write_row_tail<W: Write>(w: &mut W, r: &BacktestRow) -> std::io::Result<()> {
    writeln!(
        w,
        "{:.6},{:.1},{:.1},{:.1},{:.1},{:.1}",
        r.intercept, r.trainpnl_l, r.testpnl_l, r.trainpnl_s, r.testpnl_s, r.totalpnl
    )
}

/// Single-factor table; R^2 is a fraction, not a percentage.
pub fn write_backtest_csv<W: Write>(mut w: W, rows: &[BacktestRow]) -> Result<()> {
    writeln!(w, "{BACKTEST_HEADER}")?;
    for r in rows {
        write!(
            w,
            "{},{},{:.6},{:.6},{:.6},",
            r.hist_win,
            r.fcast_horizon,
            r.mse,
            r.r2,
            r.coefficients.first().copied().unwrap_or(f64::NAN)
        )?;
        write_row_tail(&mut w, r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_combo_csv<W: Write>(mut w: W, rows: &[BacktestRow]) -> Result<()> {
    writeln!(w, "{COMBO_HEADER}")?;
    for r in rows {
        let coef = |j: usize| r.coefficients.get(j).copied().unwrap_or(0.0);
        write!(
            w,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},",
            r.partner.as_deref().unwrap_or("none"),
            r.hist_win,
            r.fcast_horizon,
            r.mse,
            r.r2,
            coef(0),
            coef(1)
        )?;
        write_row_tail(&mut w, r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnl_examples() {
        let p = pnl_evaluate(&[1.0, -1.0], &[0.2, -0.3]).unwrap();
        assert!((p.long - 0.2).abs() < 1e-12);
        assert!((p.short - 0.3).abs() < 1e-12);
        assert!((p.total() - 0.5).abs() < 1e-12);
        let z = pnl_evaluate(&[0.0, 0.0], &[0.2, -0.3]).unwrap();
        assert_eq!(z.total(), 0.0);
        let dp = [0.4, -0.2, 0.0, -1.0, 0.6];
        let perfect: Vec<f64> = dp.iter().map(|v: &f64| v.signum()).collect();
        let abs_sum: f64 = dp.iter().map(|v| v.abs()).sum();
        assert!((pnl_evaluate(&perfect, &dp).unwrap().total() - abs_sum).abs() < 1e-12);
    }

    #[test]
    fn sign_symmetry_swaps_long_and_short() {
        let pred = [0.3, -0.1, 0.7, -0.4];
        let dp = [0.2, 0.4, -0.6, -0.2];
        let a = pnl_evaluate(&pred, &dp).unwrap();
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let b = pnl_evaluate(&neg(&pred), &neg(&dp)).unwrap();
        assert_eq!((a.long, a.short), (b.short, b.long));
    }

    #[test]
    fn bootstrap_std_matches_theory() {
        let dp: Vec<f64> = (0..400).map(|i| ((i * 37) % 11) as f64 / 10.0 - 0.5).collect();
        let pred = vec![1.0; dp.len()];
        let b = sign_bootstrap(&pred, &dp, 4000, 3).unwrap();
        let theory = dp.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((b.std / theory - 1.0).abs() < 0.05, "{} vs {theory}", b.std);
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::default().validate().is_ok());
        let bad = GridSpec {
            train_fraction: 1.0,
            ..GridSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = GridSpec {
            horizons: vec![0],
            ..GridSpec::default()
        };
        assert!(bad.validate().is_err());
    }
}
