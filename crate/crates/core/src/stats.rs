//! Autocorrelation, correlation, moments and monthly regime screening.
//!
//! Conventions: autocorrelation uses the biased (denominator-N) estimator
//! around the full-sample mean; moments are population moments, and kurtosis
//! is the plain standardized fourth moment (3 for a normal sample).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::float::Float;

fn mean<F: Float>(xs: &[F]) -> F {
    xs.iter().copied().sum::<F>() / F::from_usize_lossy(xs.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcfReport<F> {
    /// `rho[k-1]` is the lag-`k` coefficient.
    pub rho: Vec<F>,
    /// Prefix sums of `rho`.
    pub cumulative: Vec<F>,
    pub n: usize,
    /// `1 / sqrt(n)`.
    pub std_error: F,
}

impl<F: Float> AcfReport<F> {
    pub fn max_lag(&self) -> usize {
        self.rho.len()
    }

    pub fn lag(&self, k: usize) -> F {
        self.rho[k - 1]
    }
}

pub fn autocorr<F: Float>(series: &[F], max_lag: usize) -> Result<AcfReport<F>> {
    let n = series.len();
    if n < max_lag + 2 {
        return Err(Error::Insufficient {
            needed: max_lag + 2,
            got: n,
        });
    }
    let m = mean(series);
    let centered: Vec<F> = series.iter().map(|&x| x - m).collect();
    let c0: F = centered.iter().map(|&d| d * d).sum();
    if !(c0 > F::zero()) {
        return Err(Error::ZeroVariance("autocorrelation of a constant series".into()));
    }
    let mut rho = Vec::with_capacity(max_lag);
    for k in 1..=max_lag {
        let ck: F = centered[..n - k]
            .iter()
            .zip(&centered[k..])
            .map(|(&a, &b)| a * b)
            .sum();
        rho.push(ck / c0);
    }
    let mut acc = F::zero();
    let cumulative = rho
        .iter()
        .map(|&r| {
            acc = acc + r;
            acc
        })
        .collect();
    Ok(AcfReport {
        rho,
        cumulative,
        n,
        std_error: F::one() / F::from_usize_lossy(n).sqrt(),
    })
}

pub fn pearson_corr<F: Float>(x: &[F], y: &[F]) -> Result<F> {
    if x.len() != y.len() {
        return Err(Error::Data(format!(
            "correlation of unequal lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Insufficient {
            needed: 2,
            got: x.len(),
        });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (F::zero(), F::zero(), F::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if !(sxx > F::zero()) || !(syy > F::zero()) {
        return Err(Error::ZeroVariance("correlation with a constant series".into()));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-F::one()).min(F::one()))
}

/// Average ranks (ties share the mean rank), 1-based.
pub fn ranks<F: Float>(xs: &[F]) -> Vec<F> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = vec![F::zero(); xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = F::from_usize_lossy(i + j + 2) / F::lit(2.0);
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman_corr<F: Float>(x: &[F], y: &[F]) -> Result<F> {
    pearson_corr(&ranks(x), &ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DescriptiveStats<F> {
    pub n: usize,
    pub mean: F,
    pub std: F,
    /// `None` when the sample is constant.
    pub skewness: Option<F>,
    /// Standardized fourth moment; `None` when the sample is constant.
    pub kurtosis: Option<F>,
}

pub fn descriptive<F: Float>(series: &[F]) -> Result<DescriptiveStats<F>> {
    let n = series.len();
    if n < 4 {
        return Err(Error::Insufficient { needed: 4, got: n });
    }
    let nf = F::from_usize_lossy(n);
    let m = mean(series);
    let (mut m2, mut m3, mut m4) = (F::zero(), F::zero(), F::zero());
    for &x in series {
        let d = x - m;
        let d2 = d * d;
        m2 = m2 + d2;
        m3 = m3 + d2 * d;
        m4 = m4 + d2 * d2;
    }
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    let std = m2.sqrt();
    let (skewness, kurtosis) = if m2 > F::zero() {
        (Some(m3 / (m2 * std)), Some(m4 / (m2 * m2)))
    } else {
        (None, None)
    };
    Ok(DescriptiveStats {
        n,
        mean: m,
        std,
        skewness,
        kurtosis,
    })
}

/// Mean-reversion rate implied by the lag-1 autocorrelation, one sample per
/// unit time.
pub fn estimate_theta<F: Float>(acf: &AcfReport<F>) -> Result<F> {
    estimate_theta_dt(acf, F::one())
}

/// As [`estimate_theta`] for samples spaced `dt` apart.
pub fn estimate_theta_dt<F: Float>(acf: &AcfReport<F>, dt: F) -> Result<F> {
    let r1 = *acf
        .rho
        .first()
        .ok_or_else(|| Error::Data("autocorrelation report has no lags".into()))?;
    if !(r1 > F::zero()) {
        return Err(Error::Numerical(format!(
            "lag-1 autocorrelation {r1} is not positive; no mean-reverting fit"
        )));
    }
    if !(r1 < F::one()) {
        return Err(Error::Numerical(format!(
            "lag-1 autocorrelation {r1} implies no mean reversion"
        )));
    }
    Ok(-r1.ln() / dt)
}

/// Calendar month of a millisecond timestamp as `YYMM` (UTC).
pub fn month_label(timestamp_ms: i64) -> String {
    use chrono::{DateTime, Datelike};
    let dt = DateTime::from_timestamp_millis(timestamp_ms).unwrap_or_default();
    format!("{:02}{:02}", dt.year().rem_euclid(100), dt.month())
}

/// Minimum events per month before a row is trusted.
pub const REGIME_MIN_EVENTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeRow<F> {
    pub month: String,
    pub acf: AcfReport<F>,
    pub stats: DescriptiveStats<F>,
    /// Correlation of the metric with the contemporaneous price change, when
    /// a price series was supplied and both are non-degenerate.
    pub price_correlation: Option<F>,
    pub low_confidence: bool,
}

/// A lag whose coefficient is significantly positive in one month and
/// significantly negative in another.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignFlip {
    pub lag: usize,
    pub positive_months: Vec<String>,
    pub negative_months: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport<F> {
    pub metric: String,
    pub max_lag: usize,
    pub rows: Vec<RegimeRow<F>>,
    pub sign_flips: Vec<SignFlip>,
    /// Band multiplier: a coefficient counts as signed only outside
    /// `+-band * / sqrt(n)`.
    pub band: F,
}

impl<F> RegimeReport<F> {
    /// A metric whose autocorrelation changes sign between months.
    pub fn is_weak(&self) -> bool {
        !self.sign_flips.is_empty()
    }
}

/// Monthly autocorrelation table for one metric series.
///
/// `timestamps` and `values` are aligned; `price_changes`, if given, is
/// aligned with them too. Months come out in chronological order.
pub fn regime_report_series<F: Float>(
    metric: &str,
    timestamps: &[i64],
    values: &[F],
    price_changes: Option<&[F]>,
    max_lag: usize,
) -> Result<RegimeReport<F>> {
    if timestamps.len() != values.len() || price_changes.is_some_and(|p| p.len() != values.len()) {
        return Err(Error::Data("regime inputs must be aligned".into()));
    }
    if values.is_empty() {
        return Err(Error::EmptyDataset("no events for regime report".into()));
    }
    let band = F::lit(3.0);
    let mut rows = Vec::new();
    let mut start = 0;
    while start < values.len() {
        let month = month_label(timestamps[start]);
        let mut end = start + 1;
        while end < values.len() && month_label(timestamps[end]) == month {
            end += 1;
        }
        let slice = &values[start..end];
        let acf = autocorr(slice, max_lag)?;
        let stats = descriptive(slice)?;
        let price_correlation = price_changes.and_then(|p| pearson_corr(slice, &p[start..end]).ok());
        rows.push(RegimeRow {
            month,
            low_confidence: slice.len() < REGIME_MIN_EVENTS,
            acf,
            stats,
            price_correlation,
        });
        start = end;
    }
    if rows.windows(2).any(|w| w[0].month >= w[1].month) {
        return Err(Error::Data(
            "timestamps are not in chronological month order".into(),
        ));
    }

    let mut sign_flips = Vec::new();
    for lag in 1..=max_lag {
        let mut positive_months = Vec::new();
        let mut negative_months = Vec::new();
        for row in &rows {
            let r = row.acf.lag(lag);
            let cut = band * row.acf.std_error;
            if r > cut {
                positive_months.push(row.month.clone());
            } else if r < -cut {
                negative_months.push(row.month.clone());
            }
        }
        if !positive_months.is_empty() && !negative_months.is_empty() {
            sign_flips.push(SignFlip {
                lag,
                positive_months,
                negative_months,
            });
        }
    }
    Ok(RegimeReport {
        metric: metric.to_string(),
        max_lag,
        rows,
        sign_flips,
        band,
    })
}
