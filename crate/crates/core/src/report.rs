//! Table builders and CSV writers for correlation, descriptive and monthly
//! autocorrelation reports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::metrics::{make_windows, window_metrics, EventSeries, MetricKind, WindowSpec};
use crate::stats::{self, AcfReport, DescriptiveStats, RegimeReport};

/// Window lengths in seconds used for the correlation table.
pub const CORRELATION_WINDOWS: [f64; 14] = [
    0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 60.0, 120.0, 300.0, 600.0, 1200.0, 1800.0, 3600.0,
];

/// Row label and metric for each line of the correlation table.
pub const CORRELATION_ROWS: [(&str, MetricKind); 4] = [
    ("OFI", MetricKind::Ofi),
    ("TI", MetricKind::Ti),
    ("Lmda", MetricKind::Lambda),
    ("AgEn", MetricKind::AvgEn),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationTable {
    pub windows: Vec<String>,
    pub rows: Vec<CorrelationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub metric: String,
    /// Pearson correlation with the window's mid change; `None` when either
    /// side is degenerate or too few windows exist.
    pub values: Vec<Option<f64>>,
    pub samples: Vec<usize>,
}

/// Correlation of each metric with the contemporaneous mid-price change
/// over wall-clock windows.
pub fn correlation_table(series: &EventSeries, window_seconds: &[f64]) -> Result<CorrelationTable> {
    let mut rows: Vec<CorrelationRow> = CORRELATION_ROWS
        .iter()
        .map(|(name, _)| CorrelationRow {
            metric: name.to_string(),
            values: Vec::new(),
            samples: Vec::new(),
        })
        .collect();
    let mut labels = Vec::new();
    for &secs in window_seconds {
        let spec = WindowSpec::Seconds(secs);
        labels.push(spec.label());
        let windows = make_windows(series, spec)?;
        let table = window_metrics::<f64>(series, &windows)?;
        for (row, (_, kind)) in rows.iter_mut().zip(CORRELATION_ROWS) {
            let (x, dp) = table.paired_with_price(kind);
            row.samples.push(x.len());
            row.values.push(stats::pearson_corr(&x, &dp).ok());
        }
    }
    Ok(CorrelationTable {
        windows: labels,
        rows,
    })
}

fn opt_cell(v: Option<f64>, digits: usize) -> String {
    v.map(|v| format!("{v:.digits$}")).unwrap_or_default()
}

pub fn write_correlation_csv<W: Write>(mut w: W, table: &CorrelationTable) -> Result<()> {
    writeln!(w, "Metric,{}", table.windows.join(","))?;
    for row in &table.rows {
        let cells: Vec<String> = row.values.iter().map(|&v| opt_cell(v, 4)).collect();
        writeln!(w, "{},{}", row.metric, cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Two-by-four summary block: mean and standard deviation on the first
/// line, skewness and kurtosis on the second.
pub fn write_descriptive_csv<W: Write, F: Float>(mut w: W, s: &DescriptiveStats<F>) -> Result<()> {
    let f = |v: Option<F>| opt_cell(v.map(|v| v.as_f64()), 5);
    writeln!(w, "Mean,{},Std,{}", f(Some(s.mean)), f(Some(s.std)))?;
    writeln!(w, "Skewness,{},Kurtosis,{}", f(s.skewness), f(s.kurtosis))?;
    w.flush()?;
    Ok(())
}

pub fn write_acf_csv<W: Write, F: Float>(mut w: W, acf: &AcfReport<F>) -> Result<()> {
    writeln!(w, "lag,rho,cumulative")?;
    for k in 1..=acf.max_lag() {
        writeln!(w, "{},{},{}", k, acf.lag(k), acf.cumulative[k - 1])?;
    }
    w.flush()?;
    Ok(())
}

/// Monthly table: one row per month, one column per lag.
pub fn write_regime_csv<W: Write, F: Float>(mut w: W, report: &RegimeReport<F>) -> Result<()> {
    let lags: Vec<String> = (1..=report.max_lag).map(|k| format!("lag{k}")).collect();
    writeln!(w, "Mon,{}", lags.join(","))?;
    for row in &report.rows {
        let cells: Vec<String> = (1..=report.max_lag)
            .map(|k| format!("{:.3}", row.acf.lag(k).as_f64()))
            .collect();
        writeln!(w, "{},{}", row.month, cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Tick-level series available for monthly screening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TickSeries {
    En,
    Omega,
    MidChange,
}

impl TickSeries {
    pub fn name(&self) -> &'static str {
        match self {
            TickSeries::En => "e_n",
            TickSeries::Omega => "omega_n",
            TickSeries::MidChange => "dmid",
        }
    }
}

/// Timestamps, values and contemporaneous mid changes of one tick-level
/// series, skipping session-start ticks.
pub fn tick_series(series: &EventSeries, which: TickSeries) -> (Vec<i64>, Vec<f64>, Vec<f64>) {
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    let mut dp = Vec::new();
    for c in &series.contributions {
        let (Some(e), Some(omega)) = (c.e, c.omega) else {
            continue;
        };
        let i = c.index;
        let change = series.mid[i] - series.mid[i - 1];
        ts.push(series.timestamp_ms[i]);
        vs.push(match which {
            TickSeries::En => e as f64,
            TickSeries::Omega => omega as f64,
            TickSeries::MidChange => change,
        });
        dp.push(change);
    }
    (ts, vs, dp)
}

pub fn regime_report(series: &EventSeries, which: TickSeries, max_lag: usize) -> Result<RegimeReport<f64>> {
    let (ts, vs, dp) = tick_series(series, which);
    if vs.is_empty() {
        return Err(Error::EmptyDataset("no events in input".into()));
    }
    stats::regime_report_series(which.name(), &ts, &vs, Some(&dp), max_lag)
}
