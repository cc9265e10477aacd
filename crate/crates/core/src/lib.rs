//! Order-flow-imbalance analytics for snapshot tick data.
//!
//! * [`tick`]: CSV ingest, session filtering and a synthetic tick generator.
//! * [`metrics`]: per-event contributions and windowed OFI, TI, Lambda, AvgEn.
//! * [`stats`]: autocorrelation, correlation, moments and monthly regime screens.
//! * [`ou`]: closed forms of the O-U drift / GBM price model and Monte Carlo
//!   simulators for them.
//! * [`lasso`]: coordinate-descent LASSO with contiguous cross-validation.
//! * [`backtest`]: rolling regressions, PnL accounting and combination runs.
//! * [`report`]: table builders and writers.
//!
//! Numerical code is generic over [`Float`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod error;
pub mod float;
pub mod lasso;
pub mod metrics;
pub mod ou;
pub mod report;
pub mod stats;
pub mod tick;

pub use error::{Error, ErrorClass, Result};
pub use float::Float;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type OuGbmParamsF64 = ou::OuGbmParams<f64>;
pub type PathEnsembleF64 = ou::PathEnsemble<f64>;
pub type AcfReportF64 = stats::AcfReport<f64>;
pub type DescriptiveStatsF64 = stats::DescriptiveStats<f64>;
pub type RegimeReportF64 = stats::RegimeReport<f64>;
pub type DatasetF64 = lasso::Dataset<f64>;
pub type LassoFitF64 = lasso::LassoFit<f64>;
pub type MetricTableF64 = metrics::MetricTable<f64>;
pub type MetricSeriesF64 = metrics::MetricSeries<f64>;
