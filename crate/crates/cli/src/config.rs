use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ofi_core::backtest::{GridSpec, DEFAULT_HORIZONS};
use ofi_core::lasso::{CvOptions, LassoOptions};
use ofi_core::metrics::Convention;
use ofi_core::ou::{OuGbmParams, Scheme};
use ofi_core::report::{TickSeries, CORRELATION_WINDOWS};
use ofi_core::tick::{SessionSpec, SyntheticConfig};
use ofi_core::{Error, Result};

/// Declarative run description. Every block has defaults, so an empty file
/// is a valid config for the subcommands that do not read ticks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Tick CSV to read. Mutually exclusive with `synthetic`.
    pub input: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    #[serde(default)]
    pub convention: Convention,
    #[serde(default)]
    pub session: SessionSpec,
    /// Generate ticks in memory instead of reading `input`. Its own seed is
    /// replaced by the run seed.
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub metrics: MetricsBlock,
    #[serde(default)]
    pub acf: SeriesBlock,
    #[serde(default)]
    pub correlate: CorrelateBlock,
    #[serde(default)]
    pub regime: SeriesBlock,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub theory: TheoryBlock,
    #[serde(default)]
    pub simulate: SimulateBlock,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub lasso: LassoBlock,
    #[serde(default)]
    pub combo: ComboBlock,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_seed() -> u64 {
    7
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsBlock {
    /// Event-count windows.
    #[serde(default)]
    pub ticks: Vec<usize>,
    /// Wall-clock windows in seconds.
    #[serde(default)]
    pub seconds: Vec<f64>,
}

impl Default for MetricsBlock {
    fn default() -> Self {
        Self {
            ticks: vec![1, 10, 100],
            seconds: vec![1.0, 60.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesBlock {
    #[serde(default = "default_series")]
    pub series: TickSeries,
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
}

fn default_series() -> TickSeries {
    TickSeries::En
}

fn default_max_lag() -> usize {
    10
}

impl Default for SeriesBlock {
    fn default() -> Self {
        Self {
            series: default_series(),
            max_lag: default_max_lag(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelateBlock {
    pub seconds: Vec<f64>,
}

impl Default for CorrelateBlock {
    fn default() -> Self {
        Self {
            seconds: CORRELATION_WINDOWS.to_vec(),
        }
    }
}

/// Drift/price model used by `theory-curves` and `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub params: OuGbmParams<f64>,
    /// Initial drift.
    pub mu0: f64,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            params: OuGbmParams::new(0.5, 0.04, 1.0).with_dt(0.01),
            mu0: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryBlock {
    pub t_max: f64,
    pub points: usize,
}

impl Default for TheoryBlock {
    fn default() -> Self {
        Self {
            t_max: 20.0,
            points: 2000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub paths: usize,
    pub times: Vec<f64>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// Tolerance in standard errors.
    #[serde(default = "default_n_se")]
    pub n_se: f64,
}

fn default_scheme() -> Scheme {
    Scheme::Exact
}

fn default_n_se() -> f64 {
    3.0
}

impl Default for SimulateBlock {
    fn default() -> Self {
        Self {
            paths: 100_000,
            times: vec![0.5, 1.0, 2.0, 5.0],
            scheme: default_scheme(),
            n_se: default_n_se(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LassoBlock {
    pub folds: usize,
    /// Explicit penalty grid; generated from the data when absent.
    pub lambdas: Option<Vec<f64>>,
    pub n_lambdas: usize,
    pub lambda_ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoBlock {
    fn default() -> Self {
        let cv = CvOptions::default();
        Self {
            folds: cv.folds,
            lambdas: None,
            n_lambdas: cv.n_lambdas,
            lambda_ratio: cv.lambda_ratio,
            tol: cv.lasso.tol,
            max_iter: cv.lasso.max_iter,
        }
    }
}

impl LassoBlock {
    pub fn cv_options(&self) -> CvOptions {
        CvOptions {
            folds: self.folds,
            lambdas: self.lambdas.clone(),
            n_lambdas: self.n_lambdas,
            lambda_ratio: self.lambda_ratio,
            lasso: LassoOptions {
                tol: self.tol,
                max_iter: self.max_iter,
            },
            ..CvOptions::default()
        }
    }
}

/// Partners accepted by the `combo` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Partner {
    OfiLag1,
    Ti,
    DeltaP,
    Lambda,
    AvgEn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComboBlock {
    pub partners: Vec<Partner>,
    pub hist_win: usize,
    pub horizons: Vec<usize>,
}

impl Default for ComboBlock {
    fn default() -> Self {
        Self {
            partners: vec![
                Partner::OfiLag1,
                Partner::Ti,
                Partner::DeltaP,
                Partner::Lambda,
                Partner::AvgEn,
            ],
            hist_win: 2,
            horizons: DEFAULT_HORIZONS.to_vec(),
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub n_ticks: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        if let Some(v) = &overrides.input {
            cfg.input = Some(v.clone());
        }
        if let Some(v) = &overrides.out {
            cfg.out = v.clone();
        }
        if let Some(v) = overrides.seed {
            cfg.seed = v;
        }
        if let Some(v) = overrides.threads {
            cfg.threads = Some(v);
        }
        if let Some(n) = overrides.n_ticks {
            cfg.synthetic
                .get_or_insert_with(|| SyntheticConfig::closed_loop(n, cfg.seed))
                .n_ticks = n;
        }
        if let Some(s) = cfg.synthetic.as_mut() {
            s.seed = cfg.seed;
        }
        if cfg.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        cfg.session.validate()?;
        Ok(cfg)
    }

    /// Where ticks come from: exactly one source must be configured.
    pub fn tick_source(&self) -> Result<TickSource<'_>> {
        match (&self.input, &self.synthetic) {
            (Some(p), None) => Ok(TickSource::File(p)),
            (None, Some(s)) => Ok(TickSource::Synthetic(s)),
            (Some(_), Some(_)) => Err(Error::Config(
                "set either an input file or a synthetic block, not both".into(),
            )),
            (None, None) => Err(Error::Config("no input file or synthetic block given".into())),
        }
    }
}

pub enum TickSource<'a> {
    File(&'a Path),
    Synthetic(&'a SyntheticConfig),
}
