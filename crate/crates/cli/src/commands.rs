use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use ofi_core::backtest::{self, BacktestOptions, BacktestRow, ComboSpec, Feature};
use ofi_core::metrics::{self, EventSeries, MetricKind, WindowSpec};
use ofi_core::ou::{self, SimSpec};
use ofi_core::report::{self, TickSeries};
use ofi_core::stats;
use ofi_core::tick::{self, SyntheticConfig, TickRecord};
use ofi_core::{Error, Result};

use crate::config::{Partner, RunConfig, TickSource};

/// Output directory that refuses to overwrite the run's input and remembers
/// what it wrote.
pub struct Outputs {
    dir: PathBuf,
    protected: Option<PathBuf>,
    pub written: Vec<String>,
}

impl Outputs {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out).map_err(|e| {
            Error::Config(format!(
                "cannot create output directory {}: {e}",
                cfg.out.display()
            ))
        })?;
        Ok(Self {
            dir: cfg.out.clone(),
            protected: cfg.input.as_ref().and_then(|p| p.canonicalize().ok()),
            written: Vec::new(),
        })
    }

    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        if let (Some(input), Ok(existing)) = (&self.protected, path.canonicalize()) {
            if *input == existing {
                return Err(Error::Config(format!(
                    "refusing to overwrite input {}",
                    path.display()
                )));
            }
        }
        let file = File::create(&path)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Data(e.to_string()))?;
        std::io::Write::write_all(&mut w, b"\n")?;
        std::io::Write::flush(&mut w)?;
        Ok(())
    }
}

fn load_ticks(cfg: &RunConfig) -> Result<Vec<TickRecord>> {
    match cfg.tick_source()? {
        TickSource::File(path) => {
            let file = File::open(path)
                .map_err(|e| Error::Config(format!("cannot open input {}: {e}", path.display())))?;
            tick::parse_ticks(BufReader::new(file))
        }
        TickSource::Synthetic(s) => tick::generate_synthetic(s),
    }
}

fn load_series(cfg: &RunConfig) -> Result<EventSeries> {
    let ticks = load_ticks(cfg)?;
    let sessions = tick::filter_sessions(&ticks, &cfg.session)?;
    for w in &sessions.warnings {
        warn!("session {} ({} ticks): {}", w.session_id, w.ticks, w.reason);
    }
    info!("{} ticks kept after session filtering", sessions.len());
    EventSeries::new(&sessions, cfg.convention)
}

pub fn synth(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    if cfg.input.is_some() {
        return Err(Error::Config(
            "synth generates ticks and takes no input file".into(),
        ));
    }
    let config = cfg
        .synthetic
        .clone()
        .unwrap_or_else(|| SyntheticConfig::closed_loop(100_000, cfg.seed));
    let ticks = tick::generate_synthetic(&config)?;
    tick::write_ticks(out.create("ticks.csv")?, &ticks)?;
    info!("wrote {} ticks", ticks.len());
    Ok(())
}

pub fn metrics(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let series = load_series(cfg)?;
    let specs = cfg
        .metrics
        .ticks
        .iter()
        .map(|&n| WindowSpec::Ticks(n))
        .chain(cfg.metrics.seconds.iter().map(|&s| WindowSpec::Seconds(s)));
    for spec in specs {
        let windows = metrics::make_windows(&series, spec)?;
        let table = metrics::window_metrics::<f64>(&series, &windows)?;
        let name = format!("metrics_{}.csv", spec.label());
        metrics::write_metric_csv(out.create(&name)?, &table, &MetricKind::ALL)?;
    }
    Ok(())
}

pub fn autocorr(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let series = load_series(cfg)?;
    let (_, values, _) = report::tick_series(&series, cfg.acf.series);
    let acf = stats::autocorr(&values, cfg.acf.max_lag)?;
    report::write_acf_csv(out.create("acf.csv")?, &acf)?;
    out.json(
        "acf.json",
        &json!({
            "series": cfg.acf.series.name(),
            "acf": acf,
            "theta_per_event": stats::estimate_theta(&acf).ok(),
        }),
    )
}

pub fn correlate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let series = load_series(cfg)?;
    let table = report::correlation_table(&series, &cfg.correlate.seconds)?;
    report::write_correlation_csv(out.create("correlation.csv")?, &table)?;
    out.json("correlation.json", &table)
}

pub fn describe(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let series = load_series(cfg)?;
    let (_, e, _) = report::tick_series(&series, TickSeries::En);
    let s = stats::descriptive(&e)?;
    report::write_descriptive_csv(out.create("describe.csv")?, &s)?;
    out.json("describe.json", &s)
}

pub fn regime(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let series = load_series(cfg)?;
    let r = report::regime_report(&series, cfg.regime.series, cfg.regime.max_lag)?;
    if r.is_weak() {
        warn!("{} changes autocorrelation sign between months", r.metric);
    }
    report::write_regime_csv(out.create("regime.csv")?, &r)?;
    out.json("regime.json", &json!({ "weak": r.is_weak(), "report": r }))
}

pub fn theory_curves(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let m = &cfg.model;
    let p = &m.params;
    p.validate()?;
    let t = &cfg.theory;
    if !(t.t_max > 0.0) || t.points == 0 {
        return Err(Error::Config(
            "theory curves need t_max > 0 and points > 0".into(),
        ));
    }
    let sigma = p.volatility;
    let mut w = out.create("theory_curves.csv")?;
    use std::io::Write;
    writeln!(w, "t,drift_mean,drift_var,logret_mean,logret_std,quasi_sharpe")?;
    for i in 0..=t.points {
        let ti = t.t_max * i as f64 / t.points as f64;
        let d = ou::drift_moments(m.mu0, p.theta, p.levy_variance, ti);
        let qs = ou::quasi_sharpe(m.mu0, p.theta, sigma, p.levy_variance, ti)?;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            ti,
            d.mean,
            d.variance,
            ou::logret_mean(m.mu0, p.theta, sigma, ti),
            ou::logret_std(sigma, p.levy_variance, p.theta, ti),
            qs
        )?;
    }
    w.flush()?;
    let peak = ou::logret_mean_argmax(m.mu0, p.theta, sigma);
    out.json(
        "theory_summary.json",
        &json!({
            "peak": peak.as_ref().ok(),
            "peak_error": peak.as_ref().err().map(|e| e.to_string()),
            "small_t_sharpe_slope": (m.mu0 - sigma * sigma / 2.0) / sigma,
        }),
    )
}

#[derive(Debug, Serialize)]
struct Check {
    quantity: &'static str,
    t: f64,
    closed_form: f64,
    monte_carlo: f64,
    std_error: f64,
    z: f64,
    pass: bool,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn simulate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let m = &cfg.model;
    let p = &m.params;
    let s = &cfg.simulate;
    p.validate()?;
    if p.long_run_drift != 0.0 {
        return Err(Error::Config("closed forms assume a zero long-run drift".into()));
    }
    if s.paths < 2 || s.times.is_empty() {
        return Err(Error::Config(
            "simulate needs at least two paths and one time".into(),
        ));
    }
    let mut steps = Vec::with_capacity(s.times.len());
    for &t in &s.times {
        let k = (t / p.dt).round();
        if !(k >= 1.0) || ((k * p.dt - t).abs() > 1e-9 * t.max(1.0)) {
            return Err(Error::Config(format!(
                "time {t} is not a positive multiple of dt"
            )));
        }
        steps.push(k as usize);
    }
    let n_steps = *steps.iter().max().unwrap_or(&1);
    let stride = steps.iter().fold(0, |g, &k| gcd(g, k));
    let spec = SimSpec::new(n_steps, s.paths, cfg.seed).with_stride(stride);
    let ens = ou::simulate_coupled(p, m.mu0, &spec, s.scheme)?;

    let sigma = p.volatility;
    let mut checks = Vec::new();
    let mut push = |quantity, t, closed_form: f64, monte_carlo: f64, std_error: f64| {
        let z = (monte_carlo - closed_form) / std_error;
        checks.push(Check {
            quantity,
            t,
            closed_form,
            monte_carlo,
            std_error,
            z,
            pass: z.abs() <= s.n_se,
        });
    };
    for (&t, &k) in s.times.iter().zip(&steps) {
        let r = ens.steps.iter().position(|&x| x == k).expect("recorded step");
        let d = ens.drift_moments(r);
        let closed = ou::drift_moments(m.mu0, p.theta, p.levy_variance, t);
        push("drift_mean", t, closed.mean, d.mean, d.mean_se);
        push("drift_var", t, closed.variance, d.variance, d.variance_se);
        if let Some(lr) = ens.log_return_moments(r) {
            push(
                "logret_mean",
                t,
                ou::logret_mean(m.mu0, p.theta, sigma, t),
                lr.mean,
                lr.mean_se,
            );
            push(
                "logret_var",
                t,
                ou::logret_var(sigma, p.levy_variance, p.theta, t),
                lr.variance,
                lr.variance_se,
            );
        }
    }

    let mut w = out.create("simulate.csv")?;
    use std::io::Write;
    writeln!(w, "quantity,t,closed_form,monte_carlo,std_error,z,pass")?;
    for c in &checks {
        writeln!(
            w,
            "{},{},{},{},{},{:.3},{}",
            c.quantity, c.t, c.closed_form, c.monte_carlo, c.std_error, c.z, c.pass
        )?;
    }
    w.flush()?;
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} at t={} (z={:.2})", c.quantity, c.t, c.z))
        .collect();
    out.json(
        "simulate.json",
        &json!({
            "paths": s.paths,
            "scheme": s.scheme,
            "n_se": s.n_se,
            "all_pass": failed.is_empty(),
            "checks": checks,
        }),
    )?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "closed forms outside {} standard errors: {}",
            s.n_se,
            failed.join(", ")
        )))
    }
}

fn backtest_options(cfg: &RunConfig) -> BacktestOptions {
    BacktestOptions {
        cv: cfg.lasso.cv_options(),
        train_fraction: cfg.grid.train_fraction,
    }
}

fn report_failures(rows: &[BacktestRow]) {
    for r in rows {
        if let Some(e) = &r.error {
            warn!("window {} horizon {}: {e}", r.hist_win, r.fcast_horizon);
        }
    }
}

pub fn backtest(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let series = load_series(cfg)?;
    let opts = backtest_options(cfg);
    let rows = backtest::run_grid(&series, &cfg.grid, &opts)?;
    report_failures(&rows);
    backtest::write_backtest_csv(out.create("backtest.csv")?, &rows)?;
    out.json(
        "backtest.json",
        &json!({ "grid": cfg.grid, "options": opts, "rows": rows }),
    )
}

fn partner_feature(p: Partner) -> Feature {
    match p {
        Partner::OfiLag1 => Feature::Ofi { lag: 1 },
        Partner::Ti => Feature::Ti,
        Partner::DeltaP => Feature::DeltaP,
        Partner::Lambda => Feature::Lambda,
        Partner::AvgEn => Feature::AvgEn,
    }
}

pub fn combo(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let series = load_series(cfg)?;
    let opts = backtest_options(cfg);
    let combos: Vec<ComboSpec> = cfg
        .combo
        .partners
        .iter()
        .map(|&p| ComboSpec {
            partner: partner_feature(p),
            hist_win: cfg.combo.hist_win,
        })
        .collect();
    let rows = backtest::run_combo(&series, &combos, &cfg.combo.horizons, &opts)?;
    report_failures(&rows);
    backtest::write_combo_csv(out.create("combo.csv")?, &rows)?;
    out.json(
        "combo.json",
        &json!({ "combo": cfg.combo, "options": opts, "rows": rows }),
    )
}

/// SHA-256 of the input file, so a manifest pins the exact data it ran on.
pub fn input_digest(path: &Path) -> Option<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).ok()?;
    Some(format!("{:x}", Sha256::digest(&bytes)))
}
