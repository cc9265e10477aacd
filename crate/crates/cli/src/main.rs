//! `ofi`: batch pipelines over tick data and the drift model.
//!
//! Every subcommand reads a TOML config (all blocks optional), applies flag
//! overrides, writes its CSV/JSON artifacts into the output directory and
//! finishes with `manifest.json`. Exit status is 0 on success, 2 for
//! configuration errors, 3 for data errors and 4 for numerical failures.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use ofi_core::{Error, ErrorClass, Result};

use crate::commands::Outputs;
use crate::config::{Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "ofi", version, about = "Order-flow-imbalance analytics pipelines")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Tick CSV to analyse.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Generate synthetic ticks.
    Synth {
        #[arg(long)]
        n_ticks: Option<usize>,
    },
    /// Windowed OFI, TI, Lambda, AvgEn and mid change.
    Metrics,
    /// Autocorrelation of a per-event series.
    Autocorr,
    /// Correlation of each metric with the mid change across window lengths.
    Correlate,
    /// Moments of the per-event order-flow contribution.
    Describe,
    /// Monthly autocorrelation screen.
    Regime,
    /// Closed-form drift and log-return curves.
    TheoryCurves,
    /// Monte Carlo check of the closed forms.
    Simulate,
    /// Rolling LASSO over the window-by-horizon grid.
    Backtest,
    /// Two-factor regressions pairing OFI with a second metric.
    Combo,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Metrics => "metrics",
            Command::Autocorr => "autocorr",
            Command::Correlate => "correlate",
            Command::Describe => "describe",
            Command::Regime => "regime",
            Command::TheoryCurves => "theory-curves",
            Command::Simulate => "simulate",
            Command::Backtest => "backtest",
            Command::Combo => "combo",
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let overrides = Overrides {
        input: cli.input.clone(),
        out: cli.out.clone(),
        seed: cli.seed,
        threads: cli.threads,
        n_ticks: match cli.command {
            Command::Synth { n_ticks } => n_ticks,
            _ => None,
        },
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let mut out = Outputs::new(&cfg)?;
    let result = match cli.command {
        Command::Synth { .. } => commands::synth(&cfg, &mut out),
        Command::Metrics => commands::metrics(&cfg, &mut out),
        Command::Autocorr => commands::autocorr(&cfg, &mut out),
        Command::Correlate => commands::correlate(&cfg, &mut out),
        Command::Describe => commands::describe(&cfg, &mut out),
        Command::Regime => commands::regime(&cfg, &mut out),
        Command::TheoryCurves => commands::theory_curves(&cfg, &mut out),
        Command::Simulate => commands::simulate(&cfg, &mut out),
        Command::Backtest => commands::backtest(&cfg, &mut out),
        Command::Combo => commands::combo(&cfg, &mut out),
    };
    let manifest = json!({
        "subcommand": cli.command.name(),
        "versions": { "ofi-cli": env!("CARGO_PKG_VERSION"), "ofi-core": ofi_core::VERSION },
        "seed": cfg.seed,
        "threads": cfg.threads.unwrap_or_else(rayon::current_num_threads),
        "input_sha256": cfg.input.as_deref().and_then(commands::input_digest),
        "config": cfg,
        "outputs": out.written.clone(),
        "status": result.as_ref().err().map(|e| e.to_string()).unwrap_or_else(|| "ok".into()),
    });
    out.json("manifest.json", &manifest)?;
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}
