//! Snapshot tick records: CSV parsing, session filtering and a synthetic
//! generator driven by the drift/price model.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ou::OuGbmParams;

/// Minimum price increment, in index points.
pub const PRICE_TICK: f64 = 0.2;

pub const TICK_HEADER: &str =
    "timestamp_ms,last_price,cum_volume,bid_price,bid_qty,ask_price,ask_qty,session_id";

/// One order-book snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub timestamp_ms: i64,
    pub last_price: f64,
    /// Contracts traded so far in this session.
    pub cum_volume: u64,
    pub bid_price: f64,
    pub bid_qty: u64,
    pub ask_price: f64,
    pub ask_qty: u64,
    pub session_id: Arc<str>,
}

impl TickRecord {
    pub fn mid_price(&self) -> f64 {
        (self.ask_price + self.bid_price) / 2.0
    }
}

fn field<'a>(fields: &[&'a str], i: usize) -> &'a str {
    fields[i].trim()
}

fn parse_num<T: std::str::FromStr>(s: &str, name: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad {name} `{s}`"),
    })
}

/// Parse the tick CSV format. Line numbers in errors are 1-based and count the
/// header.
pub fn parse_ticks<R: BufRead>(reader: R) -> Result<Vec<TickRecord>> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: "missing header".into(),
            })
        }
    };
    if header.trim_end_matches('\r') != TICK_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `{TICK_HEADER}`"),
        });
    }

    let mut out = Vec::new();
    let mut current: Option<Arc<str>> = None;
    let mut seen: HashSet<Arc<str>> = HashSet::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let session = field(&fields, 7);
        if session.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "empty session_id".into(),
            });
        }
        let session_id: Arc<str> = match &current {
            Some(s) if &**s == session => s.clone(),
            _ => {
                let s: Arc<str> = Arc::from(session);
                if !seen.insert(s.clone()) {
                    return Err(Error::Data(format!(
                        "line {line_no}: session `{session}` is not contiguous"
                    )));
                }
                current = Some(s.clone());
                s
            }
        };
        let tick = TickRecord {
            timestamp_ms: parse_num(field(&fields, 0), "timestamp_ms", line_no)?,
            last_price: parse_num(field(&fields, 1), "last_price", line_no)?,
            cum_volume: parse_num(field(&fields, 2), "cum_volume", line_no)?,
            bid_price: parse_num(field(&fields, 3), "bid_price", line_no)?,
            bid_qty: parse_num(field(&fields, 4), "bid_qty", line_no)?,
            ask_price: parse_num(field(&fields, 5), "ask_price", line_no)?,
            ask_qty: parse_num(field(&fields, 6), "ask_qty", line_no)?,
            session_id,
        };
        validate_tick(&tick, out.last(), line_no)?;
        out.push(tick);
    }
    Ok(out)
}

fn validate_tick(tick: &TickRecord, prev: Option<&TickRecord>, line: usize) -> Result<()> {
    let finite = [tick.last_price, tick.bid_price, tick.ask_price]
        .iter()
        .all(|p| p.is_finite() && *p > 0.0);
    if !finite {
        return Err(Error::InvalidTick {
            line,
            msg: "prices must be positive and finite".into(),
        });
    }
    if tick.ask_price <= tick.bid_price {
        return Err(Error::CrossedBook {
            line,
            bid: tick.bid_price,
            ask: tick.ask_price,
        });
    }
    if let Some(prev) = prev.filter(|p| p.session_id == tick.session_id) {
        if tick.timestamp_ms <= prev.timestamp_ms {
            return Err(Error::Ordering {
                line,
                session: tick.session_id.to_string(),
                timestamp_ms: tick.timestamp_ms,
            });
        }
        if tick.cum_volume < prev.cum_volume {
            return Err(Error::InvalidTick {
                line,
                msg: format!(
                    "cumulative volume fell from {} to {}",
                    prev.cum_volume, tick.cum_volume
                ),
            });
        }
    }
    Ok(())
}

/// Write ticks in the CSV format read by [`parse_ticks`]. Prices carry one
/// fractional digit.
pub fn write_ticks<W: Write>(mut w: W, ticks: &[TickRecord]) -> Result<()> {
    writeln!(w, "{TICK_HEADER}")?;
    for t in ticks {
        writeln!(
            w,
            "{},{:.1},{},{:.1},{},{:.1},{},{}",
            t.timestamp_ms,
            t.last_price,
            t.cum_volume,
            t.bid_price,
            t.bid_qty,
            t.ask_price,
            t.ask_qty,
            t.session_id
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Trading-hours window, in milliseconds after midnight UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionWindow {
    pub open_ms: u32,
    pub close_ms: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    /// Optional intraday windows; ticks outside every window are dropped
    /// before trimming. Empty means the session labels alone delimit
    /// sessions.
    #[serde(default)]
    pub boundaries: Vec<SessionWindow>,
    /// Ticks dropped at each end of every session.
    pub trim_count: usize,
}

impl Default for SessionSpec {
    fn default() -> Self {
        Self {
            boundaries: Vec::new(),
            trim_count: 60,
        }
    }
}

impl SessionSpec {
    pub fn with_trim(trim_count: usize) -> Self {
        Self {
            boundaries: Vec::new(),
            trim_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut sorted = self.boundaries.clone();
        sorted.sort_by_key(|w| w.open_ms);
        for w in &sorted {
            if w.open_ms >= w.close_ms || w.close_ms > 86_400_000 {
                return Err(Error::Config(format!("bad session window {w:?}")));
            }
        }
        if sorted.windows(2).any(|p| p[0].close_ms > p[1].open_ms) {
            return Err(Error::Config("session windows overlap".into()));
        }
        Ok(())
    }

    fn in_hours(&self, timestamp_ms: i64) -> bool {
        if self.boundaries.is_empty() {
            return true;
        }
        let tod = timestamp_ms.rem_euclid(86_400_000) as u32;
        self.boundaries
            .iter()
            .any(|w| tod >= w.open_ms && tod < w.close_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionWarning {
    pub session_id: String,
    pub ticks: usize,
    pub reason: String,
}

/// Session-filtered ticks. `continues[i]` is true when tick `i - 1` belongs
/// to the same session, i.e. when a contribution between the two may be
/// computed.
#[derive(Debug, Clone, Default)]
pub struct SessionTicks {
    pub ticks: Vec<TickRecord>,
    pub continues: Vec<bool>,
    pub warnings: Vec<SessionWarning>,
}

impl SessionTicks {
    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    /// Index ranges of the sessions, in order.
    pub fn sessions(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.ticks.len() {
            if i == self.ticks.len() || !self.continues[i] {
                if i > start {
                    out.push(start..i);
                }
                start = i;
            }
        }
        out
    }

    /// Treat an unfiltered, already clean tick sequence as sessions split by
    /// label.
    pub fn from_ticks(ticks: Vec<TickRecord>) -> Self {
        let continues = (0..ticks.len())
            .map(|i| i > 0 && ticks[i - 1].session_id == ticks[i].session_id)
            .collect();
        Self {
            ticks,
            continues,
            warnings: Vec::new(),
        }
    }
}

/// Drop out-of-hours ticks and `trim_count` ticks at each end of every
/// session. Sessions too short to survive trimming are dropped with a warning.
pub fn filter_sessions(ticks: &[TickRecord], spec: &SessionSpec) -> Result<SessionTicks> {
    spec.validate()?;
    let mut out = SessionTicks::default();
    let mut start = 0;
    while start < ticks.len() {
        let id = &ticks[start].session_id;
        let mut end = start + 1;
        while end < ticks.len() && &ticks[end].session_id == id {
            end += 1;
        }
        let in_hours: Vec<&TickRecord> = ticks[start..end]
            .iter()
            .filter(|t| spec.in_hours(t.timestamp_ms))
            .collect();
        let n = in_hours.len();
        if n < 2 * spec.trim_count || n == 0 {
            log::warn!("dropping session {id}: {n} ticks, trim {}", spec.trim_count);
            out.warnings.push(SessionWarning {
                session_id: id.to_string(),
                ticks: n,
                reason: format!("shorter than twice the trim count ({})", spec.trim_count),
            });
        } else {
            let kept = &in_hours[spec.trim_count..n - spec.trim_count];
            for (j, t) in kept.iter().enumerate() {
                out.ticks.push((*t).clone());
                out.continues.push(j > 0);
            }
        }
        start = end;
    }
    Ok(out)
}

/// Configuration of the synthetic tick generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_ticks: usize,
    pub seed: u64,
    /// Model parameters. `theta` and `dt` are per tick in model time; the
    /// latent state is measured in contracts and `correlation *
    /// impact_scale` maps it to log-price drift.
    pub params: OuGbmParams<f64>,
    pub initial_price: f64,
    /// Wall-clock spacing of snapshots in seconds.
    #[serde(default = "default_tick_seconds")]
    pub tick_seconds: f64,
    /// Upper bound of the uniform noise added to resting quantities.
    #[serde(default = "default_qty_noise")]
    pub qty_noise: u64,
    /// Mean contracts traded per snapshot.
    #[serde(default = "default_trade_rate")]
    pub trade_rate: f64,
    /// Snapshots per session; each session starts on a new day.
    #[serde(default = "default_session_ticks")]
    pub session_ticks: usize,
    /// Timestamp of the first snapshot.
    #[serde(default = "default_start_ms")]
    pub start_ms: i64,
    /// Initial value of the latent order-flow state.
    #[serde(default)]
    pub initial_state: f64,
    /// Largest gap, in price ticks, between the latent price and the quotes
    /// before the quotes are moved regardless of the order flow.
    #[serde(default = "default_max_quote_lag")]
    pub max_quote_lag: i64,
    /// Depth imbalance above which the quotes step towards the thinner side.
    /// Defaults to four stationary standard deviations of the latent state
    /// plus ten contracts.
    #[serde(default)]
    pub queue_cap: Option<u64>,
}

fn default_tick_seconds() -> f64 {
    0.5
}
fn default_qty_noise() -> u64 {
    3
}
fn default_trade_rate() -> f64 {
    2.0
}
fn default_session_ticks() -> usize {
    14_400
}
fn default_max_quote_lag() -> i64 {
    20
}
fn default_start_ms() -> i64 {
    // 2024-01-02T01:30:00Z
    1_704_159_000_000
}

impl SyntheticConfig {
    pub fn new(n_ticks: usize, seed: u64, params: OuGbmParams<f64>) -> Self {
        Self {
            n_ticks,
            seed,
            params,
            initial_price: 4000.0,
            tick_seconds: default_tick_seconds(),
            qty_noise: default_qty_noise(),
            trade_rate: default_trade_rate(),
            session_ticks: default_session_ticks(),
            start_ms: default_start_ms(),
            initial_state: 0.0,
            max_quote_lag: default_max_quote_lag(),
            queue_cap: None,
        }
    }

    /// Closed-loop preset: a slowly reverting, jumpy order-flow state whose
    /// level feeds the price drift strongly enough to show up in short-horizon
    /// regressions.
    pub fn closed_loop(n_ticks: usize, seed: u64) -> Self {
        let params = OuGbmParams::new(0.02, 8.0, 2.5e-5)
            .with_dt(1.0)
            .with_laplace_jumps(0.5)
            .with_coupling(1.0, 1e-6);
        Self::new(n_ticks, seed, params)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_ticks == 0 {
            return Err(Error::Config("n_ticks must be positive".into()));
        }
        if !(self.tick_seconds > 0.0) {
            return Err(Error::Config("tick_seconds must be positive".into()));
        }
        if !(self.initial_price > PRICE_TICK) {
            return Err(Error::Config("initial_price must exceed one price tick".into()));
        }
        if !(self.trade_rate >= 0.0) {
            return Err(Error::Config("trade_rate must be non-negative".into()));
        }
        let tick_ms = (self.tick_seconds * 1000.0).round();
        if tick_ms < 1.0 {
            return Err(Error::Config("tick_seconds below one millisecond".into()));
        }
        if self.max_quote_lag < 1 {
            return Err(Error::Config("max_quote_lag must be at least one tick".into()));
        }
        if self.session_ticks == 0 || self.session_ticks as f64 * tick_ms >= 86_400_000.0 {
            return Err(Error::Config("session_ticks must fit within one day".into()));
        }
        Ok(())
    }
}

/// Mid price in half-tick units for a continuous price.
fn half_tick_index(price: f64) -> i64 {
    (price / (PRICE_TICK / 2.0)).round() as i64
}

/// Bid and ask grid indices for a mid in half-tick units: a one-tick spread
/// when the mid sits between grid points, two ticks when it sits on one.
fn quotes(half: i64) -> (i64, i64) {
    if half.rem_euclid(2) == 1 {
        let bid = (half - 1) / 2;
        (bid, bid + 1)
    } else {
        (half / 2 - 1, half / 2 + 1)
    }
}

/// Grid index to a price with one decimal, matching what the CSV round-trips.
fn grid_price(index: i64) -> f64 {
    (index * 2) as f64 / 10.0
}

/// Resting quantities for the next snapshot and whether they book `target`
/// exactly. `step` is the mid move in half ticks (-1, 0 or 1) and `wide`
/// tells whether the current spread is two ticks.
fn next_quantities(qb: i64, qa: i64, target: i64, step: i64, wide: bool, base: i64) -> (i64, i64, bool) {
    // Split a required difference `qb - qa = d` into positive quantities.
    let split = |d: i64| {
        if d >= 0 {
            (base + d, base)
        } else {
            (base, base - d)
        }
    };
    match (step, wide) {
        (0, _) => {
            let (b, a) = split(qb - qa + target);
            (b, a, true)
        }
        // Bid rises to meet the ask: e = qb' - qa' + qa.
        (1, true) => {
            let (b, a) = split(target - qa);
            (b, a, true)
        }
        // Ask falls to meet the bid: e = qb' - qb - qa'.
        (-1, true) => {
            let (b, a) = split(target + qb);
            (b, a, true)
        }
        // Ask lifts away from the bid: e = qb' - qb + qa.
        (1, false) => {
            let b = target + qb - qa;
            (b.max(1), base, b >= 1)
        }
        // Bid drops away from the ask: e = -qb - qa' + qa.
        _ => {
            let a = qa - qb - target;
            (base, a.max(1), a >= 1)
        }
    }
}

/// Generate a synthetic snapshot stream.
///
/// A latent order-flow state `x` follows an exact AR(1) discretisation of the
/// O-U drift with Laplace compound Poisson innovations; a latent log price
/// follows the GBM with drift `rho k x`. The quoted mid tracks the latent
/// price in half-tick steps, alternating between one- and two-tick spreads.
/// Resting quantities are chosen so that the canonical order-flow
/// contribution of every snapshot equals `round(x_n)`. A widening step that
/// cannot book that value is deferred until the quotes lag the latent price
/// by `max_quote_lag` ticks, at which point it is forced and the
/// contribution is only approximate. When the depth imbalance exceeds
/// `queue_cap` the quotes step towards the thin side, which keeps queues
/// bounded and forced steps rare.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<TickRecord>> {
    generate_synthetic_with_state(config).map(|(ticks, _)| ticks)
}

/// As [`generate_synthetic`], also returning the latent order-flow state at
/// every snapshot.
pub fn generate_synthetic_with_state(config: &SyntheticConfig) -> Result<(Vec<TickRecord>, Vec<f64>)> {
    config.validate()?;
    let p = &config.params;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let tick_ms = (config.tick_seconds * 1000.0).round() as i64;
    let phi = (-p.theta * p.dt).exp();
    let coupling = p.coupling();
    let sigma = p.volatility;
    let sqrt_dt = p.dt.sqrt();
    let jump = p.jumps.map(|j| (j.rate * p.dt, j.scale));
    let poisson = match jump {
        Some((mean, _)) if mean > 0.0 => Some(Poisson::new(mean).map_err(|e| Error::Config(e.to_string()))?),
        _ => None,
    };
    let gauss_sd = if jump.is_none() {
        (p.levy_variance * p.dt).sqrt()
    } else {
        0.0
    };
    let stationary_sd = if phi < 1.0 {
        (p.levy_variance * p.dt / (1.0 - phi * phi)).sqrt()
    } else {
        0.0
    };
    let trades = if config.trade_rate > 0.0 {
        Some(Poisson::new(config.trade_rate).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let max_gap = 2 * config.max_quote_lag;
    let queue_cap = config
        .queue_cap
        .map(|c| c as i64)
        .unwrap_or_else(|| (4.0 * stationary_sd).ceil() as i64 + 10);

    let mut out = Vec::with_capacity(config.n_ticks);
    let mut states = Vec::with_capacity(config.n_ticks);
    let mut x = config.initial_state;
    let mut log_price = config.initial_price.ln();
    let mut half = half_tick_index(config.initial_price);
    let (mut qb, mut qa): (i64, i64) = (1, 1);
    let mut last_price = grid_price(quotes(half).0);
    let mut cum_volume = 0u64;
    let mut session: Arc<str> = Arc::from("");

    for n in 0..config.n_ticks {
        let session_no = n / config.session_ticks;
        let in_session = n % config.session_ticks;
        let timestamp_ms = config.start_ms + session_no as i64 * 86_400_000 + in_session as i64 * tick_ms;

        if n > 0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            log_price += (coupling * x - 0.5 * sigma * sigma) * p.dt + sigma * sqrt_dt * z;
            let mut innovation = 0.0;
            if let (Some(pois), Some((_, scale))) = (&poisson, jump) {
                let count: f64 = pois.sample(&mut rng);
                for _ in 0..count as u64 {
                    let e: f64 = Exp1.sample(&mut rng);
                    innovation += if rng.random::<bool>() {
                        scale * e
                    } else {
                        -scale * e
                    };
                }
            } else if gauss_sd > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                innovation = gauss_sd * z;
            }
            x = p.long_run_drift + phi * (x - p.long_run_drift) + innovation;
        }

        let base = 1 + if config.qty_noise > 0 {
            rng.random_range(0..=config.qty_noise) as i64
        } else {
            0
        };
        let target = x.round() as i64;
        let latent = half_tick_index(log_price.exp());
        if in_session == 0 {
            session_start(&mut session, &mut cum_volume, timestamp_ms);
            half = latent;
            qb = base;
            qa = base;
        } else {
            let gap = latent - half;
            let wide = half.rem_euclid(2) == 0;
            let queue_step = (qb - qa).signum();
            let relieve = next_quantities(qb, qa, target, queue_step, wide, base);
            let toward = next_quantities(qb, qa, target, gap.signum(), wide, base);
            let (step, (b, a, _)) =
                if (qb - qa).abs() > queue_cap && relieve.2 && (gap - queue_step).abs() < max_gap {
                    // An oversized queue moves the quotes towards the thin side.
                    (queue_step, relieve)
                } else if gap != 0 && (toward.2 || gap.abs() >= max_gap) {
                    (gap.signum(), toward)
                } else {
                    (0, next_quantities(qb, qa, target, 0, wide, base))
                };
            half += step;
            qb = b;
            qa = a;
        }
        let (bid, ask) = quotes(half);
        let (bid_price, ask_price) = (grid_price(bid), grid_price(ask));

        let volume = trades.as_ref().map(|t| t.sample(&mut rng) as u64).unwrap_or(0);
        if volume > 0 {
            let tilt = if stationary_sd > 0.0 {
                (x / stationary_sd).tanh()
            } else {
                0.0
            };
            let buy = rng.random::<f64>() < 0.5 + 0.4 * tilt;
            last_price = if buy { ask_price } else { bid_price };
            cum_volume += volume;
        }

        out.push(TickRecord {
            timestamp_ms,
            last_price,
            cum_volume,
            bid_price,
            bid_qty: qb as u64,
            ask_price,
            ask_qty: qa as u64,
            session_id: session.clone(),
        });
        states.push(x);
    }
    Ok((out, states))
}

fn session_start(session: &mut Arc<str>, cum_volume: &mut u64, timestamp_ms: i64) {
    let date = chrono::DateTime::from_timestamp_millis(timestamp_ms).unwrap_or_default();
    *session = Arc::from(format!("S{}", date.format("%Y%m%d")).as_str());
    *cum_volume = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROW: &str = "1000,4000.0,10,3999.8,5,4000.2,7,S1";

    fn csv(rows: &[&str]) -> String {
        let mut s = String::from(TICK_HEADER);
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s.push('\n');
        s
    }

    #[test]
    fn parses_a_row() {
        let ticks = parse_ticks(csv(&[ROW]).as_bytes()).unwrap();
        let t = &ticks[0];
        assert_eq!(t.timestamp_ms, 1000);
        assert_eq!(t.last_price, 4000.0);
        assert_eq!(t.cum_volume, 10);
        assert_eq!((t.bid_price, t.bid_qty), (3999.8, 5));
        assert_eq!((t.ask_price, t.ask_qty), (4000.2, 7));
        assert_eq!(&*t.session_id, "S1");
    }

    #[test]
    fn rejects_crossed_book() {
        let err = parse_ticks(csv(&["1000,4000.0,10,3999.8,5,3999.0,7,S1"]).as_bytes()).unwrap_err();
        assert!(matches!(err, Error::CrossedBook { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_repeated_timestamp() {
        let err = parse_ticks(csv(&[ROW, "1000,4000.0,12,3999.8,5,4000.2,7,S1"]).as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Ordering { line: 3, .. }), "{err}");
    }

    #[test]
    fn reports_malformed_line_number() {
        let err = parse_ticks(csv(&[ROW, "1500,4000.0,x,3999.8,5,4000.2,7,S1"]).as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_ticks(csv(&["1,2,3"]).as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(parse_ticks("wrong,header\n".as_bytes()).is_err());
    }

    #[test]
    fn rejects_volume_reset_within_session() {
        let err = parse_ticks(csv(&[ROW, "1500,4000.0,9,3999.8,5,4000.2,7,S1"]).as_bytes()).unwrap_err();
        assert!(matches!(err, Error::InvalidTick { line: 3, .. }));
        // A new session may restart the counter.
        assert!(parse_ticks(csv(&[ROW, "1500,4000.0,0,3999.8,5,4000.2,7,S2"]).as_bytes()).is_ok());
    }

    fn session(id: &str, n: usize) -> Vec<TickRecord> {
        let id: Arc<str> = Arc::from(id);
        (0..n)
            .map(|i| TickRecord {
                timestamp_ms: i as i64 * 500,
                last_price: 4000.0,
                cum_volume: i as u64,
                bid_price: 3999.8,
                bid_qty: 1,
                ask_price: 4000.0,
                ask_qty: 1,
                session_id: id.clone(),
            })
            .collect()
    }

    #[test]
    fn trims_session_edges() {
        let ticks = session("A", 100);
        let f = filter_sessions(&ticks, &SessionSpec::with_trim(10)).unwrap();
        assert_eq!(f.len(), 80);
        assert!(!f.continues[0]);
        assert!(f.continues[1..].iter().all(|&c| c));
        assert_eq!(f.ticks[0].timestamp_ms, 10 * 500);
    }

    #[test]
    fn drops_short_session() {
        let mut ticks = session("A", 15);
        ticks.extend(session("B", 30));
        let f = filter_sessions(&ticks, &SessionSpec::with_trim(10)).unwrap();
        assert_eq!(f.warnings.len(), 1);
        assert_eq!(f.warnings[0].session_id, "A");
        assert_eq!(f.len(), 10);
    }

    #[test]
    fn zero_trim_is_identity_with_flags() {
        let mut ticks = session("A", 5);
        ticks.extend(session("B", 4));
        let f = filter_sessions(&ticks, &SessionSpec::with_trim(0)).unwrap();
        assert_eq!(f.ticks, ticks);
        assert_eq!(
            f.continues,
            vec![false, true, true, true, true, false, true, true, true]
        );
        assert_eq!(f.sessions(), vec![0..5, 5..9]);
    }

    #[test]
    fn no_pair_spans_sessions() {
        let mut ticks = session("A", 40);
        ticks.extend(session("B", 40));
        ticks.extend(session("C", 12));
        let f = filter_sessions(&ticks, &SessionSpec::with_trim(5)).unwrap();
        for i in 1..f.len() {
            if f.continues[i] {
                assert_eq!(f.ticks[i].session_id, f.ticks[i - 1].session_id);
            }
        }
    }

    #[test]
    fn trading_hours_filter() {
        let spec = SessionSpec {
            boundaries: vec![SessionWindow {
                open_ms: 0,
                close_ms: 5_000,
            }],
            trim_count: 0,
        };
        let f = filter_sessions(&session("A", 20), &spec).unwrap();
        assert_eq!(f.len(), 10);
        let bad = SessionSpec {
            boundaries: vec![
                SessionWindow {
                    open_ms: 0,
                    close_ms: 5_000,
                },
                SessionWindow {
                    open_ms: 4_000,
                    close_ms: 9_000,
                },
            ],
            trim_count: 0,
        };
        assert!(bad.validate().is_err());
    }

    fn base_params() -> OuGbmParams<f64> {
        OuGbmParams::new(0.5, 8.0, 2.5e-5)
            .with_dt(1.0)
            .with_laplace_jumps(0.3)
            .with_coupling(0.5, 5e-6)
    }

    #[test]
    fn synthetic_is_deterministic() {
        let cfg = SyntheticConfig::new(5_000, 1, base_params());
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        let mut wa = Vec::new();
        let mut wb = Vec::new();
        write_ticks(&mut wa, &a).unwrap();
        write_ticks(&mut wb, &b).unwrap();
        assert_eq!(wa, wb);
    }

    #[test]
    fn synthetic_noiseless_price_is_constant() {
        let params = OuGbmParams::new(0.5, 0.0, 0.0).with_dt(1.0);
        let ticks = generate_synthetic(&SyntheticConfig::new(2_000, 3, params)).unwrap();
        let mid0 = ticks[0].mid_price();
        assert!(ticks.iter().all(|t| t.mid_price() == mid0));
    }

    #[test]
    fn synthetic_book_is_valid_and_round_trips() {
        let mut cfg = SyntheticConfig::new(3_000, 9, base_params());
        cfg.session_ticks = 1_000;
        let ticks = generate_synthetic(&cfg).unwrap();
        for t in &ticks {
            assert!(t.ask_price > t.bid_price);
            let spread = t.ask_price - t.bid_price;
            assert!((spread - PRICE_TICK).abs() < 1e-9 || (spread - 2.0 * PRICE_TICK).abs() < 1e-9);
            assert!(t.bid_qty >= 1 && t.ask_qty >= 1);
        }
        let mut buf = Vec::new();
        write_ticks(&mut buf, &ticks).unwrap();
        let back = parse_ticks(buf.as_slice()).unwrap();
        assert_eq!(back, ticks);
        assert_eq!(SessionTicks::from_ticks(back).sessions().len(), 3);
    }

    #[test]
    fn synthetic_config_validation() {
        let mut cfg = SyntheticConfig::new(0, 1, base_params());
        assert!(generate_synthetic(&cfg).is_err());
        cfg.n_ticks = 10;
        cfg.tick_seconds = 0.0;
        assert!(generate_synthetic(&cfg).is_err());
    }
}
