//! Per-event order-flow and trade contributions and the windowed metrics
//! built from them.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::tick::{SessionTicks, TickRecord};

/// Which ask-side quantity the order-flow contribution uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// Ask quantity added when the ask falls or holds, previous ask quantity
    /// removed when it rises or holds.
    #[default]
    Canonical,
    /// Both ask terms use the previous ask quantity.
    PreviousAsk,
}

pub fn mid_price(tick: &TickRecord) -> f64 {
    tick.mid_price()
}

/// Signed order-flow contribution between two adjacent snapshots.
pub fn event_contribution(prev: &TickRecord, cur: &TickRecord, convention: Convention) -> i64 {
    let ind = |c: bool| c as i64;
    let (qb, qb_prev) = (cur.bid_qty as i64, prev.bid_qty as i64);
    let (qa, qa_prev) = (cur.ask_qty as i64, prev.ask_qty as i64);
    let qa_added = match convention {
        Convention::Canonical => qa,
        Convention::PreviousAsk => qa_prev,
    };
    ind(cur.bid_price >= prev.bid_price) * qb
        - ind(cur.bid_price <= prev.bid_price) * qb_prev
        - ind(cur.ask_price <= prev.ask_price) * qa_added
        + ind(cur.ask_price >= prev.ask_price) * qa_prev
}

/// Signed traded volume between two adjacent snapshots, classified by the
/// last price against the current mid, with a tick test at the mid.
pub fn trade_contribution(prev: &TickRecord, cur: &TickRecord) -> Result<i64> {
    if cur.cum_volume < prev.cum_volume {
        return Err(Error::Data(format!(
            "cumulative volume fell from {} to {} at {}",
            prev.cum_volume, cur.cum_volume, cur.timestamp_ms
        )));
    }
    let v = (cur.cum_volume - prev.cum_volume) as i64;
    let mid = cur.mid_price();
    let sign = if cur.last_price > mid {
        1
    } else if cur.last_price < mid {
        -1
    } else if cur.last_price >= prev.last_price {
        1
    } else {
        -1
    };
    Ok(sign * v)
}

/// Contributions of one tick. Both are `None` on the first tick of a
/// session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EventContribution {
    pub index: usize,
    pub e: Option<i64>,
    pub omega: Option<i64>,
}

impl EventContribution {
    pub fn is_valid(&self) -> bool {
        self.e.is_some()
    }
}

/// Per-tick contributions plus the running session sums every windowed
/// metric is computed from.
#[derive(Debug, Clone)]
pub struct EventSeries {
    pub contributions: Vec<EventContribution>,
    /// Index of the first tick of the session containing each tick.
    pub session_start: Vec<usize>,
    /// Sum of `e` from the session start through each tick.
    pub cum_e: Vec<i64>,
    pub cum_omega: Vec<i64>,
    /// Running session mean of `e` through each tick; 0 before any event.
    pub running_mean_e: Vec<f64>,
    pub mid: Vec<f64>,
    pub last: Vec<f64>,
    pub timestamp_ms: Vec<i64>,
}

impl EventSeries {
    pub fn new(ticks: &SessionTicks, convention: Convention) -> Result<Self> {
        let n = ticks.len();
        let mut s = EventSeries {
            contributions: Vec::with_capacity(n),
            session_start: Vec::with_capacity(n),
            cum_e: Vec::with_capacity(n),
            cum_omega: Vec::with_capacity(n),
            running_mean_e: Vec::with_capacity(n),
            mid: ticks.ticks.iter().map(|t| t.mid_price()).collect(),
            last: ticks.ticks.iter().map(|t| t.last_price).collect(),
            timestamp_ms: ticks.ticks.iter().map(|t| t.timestamp_ms).collect(),
        };
        let mut start = 0;
        for i in 0..n {
            if !ticks.continues[i] {
                start = i;
                s.contributions.push(EventContribution {
                    index: i,
                    e: None,
                    omega: None,
                });
                s.session_start.push(i);
                s.cum_e.push(0);
                s.cum_omega.push(0);
                s.running_mean_e.push(0.0);
                continue;
            }
            let (prev, cur) = (&ticks.ticks[i - 1], &ticks.ticks[i]);
            let e = event_contribution(prev, cur, convention);
            let omega = trade_contribution(prev, cur)?;
            s.contributions.push(EventContribution {
                index: i,
                e: Some(e),
                omega: Some(omega),
            });
            s.session_start.push(start);
            let cum = s.cum_e[i - 1] + e;
            s.cum_e.push(cum);
            s.cum_omega.push(s.cum_omega[i - 1] + omega);
            s.running_mean_e.push(cum as f64 / (i - start) as f64);
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.contributions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contributions.is_empty()
    }

    /// Valid `e_n` values in tick order, with the timestamps of their ticks.
    pub fn e_values(&self) -> (Vec<i64>, Vec<f64>) {
        let ts = self
            .contributions
            .iter()
            .filter(|c| c.is_valid())
            .map(|c| self.timestamp_ms[c.index])
            .collect();
        let es = self
            .contributions
            .iter()
            .filter_map(|c| c.e)
            .map(|e| e as f64)
            .collect();
        (ts, es)
    }

    /// Events in ticks `first..=last` of one session, `first` > session start.
    pub fn ofi(&self, first: usize, last: usize) -> i64 {
        self.cum_e[last] - self.cum_e[first - 1]
    }

    pub fn ti(&self, first: usize, last: usize) -> i64 {
        self.cum_omega[last] - self.cum_omega[first - 1]
    }

    pub fn lambda(&self, first: usize, last: usize) -> f64 {
        let (lo, hi) = self.last[first..=last]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            });
        (hi - lo) / (last + 1 - first) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowSpec {
    /// Consecutive blocks of this many events.
    Ticks(usize),
    /// Wall-clock bins of this many seconds, anchored at each session's
    /// first tick.
    Seconds(f64),
}

impl WindowSpec {
    pub fn label(&self) -> String {
        match *self {
            WindowSpec::Ticks(n) => format!("{n}t"),
            WindowSpec::Seconds(s) => duration_label(s),
        }
    }
}

/// Short human label for a duration in seconds: `0.5s`, `10s`, `2m`, `1h`.
pub fn duration_label(seconds: f64) -> String {
    if seconds >= 3600.0 && (seconds % 3600.0) == 0.0 {
        format!("{}h", seconds / 3600.0)
    } else if seconds >= 60.0 && (seconds % 60.0) == 0.0 {
        format!("{}m", seconds / 60.0)
    } else {
        format!("{seconds}s")
    }
}

/// Ticks `first..end` (half-open) whose events make up one window. The
/// window may be empty (`first == end`); `first - 1` is always a tick of the
/// same session and is the reference point for price changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MetricWindow {
    pub first: usize,
    pub end: usize,
    pub start_ms: i64,
    pub end_ms: i64,
}

impl MetricWindow {
    pub fn events(&self) -> usize {
        self.end - self.first
    }
}

/// Partition every session into windows. Trailing partial windows are
/// dropped.
pub fn make_windows(series: &EventSeries, spec: WindowSpec) -> Result<Vec<MetricWindow>> {
    let mut out = Vec::new();
    let n = series.len();
    let mut s = 0;
    while s < n {
        let mut e = s + 1;
        while e < n && series.session_start[e] == s {
            e += 1;
        }
        match spec {
            WindowSpec::Ticks(w) => {
                if w == 0 {
                    return Err(Error::Config("tick window must be positive".into()));
                }
                let mut first = s + 1;
                while first + w <= e {
                    out.push(MetricWindow {
                        first,
                        end: first + w,
                        start_ms: series.timestamp_ms[first - 1],
                        end_ms: series.timestamp_ms[first + w - 1],
                    });
                    first += w;
                }
            }
            WindowSpec::Seconds(d) => {
                let step = (d * 1000.0).round() as i64;
                if step <= 0 {
                    return Err(Error::Config("duration window must be at least 1 ms".into()));
                }
                let t0 = series.timestamp_ms[s];
                let last_ts = series.timestamp_ms[e - 1];
                let mut cursor = s + 1;
                let mut bin_end = t0 + step;
                while bin_end <= last_ts {
                    let first = cursor;
                    while cursor < e && series.timestamp_ms[cursor] <= bin_end {
                        cursor += 1;
                    }
                    out.push(MetricWindow {
                        first,
                        end: cursor,
                        start_ms: bin_end - step,
                        end_ms: bin_end,
                    });
                    bin_end += step;
                }
            }
        }
        s = e;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    Ofi,
    Ti,
    Lambda,
    AvgEn,
    DeltaP,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Ofi,
        MetricKind::Ti,
        MetricKind::Lambda,
        MetricKind::AvgEn,
        MetricKind::DeltaP,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Ofi => "OFI",
            MetricKind::Ti => "TI",
            MetricKind::Lambda => "Lambda",
            MetricKind::AvgEn => "AvgEn",
            MetricKind::DeltaP => "DeltaP",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .or(match s.to_ascii_lowercase().as_str() {
                "dp" | "deltap" | "delta-p" => Some(MetricKind::DeltaP),
                "avg-en" | "avgen" => Some(MetricKind::AvgEn),
                _ => None,
            })
    }
}

/// One metric over a sequence of windows. `None` marks an undefined value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSeries<F> {
    pub kind: MetricKind,
    pub windows: Vec<MetricWindow>,
    pub values: Vec<Option<F>>,
}

impl<F: Float> MetricSeries<F> {
    /// Defined values only.
    pub fn defined(&self) -> Vec<F> {
        self.values.iter().flatten().copied().collect()
    }
}

/// All metric kinds over the same windows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricTable<F> {
    pub windows: Vec<MetricWindow>,
    pub ofi: Vec<F>,
    pub ti: Vec<F>,
    pub lambda: Vec<Option<F>>,
    pub avg_en: Vec<F>,
    pub delta_p: Vec<F>,
}

impl<F: Float> MetricTable<F> {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn values(&self, kind: MetricKind) -> Vec<Option<F>> {
        let some = |v: &Vec<F>| v.iter().map(|&x| Some(x)).collect();
        match kind {
            MetricKind::Ofi => some(&self.ofi),
            MetricKind::Ti => some(&self.ti),
            MetricKind::Lambda => self.lambda.clone(),
            MetricKind::AvgEn => some(&self.avg_en),
            MetricKind::DeltaP => some(&self.delta_p),
        }
    }

    pub fn series(&self, kind: MetricKind) -> MetricSeries<F> {
        MetricSeries {
            kind,
            windows: self.windows.clone(),
            values: self.values(kind),
        }
    }

    /// Metric values paired with price changes, dropping windows where the
    /// metric is undefined.
    pub fn paired_with_price(&self, kind: MetricKind) -> (Vec<F>, Vec<F>) {
        self.values(kind)
            .into_iter()
            .zip(&self.delta_p)
            .filter_map(|(v, &dp)| v.map(|v| (v, dp)))
            .unzip()
    }
}

/// Evaluate every metric on the given windows.
pub fn window_metrics<F: Float>(series: &EventSeries, windows: &[MetricWindow]) -> Result<MetricTable<F>> {
    let mut t = MetricTable {
        windows: windows.to_vec(),
        ofi: Vec::with_capacity(windows.len()),
        ti: Vec::with_capacity(windows.len()),
        lambda: Vec::with_capacity(windows.len()),
        avg_en: Vec::with_capacity(windows.len()),
        delta_p: Vec::with_capacity(windows.len()),
    };
    for w in windows {
        let inside = w.first >= 1
            && w.first <= w.end
            && w.end <= series.len()
            && series.session_start[w.end - 1] == series.session_start[w.first - 1];
        if !inside {
            return Err(Error::Data(format!("window {w:?} is not inside one session")));
        }
        let base = w.first - 1;
        let last = w.end - 1;
        if w.events() == 0 {
            t.ofi.push(F::zero());
            t.ti.push(F::zero());
            t.lambda.push(None);
            t.avg_en.push(F::zero());
            t.delta_p.push(F::zero());
            continue;
        }
        t.ofi.push(F::lit(series.ofi(w.first, last) as f64));
        t.ti.push(F::lit(series.ti(w.first, last) as f64));
        t.lambda.push(Some(F::lit(series.lambda(w.first, last))));
        t.avg_en
            .push(F::lit(series.running_mean_e[last] - series.running_mean_e[base]));
        t.delta_p.push(F::lit(series.mid[last] - series.mid[base]));
    }
    Ok(t)
}

pub const METRIC_CSV_HEADER: &str = "window_start_ms,window_end_ms,kind,value";

/// Write metric series in long format; undefined values are left empty.
pub fn write_metric_csv<W: Write, F: Float>(
    mut w: W,
    table: &MetricTable<F>,
    kinds: &[MetricKind],
) -> Result<()> {
    writeln!(w, "{METRIC_CSV_HEADER}")?;
    for &kind in kinds {
        for (win, v) in table.windows.iter().zip(table.values(kind)) {
            match v {
                Some(v) => writeln!(w, "{},{},{},{}", win.start_ms, win.end_ms, kind.name(), v)?,
                None => writeln!(w, "{},{},{},", win.start_ms, win.end_ms, kind.name())?,
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn tick(bp: f64, bq: u64, ap: f64, aq: u64) -> TickRecord {
        TickRecord {
            timestamp_ms: 0,
            last_price: bp,
            cum_volume: 0,
            bid_price: bp,
            bid_qty: bq,
            ask_price: ap,
            ask_qty: aq,
            session_id: Arc::from("S"),
        }
    }

    #[test]
    fn event_contribution_examples() {
        let a = tick(3999.8, 10, 4000.0, 8);
        assert_eq!(event_contribution(&a, &a, Convention::Canonical), 0);
        let b = tick(3999.8, 15, 4000.0, 8);
        assert_eq!(event_contribution(&a, &b, Convention::Canonical), 5);
        let c = tick(4000.0, 7, 4000.2, 8);
        let a2 = tick(3999.8, 10, 4000.2, 8);
        assert_eq!(event_contribution(&a2, &c, Convention::Canonical), 7);
    }

    #[test]
    fn conventions_differ_on_ask_quantity() {
        let a = tick(3999.8, 10, 4000.0, 8);
        let b = tick(3999.8, 10, 4000.0, 12);
        assert_eq!(event_contribution(&a, &b, Convention::Canonical), -4);
        assert_eq!(event_contribution(&a, &b, Convention::PreviousAsk), 0);
    }

    fn trade(last: f64, vol: u64) -> TickRecord {
        let mut t = tick(3999.8, 1, 4000.2, 1);
        t.last_price = last;
        t.cum_volume = vol;
        t
    }

    #[test]
    fn trade_contribution_examples() {
        let prev = trade(4000.0, 100);
        assert_eq!(trade_contribution(&prev, &trade(4000.2, 110)).unwrap(), 10);
        assert_eq!(trade_contribution(&prev, &trade(3999.8, 104)).unwrap(), -4);
        assert_eq!(trade_contribution(&prev, &trade(4000.0, 103)).unwrap(), 3);
        let higher = trade(4000.2, 100);
        assert_eq!(trade_contribution(&higher, &trade(4000.0, 103)).unwrap(), -3);
        assert!(trade_contribution(&prev, &trade(4000.0, 99)).is_err());
    }

    #[test]
    fn mid_price_examples() {
        assert_eq!(mid_price(&tick(100.0, 1, 101.0, 1)), 100.5);
        assert!((mid_price(&tick(4000.0, 1, 4000.2, 1)) - 4000.1).abs() < 1e-9);
        assert_eq!(
            mid_price(&tick(99.0, 1, 102.0, 1)),
            mid_price(&tick(100.0, 1, 101.0, 1))
        );
    }

    fn session_from(es: &[(f64, u64, f64, u64, f64)]) -> SessionTicks {
        let id: Arc<str> = Arc::from("S");
        let ticks = es
            .iter()
            .enumerate()
            .map(|(i, &(bp, bq, ap, aq, last))| TickRecord {
                timestamp_ms: i as i64 * 500,
                last_price: last,
                cum_volume: i as u64,
                bid_price: bp,
                bid_qty: bq,
                ask_price: ap,
                ask_qty: aq,
                session_id: id.clone(),
            })
            .collect();
        SessionTicks::from_ticks(ticks)
    }

    #[test]
    fn ofi_sums_contributions() {
        // e = +2, -1, +3 via bid quantity changes.
        let st = session_from(&[
            (10.0, 5, 10.2, 5, 10.0),
            (10.0, 7, 10.2, 5, 10.0),
            (10.0, 6, 10.2, 5, 10.0),
            (10.0, 9, 10.2, 5, 10.0),
        ]);
        let es = EventSeries::new(&st, Convention::Canonical).unwrap();
        let w = make_windows(&es, WindowSpec::Ticks(3)).unwrap();
        assert_eq!(w.len(), 1);
        let t: MetricTable<f64> = window_metrics(&es, &w).unwrap();
        assert_eq!(t.ofi[0], 4.0);
        assert_eq!(t.lambda[0], Some(0.0));
        // running mean 4/3 at the end, 0 at the base tick
        assert!((t.avg_en[0] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_is_range_per_event() {
        let lasts = [100.0, 100.0, 101.2, 100.4, 100.0, 100.6, 100.2];
        let rows: Vec<_> = lasts.iter().map(|&l| (99.8, 1, 102.0, 1, l)).collect();
        let st = session_from(&rows);
        let es = EventSeries::new(&st, Convention::Canonical).unwrap();
        let w = make_windows(&es, WindowSpec::Ticks(6)).unwrap();
        let t: MetricTable<f64> = window_metrics(&es, &w).unwrap();
        assert!((t.lambda[0].unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn empty_duration_window_has_no_lambda() {
        let id: Arc<str> = Arc::from("S");
        let mk = |ts: i64| TickRecord {
            timestamp_ms: ts,
            last_price: 10.0,
            cum_volume: 0,
            bid_price: 10.0,
            bid_qty: 1,
            ask_price: 10.2,
            ask_qty: 1,
            session_id: id.clone(),
        };
        let st = SessionTicks::from_ticks(vec![mk(0), mk(500), mk(3_500)]);
        let es = EventSeries::new(&st, Convention::Canonical).unwrap();
        let w = make_windows(&es, WindowSpec::Seconds(1.0)).unwrap();
        assert_eq!(w.len(), 3);
        let t: MetricTable<f64> = window_metrics(&es, &w).unwrap();
        assert_eq!(t.lambda, vec![Some(0.0), None, None]);
    }

    #[test]
    fn duration_labels() {
        assert_eq!(duration_label(0.5), "0.5s");
        assert_eq!(duration_label(30.0), "30s");
        assert_eq!(duration_label(120.0), "2m");
        assert_eq!(duration_label(3600.0), "1h");
    }
}
