use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use ofi_core::backtest::{evaluate_dataset, run_grid, BacktestOptions, GridSpec};
use ofi_core::lasso::{self, Dataset, LassoOptions};
use ofi_core::metrics::{event_contribution, Convention, EventSeries};
use ofi_core::stats::{autocorr, pearson_corr};
use ofi_core::tick::{
    filter_sessions, generate_synthetic, parse_ticks, write_ticks, SessionSpec, SyntheticConfig, TickRecord,
};

fn tick_strategy() -> impl Strategy<Value = Vec<TickRecord>> {
    // (bid index on the 0.1 grid, spread in 0.1 steps, bid qty, ask qty, volume step, last offset)
    prop::collection::vec(
        (
            30_000u32..50_000,
            1u32..5,
            1u64..500,
            1u64..500,
            0u64..50,
            0u32..6,
        ),
        1..60,
    )
    .prop_map(|rows| {
        let mut cum = 0;
        rows.into_iter()
            .enumerate()
            .map(|(i, (bid, spread, qb, qa, dv, off))| {
                cum += dv;
                TickRecord {
                    timestamp_ms: 1_704_159_000_000 + 500 * i as i64,
                    last_price: (bid + off.min(spread)) as f64 / 10.0,
                    cum_volume: cum,
                    bid_price: bid as f64 / 10.0,
                    bid_qty: qb,
                    ask_price: (bid + spread) as f64 / 10.0,
                    ask_qty: qa,
                    session_id: Arc::from(if i < 30 { "S1" } else { "S2" }),
                }
            })
            .collect()
    })
}

fn synthetic_series() -> &'static EventSeries {
    static SERIES: OnceLock<EventSeries> = OnceLock::new();
    SERIES.get_or_init(|| {
        let mut cfg = SyntheticConfig::closed_loop(8_000, 21);
        cfg.session_ticks = 4_000;
        let ticks = generate_synthetic(&cfg).unwrap();
        let sessions = filter_sessions(&ticks, &SessionSpec::default()).unwrap();
        EventSeries::new(&sessions, Convention::Canonical).unwrap()
    })
}

/// Reflect prices through a constant and swap the book sides.
fn mirror(t: &TickRecord) -> TickRecord {
    const C: f64 = 10_000.0;
    TickRecord {
        bid_price: C - t.ask_price,
        ask_price: C - t.bid_price,
        bid_qty: t.ask_qty,
        ask_qty: t.bid_qty,
        last_price: C - t.last_price,
        ..t.clone()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(ticks in tick_strategy()) {
        let mut buf = Vec::new();
        write_ticks(&mut buf, &ticks).unwrap();
        let back = parse_ticks(buf.as_slice()).unwrap();
        prop_assert_eq!(back, ticks);
    }

    #[test]
    fn mirrored_book_negates_contribution(ticks in tick_strategy()) {
        for w in ticks.windows(2) {
            let e = event_contribution(&w[0], &w[1], Convention::Canonical);
            let m = event_contribution(&mirror(&w[0]), &mirror(&w[1]), Convention::Canonical);
            prop_assert_eq!(m, -e);
        }
    }

    #[test]
    fn ofi_is_additive(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let s = synthetic_series();
        // Events of the first session occupy ticks 1..len.
        let len = s.session_start.iter().position(|&v| v != 0).unwrap();
        let mut idx = [a, b, c].map(|u| 1 + (u * (len - 2) as f64) as usize);
        idx.sort_unstable();
        let [first, mid, last] = idx;
        prop_assume!(first <= mid && mid < last);
        prop_assert_eq!(s.ofi(first, last), s.ofi(first, mid) + s.ofi(mid + 1, last));
        let direct: i64 = (first..=last).map(|i| s.contributions[i].e.unwrap()).sum();
        prop_assert_eq!(s.ofi(first, last), direct);
    }

    #[test]
    fn acf_is_affine_invariant(
        xs in prop::collection::vec(-100.0f64..100.0, 30..200),
        scale in prop_oneof![-50.0f64..-0.1, 0.1f64..50.0],
        shift in -1e3f64..1e3,
    ) {
        let base = autocorr(&xs, 5);
        prop_assume!(base.is_ok());
        let base = base.unwrap();
        let ys: Vec<f64> = xs.iter().map(|x| scale * x + shift).collect();
        let moved = autocorr(&ys, 5).unwrap();
        for k in 1..=5 {
            prop_assert!((base.lag(k) - moved.lag(k)).abs() < 1e-8, "lag {}: {} vs {}", k, base.lag(k), moved.lag(k));
        }
    }

    #[test]
    fn pearson_is_symmetric_and_bounded(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..100),
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(r) = pearson_corr(&x, &y) {
            prop_assert_eq!(r, pearson_corr(&y, &x).unwrap());
            prop_assert!(r.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn unpenalised_lasso_ignores_feature_affine_maps(
        seed in any::<u64>(),
        scales in prop::array::uniform3(prop_oneof![-20.0f64..-0.05, 0.05f64..20.0]),
        shifts in prop::array::uniform3(-100.0f64..100.0),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 80;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| 0.5 * r[0] - r[1] + rng.random_range(-0.1..0.1)).collect();
        let moved: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, v)| scales[j] * v + shifts[j]).collect())
            .collect();
        let names: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let d1 = Dataset::from_rows(names.clone(), &rows, y.clone()).unwrap();
        let d2 = Dataset::from_rows(names, &moved, y).unwrap();
        let opts = LassoOptions { tol: 1e-13, max_iter: 100_000 };
        let p1 = lasso::predict(&lasso::fit(&d1, 0.0, &opts).unwrap(), &d1).unwrap();
        let p2 = lasso::predict(&lasso::fit(&d2, 0.0, &opts).unwrap(), &d2).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            prop_assert!((a - b).abs() < 1e-7, "{} vs {}", a, b);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn doubling_features_leaves_pnl_unchanged(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 400;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 0.8 * r[0] + rng.random_range(-0.5..0.5)).collect();
        let doubled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| 2.0 * v).collect()).collect();
        let names = vec!["x0".to_string(), "x1".to_string()];
        let opts = BacktestOptions::default();
        let a = evaluate_dataset(&Dataset::from_rows(names.clone(), &rows, y.clone()).unwrap(), &opts).unwrap();
        let b = evaluate_dataset(&Dataset::from_rows(names, &doubled, y).unwrap(), &opts).unwrap();
        let close = |u: f64, v: f64| (u - v).abs() <= 1e-9 * (1.0 + u.abs());
        prop_assert!(close(a.test_pnl.total(), b.test_pnl.total()));
        prop_assert!(close(a.train_pnl.total(), b.train_pnl.total()));
        prop_assert!(close(a.cv.lambda, b.cv.lambda));
    }

    #[test]
    fn grid_rows_do_not_depend_on_grid_order(
        hist in Just(vec![1usize, 2, 5]).prop_shuffle(),
        horizons in Just(vec![1usize, 3, 10]).prop_shuffle(),
    ) {
        let s = synthetic_series();
        let opts = BacktestOptions::default();
        let canonical = GridSpec { hist_windows: vec![1, 2, 5], horizons: vec![1, 3, 10], train_fraction: 0.8 };
        let shuffled = GridSpec { hist_windows: hist, horizons, train_fraction: 0.8 };
        let mut a = run_grid(s, &canonical, &opts).unwrap();
        let mut b = run_grid(s, &shuffled, &opts).unwrap();
        let key = |r: &ofi_core::backtest::BacktestRow| (r.hist_win, r.fcast_horizon);
        a.sort_by_key(key);
        b.sort_by_key(key);
        prop_assert!(a.iter().all(|r| r.error.is_none()));
        prop_assert_eq!(a, b);
    }
}
