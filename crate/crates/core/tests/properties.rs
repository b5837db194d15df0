mod common;

use num_rational::Ratio;
use proptest::prelude::*;

use turbodb_core::billing::{build_report, CostRecord, PriceSheet};
use turbodb_core::config::{Config, VmConfig};
use turbodb_core::fabric::meter::charge;
use turbodb_core::fabric::{LazyScalingPolicy, MetricsSample, ScalingDecision, ScalingPolicy, VmPool};
use turbodb_core::money::Money;
use turbodb_core::scheduler::{QueryStatus, ServiceLevel};
use turbodb_core::sim::{simulate, Stop, TraceRow};
use turbodb_core::sql::plan::{Field, Schema};
use turbodb_core::sql::ResultSet;
use turbodb_core::value::{DataType, Value};

fn sheet() -> PriceSheet {
    PriceSheet::from_config(&Config::default().billing)
}

fn level() -> impl Strategy<Value = ServiceLevel> {
    prop::sample::select(ServiceLevel::ALL.to_vec())
}

proptest! {
    #[test]
    fn price_is_additive(a in 0u64..1 << 50, b in 0u64..1 << 50, l in level()) {
        let s = sheet();
        prop_assert_eq!(s.price(a + b, l), s.price(a, l) + s.price(b, l));
    }

    #[test]
    fn price_ratios_are_exact(bytes in 1u64..u64::MAX / 2) {
        let s = sheet();
        let imm = s.price(bytes, ServiceLevel::Immediate);
        prop_assert_eq!(s.price(bytes, ServiceLevel::Relaxed).ratio_to(&imm), Some(Ratio::new(2, 5)));
        prop_assert_eq!(s.price(bytes, ServiceLevel::BestOfEffort).ratio_to(&imm), Some(Ratio::new(1, 10)));
    }

    #[test]
    fn metered_dollars_split_exactly(price in 1i128..10_000_000, parts in prop::collection::vec(0u64..10_000_000, 1..20)) {
        let p = Money::from_micros(price);
        let whole: u64 = parts.iter().sum();
        let sum: Money = parts.iter().map(|&ms| charge(p, ms)).sum();
        prop_assert_eq!(sum, charge(p, whole));
    }

    #[test]
    fn scale_out_covers_the_deficit(
        queued in 0usize..200, free in 0usize..50, provisioning in 0usize..50, spw in 1usize..8,
    ) {
        let mut policy = LazyScalingPolicy { slots_per_worker: spw, low_watermark: 0.2, window: 300_000, floor: 1 };
        let s = MetricsSample {
            at: 0, queued_eligible: queued, running: 0, vm_utilization: 1.0,
            free_ready_slots: free, provisioning_slots: provisioning, active_workers: 1,
        };
        let deficit = queued.saturating_sub(free).saturating_sub(provisioning);
        match policy.evaluate(&[s]) {
            ScalingDecision::ScaleOut(n) => {
                prop_assert!(deficit > 0);
                prop_assert!(n * spw >= deficit);
                prop_assert!((n - 1) * spw < deficit);
            }
            ScalingDecision::Hold => prop_assert_eq!(deficit, 0),
            ScalingDecision::ScaleIn(_) => prop_assert!(false, "scale-in from a single sample"),
        }
    }

    #[test]
    fn scale_in_needs_a_whole_quiet_window(
        busy_at in prop::option::of(0usize..61), util in 0.2f64..1.0, queued in prop::bool::ANY,
    ) {
        let mut policy = LazyScalingPolicy { slots_per_worker: 4, low_watermark: 0.2, window: 300_000, floor: 1 };
        let mut h: Vec<MetricsSample> = (0..=60u64)
            .map(|i| MetricsSample {
                at: i * 5_000, queued_eligible: 0, running: 0, vm_utilization: 0.0,
                free_ready_slots: 8, provisioning_slots: 0, active_workers: 2,
            })
            .collect();
        if let Some(i) = busy_at {
            if queued { h[i].queued_eligible = 1 } else { h[i].vm_utilization = util }
        }
        let d = policy.evaluate(&h);
        match busy_at {
            None => prop_assert_eq!(d, ScalingDecision::ScaleIn(1)),
            Some(_) => prop_assert_eq!(d, ScalingDecision::Hold),
        }
    }

    #[test]
    fn vm_pool_invariants_hold_under_any_decisions(
        ops in prop::collection::vec((0u8..4, 1usize..4, 0u64..200_000), 1..60), floor in 1usize..3,
    ) {
        let mut pool = VmPool::new(VmConfig {
            provision_lag: 90_000,
            unit_price_per_slot_s: Money::from_micros(500),
            slots_per_worker: 4,
            floor,
        });
        let mut held = Vec::new();
        let mut now = 0;
        for (op, n, dt) in ops {
            now += dt;
            pool.refresh(now);
            match op {
                0 => { pool.apply(ScalingDecision::ScaleOut(n), now); }
                1 => { pool.apply(ScalingDecision::ScaleIn(n), now); }
                2 => if let Some(s) = pool.acquire(now) { held.push(s) },
                _ => if let Some(s) = held.pop() { pool.release(s, now).unwrap(); },
            }
            prop_assert!(pool.active_workers() >= floor);
            prop_assert_eq!(pool.busy_slots(), held.len());
            prop_assert!(pool.free_ready_slots() <= pool.ready_slots());
            prop_assert!(pool.busy_slot_ms() <= pool.provisioned_slot_ms(now));
        }
    }

    #[test]
    fn truncation_keeps_a_prefix(n in 0usize..300, limit in 1usize..200) {
        let schema: Schema = vec![Field { name: "x".into(), qualifier: None, dtype: DataType::Int64 }];
        let rows: Vec<_> = (0..n as i64).map(|i| vec![Value::Int(i)]).collect();
        let rs = ResultSet::new(&schema, rows.clone(), Some(limit));
        prop_assert_eq!(rs.rows.len(), n.min(limit));
        prop_assert_eq!(rs.truncated, n > limit);
        prop_assert_eq!(rs.rows_before_truncation, n as u64);
        prop_assert_eq!(&rs.rows[..], &rows[..n.min(limit)]);
    }

    #[test]
    fn cost_report_counts_every_query_in_its_window(
        submits in prop::collection::vec(0u64..600_000, 0..40), from in 0u64..300_000, len in 0u64..400_000,
    ) {
        let records: Vec<CostRecord> = submits.iter().enumerate().map(|(i, &t)| CostRecord {
            id: i as u64 + 1, level: ServiceLevel::Immediate, status: QueryStatus::Finished,
            submit_ms: t, bytes_scanned: 0, billed: Money::ZERO, actual: Money::ZERO,
            pending_ms: None, exec_ms: None,
        }).collect();
        let to = from + len;
        let r = build_report(from, to, &records).unwrap();
        let inside = submits.iter().filter(|&&t| (from..=to).contains(&t)).count();
        prop_assert_eq!(r.queries.len(), inside);
        prop_assert_eq!(r.per_minute.iter().map(|m| m.n).sum::<usize>(), inside);
        prop_assert!(r.queries.windows(2).all(|w| w[0].submit_ms <= w[1].submit_ms));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulated_runs_conserve_money_and_pass_every_check(
        arrivals in prop::collection::vec((0u64..20_000, level(), 0usize..3), 1..40),
        scale in 1u64..2_000_000,
    ) {
        let (_d, catalog) = common::small_catalog(&common::numbers(500));
        let sqls = [
            "SELECT c, COUNT(*) FROM t GROUP BY c",
            "SELECT x FROM t WHERE x > 250 ORDER BY 1 LIMIT 5",
            "SELECT SUM(x) FROM t",
        ];
        let mut t = 0;
        let rows: Vec<TraceRow> = arrivals.into_iter().map(|(gap, level, q)| {
            t += gap;
            TraceRow { offset_ms: t, sql: sqls[q].into(), level }
        }).collect();
        let mut config = Config::default();
        config.engine.data_scale = scale;
        let run = simulate("prop", 0, &rows, config, catalog, 10, Stop::Drain).unwrap();
        prop_assert!(run.checks.is_clean(), "{}", run.checks.summary());
        let totals = &run.report.totals;
        prop_assert_eq!(totals.grand, totals.actual_attributable + totals.pool_overhead);
        prop_assert_eq!(totals.actual_attributable, totals.vm_metered + totals.cf_metered);
        let billed: Money = run.report.per_query.iter().map(|q| q.cost.billed).sum();
        prop_assert_eq!(billed, totals.billed);
        prop_assert!(run.report.per_query.iter().all(|q| q.cost.status == QueryStatus::Finished));
    }
}
