//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use num_rational::Ratio;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use turbodb_core::billing::PriceSheet;
use turbodb_core::config::Config;
use turbodb_core::fabric::{Pool, ScalingDecision};
use turbodb_core::money::Money;
use turbodb_core::rng::SplitMix64;
use turbodb_core::scheduler::{QueryStatus, ServiceLevel};
use turbodb_core::sim::scenario::{Arrival, Burst, LevelMix};
use turbodb_core::sim::{compare_levels, run_scenario, simulate_scenario, Scenario, SimRun};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, violations: &[String], ok_detail: String) -> Outcome {
    Outcome {
        name,
        pass: violations.is_empty(),
        detail: match violations.first() {
            None => ok_detail,
            Some(first) => format!("{} violation(s); first: {first}", violations.len()),
        },
    }
}

/// A random scenario over the W1 query templates with randomized load and
/// scheduler settings.
fn random_scenario(seed: u64, w1: &Scenario) -> Scenario {
    let mut rng = SplitMix64::stream(seed, 0xACCE);
    let duration_s = 900.0 + 60.0 * rng.below(16) as f64;
    let bursts = (0..rng.below(3))
        .map(|_| {
            let start = rng.below(duration_s as usize - 120) as f64;
            Burst {
                start_s: start,
                end_s: start + 60.0 + rng.below(400) as f64,
                multiplier: 2.0 + rng.below(5) as f64,
            }
        })
        .collect();
    let mut weights = BTreeMap::new();
    for level in ServiceLevel::ALL {
        weights.insert(level, 0.1 + rng.next_f64());
    }
    let mut config = BTreeMap::new();
    let scale = [300, 1000, 3000, 6000][rng.below(4)];
    config.insert("engine.data_scale".to_string(), scale.into());
    config.insert("sched.default_grace_s".to_string(), (60 + rng.below(541)).into());
    config.insert("vm.provision_lag_s".to_string(), (60 + rng.below(61)).into());
    config.insert("cf.price_multiplier".to_string(), (9 + rng.below(16)).into());
    config.insert("sched.cf_parallelism".to_string(), (1 + rng.below(8)).into());
    config.insert("sched.vm_parallelism".to_string(), (1 + rng.below(3)).into());
    Scenario {
        name: format!("random-{seed}"),
        seed,
        duration_s,
        arrival: Arrival {
            rate_per_min: 1.0 + 7.0 * rng.next_f64(),
            bursts,
        },
        query_mix: w1.query_mix.clone(),
        level_mix: LevelMix::Weights(weights),
        result_limit: 50,
        config,
    }
}

struct Labeled {
    label: String,
    run: SimRun,
}

fn pending_violations(runs: &[Labeled]) -> (Vec<String>, usize) {
    let mut v = Vec::new();
    let mut checked = 0;
    for Labeled { label, run } in runs {
        let c = &run.coordinator;
        let tick = c.config().sched.tick;
        let lag = c.config().cf.startup_lag;
        for q in c.records() {
            let bound = match q.level {
                ServiceLevel::Immediate => tick + lag,
                ServiceLevel::Relaxed if q.cap_delayed => continue,
                ServiceLevel::Relaxed => q.grace.expect("relaxed queries carry a grace period") + tick + lag,
                ServiceLevel::BestOfEffort => continue,
            };
            if q.status == QueryStatus::Failed && q.start_ms.is_none() {
                continue;
            }
            checked += 1;
            let waited = q.start_ms.unwrap_or(run.end_ms) - q.submit_ms;
            if waited > bound {
                v.push(format!("{label}: query {} ({}) waited {waited} ms > {bound} ms", q.id, q.level.name()));
            }
        }
    }
    (v, checked)
}

fn purity_violations(runs: &[Labeled]) -> Vec<String> {
    let mut v = Vec::new();
    for Labeled { label, run } in runs {
        let c = &run.coordinator;
        let level: HashMap<u64, ServiceLevel> = c.records().iter().map(|q| (q.id, q.level)).collect();
        for e in c.meter().entries() {
            if e.pool == Pool::Cf && level[&e.query_id] == ServiceLevel::BestOfEffort {
                v.push(format!("{label}: CF meter entry for best-of-effort query {}", e.query_id));
            }
        }
        for e in c.scaling_events() {
            if matches!(e.decision, ScalingDecision::ScaleOut(_)) && e.pending[0] + e.pending[1] == 0 {
                v.push(format!("{label}: scale-out at {} ms with only best-of-effort pending", e.at));
            }
        }
        // Independent of the recorded counts: at every scale-out some
        // non-BoE query had arrived and not yet started.
        for e in c.scaling_events() {
            if !matches!(e.decision, ScalingDecision::ScaleOut(_)) {
                continue;
            }
            let waiting = c.records().iter().any(|q| {
                q.level != ServiceLevel::BestOfEffort && q.submit_ms <= e.at && q.start_ms.is_none_or(|s| s > e.at)
            });
            if !waiting {
                v.push(format!("{label}: scale-out at {} ms with no eligible query waiting", e.at));
            }
        }
    }
    v
}

fn conservation_violations(runs: &[Labeled]) -> Vec<String> {
    let mut v = Vec::new();
    for Labeled { label, run } in runs {
        let c = &run.coordinator;
        let vm_price = c.config().vm.unit_price_per_slot_s;
        let cf_price = vm_price.scale(c.config().cf.price_multiplier);
        let per_second = |price: Money, ms: u128| price.scale(Ratio::new(ms as i128, 1000));
        let metered: Money = c.meter().entries().iter().map(|e| e.dollars).sum();
        let acc = c.accounting();
        let overhead = per_second(vm_price, acc.vm_provisioned_slot_ms - acc.vm_busy_slot_ms);
        let pools = per_second(vm_price, c.vm().provisioned_slot_ms(run.end_ms)) + per_second(cf_price, c.cf().busy_ms());
        if metered + overhead != pools {
            v.push(format!("{label}: metered {metered} + overhead {overhead} != pools {pools}"));
        }
        let busy_metered: u128 = c.meter().entries().iter().filter(|e| e.pool == Pool::Vm).map(|e| e.worker_ms as u128).sum();
        if busy_metered != c.vm().busy_slot_ms() {
            v.push(format!(
                "{label}: VM meter has {busy_metered} slot-ms, pool recorded {}",
                c.vm().busy_slot_ms()
            ));
        }
    }
    v
}

fn legal(from: Option<QueryStatus>, to: QueryStatus) -> bool {
    use QueryStatus::*;
    matches!(
        (from, to),
        (None, Pending) | (Some(Pending), Running) | (Some(Pending), Failed) | (Some(Running), Finished) | (Some(Running), Failed)
    )
}

fn state_machine_violations(runs: &[Labeled]) -> (Vec<String>, usize) {
    let mut v = Vec::new();
    let mut transitions = 0;
    for Labeled { label, run } in runs {
        let c = &run.coordinator;
        let mut state: HashMap<u64, (QueryStatus, u64)> = HashMap::new();
        for t in c.transitions() {
            transitions += 1;
            let prev = state.get(&t.query_id).copied();
            if t.from != prev.map(|p| p.0) || !legal(t.from, t.to) {
                v.push(format!("{label}: query {} {:?} -> {:?}", t.query_id, t.from, t.to));
            }
            if prev.is_some_and(|(_, at)| t.at < at) {
                v.push(format!("{label}: query {} transition went back in time", t.query_id));
            }
            state.insert(t.query_id, (t.to, t.at));
        }
        for q in c.records() {
            if state.get(&q.id).map(|s| s.0) != Some(q.status) {
                v.push(format!("{label}: query {} record says {:?}, trace disagrees", q.id, q.status));
            }
        }
        // FIFO within a level: dispatch order follows submission order.
        for level in ServiceLevel::ALL {
            let qs: Vec<_> = c
                .records()
                .iter()
                .filter(|q| q.level == level && !(q.status == QueryStatus::Failed && q.dispatch_ms.is_none()))
                .collect();
            for w in qs.windows(2) {
                let ok = match (w[0].dispatch_ms, w[1].dispatch_ms) {
                    (Some(a), Some(b)) => a <= b,
                    (None, Some(_)) => false,
                    _ => true,
                };
                if !ok {
                    v.push(format!("{label}: {} query {} dispatched before earlier query {}", level.name(), w[1].id, w[0].id));
                }
            }
        }
    }
    (v, transitions)
}

fn pricing() -> Outcome {
    let sheet = PriceSheet::from_config(&Config::default().billing);
    let mut runner = TestRunner::new(PropConfig {
        cases: 10_000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let levels = prop_oneof![
        Just(ServiceLevel::Immediate),
        Just(ServiceLevel::Relaxed),
        Just(ServiceLevel::BestOfEffort)
    ];
    let bytes = prop_oneof![0u64..1 << 20, 0u64..1 << 45, any::<u64>()];
    let result = runner.run(&(bytes, levels), |(bytes, level)| {
        let rate_micros: i128 = match level {
            ServiceLevel::Immediate => 5_000_000,
            ServiceLevel::Relaxed => 2_000_000,
            ServiceLevel::BestOfEffort => 500_000,
        };
        let want = Ratio::new(rate_micros * bytes as i128, 1i128 << 40);
        let got = sheet.price(bytes, level);
        prop_assert_eq!(got.micros(), want);
        if bytes > 0 {
            let imm = sheet.price(bytes, ServiceLevel::Immediate);
            prop_assert_eq!(sheet.price(bytes, ServiceLevel::Relaxed).ratio_to(&imm), Some(Ratio::new(2, 5)));
            prop_assert_eq!(sheet.price(bytes, ServiceLevel::BestOfEffort).ratio_to(&imm), Some(Ratio::new(1, 10)));
        }
        Ok(())
    });
    Outcome {
        name: "pricing exactness",
        pass: result.is_ok(),
        detail: match result {
            Ok(()) => "10000 (bytes, level) pairs exact; relaxed/immediate = 2/5, best_of_effort/immediate = 1/10".into(),
            Err(e) => e.to_string(),
        },
    }
}

fn oracle_equivalence() -> Outcome {
    const WORLDS: u64 = 10;
    const PER_WORLD: usize = 50;
    let mut failures = Vec::new();
    let mut nonempty = 0;
    for w in 0..WORLDS {
        let dir = tempfile::tempdir().unwrap();
        let catalog = common::querygen::world(dir.path(), 1000 + w);
        let checker = common::equiv::Checker::new(catalog);
        let mut rng = SplitMix64::new(7000 + w);
        for _ in 0..PER_WORLD {
            let sql = common::querygen::query(&mut rng);
            match checker.check(common::querygen::DB, &sql) {
                Ok(rows) => nonempty += usize::from(rows > 0),
                Err(e) => failures.push(e),
            }
        }
    }
    let total = WORLDS as usize * PER_WORLD;
    outcome(
        "engine oracle equivalence",
        &failures,
        format!("{total} queries x parallelism {{1,2,4,8}} x {{VM, CF}}: 0 mismatches ({nonempty} with non-empty results)"),
    )
}

fn main() {
    let started = Instant::now();
    let mut results = Vec::new();
    let catalog = common::fixture();
    let base = Config::default();
    let w1 = common::w1();

    // Cost ratios over the three forced-level runs of W1.
    let t = Instant::now();
    let cmp = compare_levels(&w1, base.clone(), catalog.clone());
    let wall = t.elapsed();
    match &cmp {
        Ok(c) => {
            let boe = c.outcome(ServiceLevel::BestOfEffort);
            let fast = wall < Duration::from_secs(60);
            results.push(Outcome {
                name: "cost ratio relaxed",
                pass: c.relaxed_ratio >= 2.0 && fast,
                detail: format!(
                    "immediate/relaxed = {:.3} (floor 2.0, band [2, 5]) over {} common queries; wall {:.1} s for three 60-minute runs",
                    c.relaxed_ratio,
                    c.common_queries,
                    wall.as_secs_f64()
                ),
            });
            results.push(Outcome {
                name: "cost ratio best-of-effort",
                pass: c.boe_ratio >= 10.0,
                detail: format!(
                    "immediate/best_of_effort = {:.3} (floor 10.0); best-of-effort finished {}, stragglers {}",
                    c.boe_ratio, boe.finished, boe.stragglers
                ),
            });
            println!("{}", c.table());
        }
        Err(e) => {
            for name in ["cost ratio relaxed", "cost ratio best-of-effort"] {
                results.push(Outcome {
                    name,
                    pass: false,
                    detail: e.to_string(),
                });
            }
        }
    }

    // Every simulation run below feeds the zero-tolerance criteria.
    let mut runs = Vec::new();
    let mut sim_errors = Vec::new();
    let mut add = |label: String, s: &Scenario| match simulate_scenario(s, base.clone(), catalog.clone()) {
        Ok(run) => runs.push(Labeled { label, run }),
        Err(e) => sim_errors.push(format!("{label}: {e}")),
    };
    add("w1".into(), &w1);
    for level in ServiceLevel::ALL {
        add(format!("w1 forced {}", level.name()), &w1.forced(level));
    }
    for seed in 1..=50 {
        add(format!("random seed {seed}"), &random_scenario(seed, &w1));
    }
    let builtin: Vec<String> = runs
        .iter()
        .flat_map(|r| {
            r.run
                .checks
                .all()
                .flat_map(|(name, v)| v.iter().map(move |m| format!("{name}: {m}")))
                .map(|m| format!("{}: built-in {m}", r.label))
                .collect::<Vec<_>>()
        })
        .collect();
    let with_builtin = |mut v: Vec<String>, keys: &[&str]| {
        v.extend(sim_errors.iter().cloned());
        v.extend(builtin.iter().filter(|m| keys.iter().any(|k| m.contains(k))).cloned());
        v
    };

    let (pending, checked) = pending_violations(&runs);
    results.push(outcome(
        "pending-time bounds",
        &with_builtin(pending, &["pending-time bounds"]),
        format!("{checked} bounded queries over W1 and 50 random scenarios, all within bound"),
    ));

    results.push(outcome(
        "best-of-effort purity",
        &with_builtin(purity_violations(&runs), &["best-of-effort purity"]),
        format!(
            "{} runs: no CF meter entry for best-of-effort, no scale-out with only best-of-effort pending",
            runs.len()
        ),
    ));

    results.push(pricing());
    results.push(oracle_equivalence());

    // Determinism: two full W1 runs serialize identically.
    let a = run_scenario(&w1, base.clone(), catalog.clone()).map(|r| r.to_json());
    let b = run_scenario(&w1, base.clone(), catalog.clone()).map(|r| r.to_json());
    results.push(match (a, b) {
        (Ok(a), Ok(b)) => Outcome {
            name: "determinism",
            pass: a == b,
            detail: format!("two W1 reports, {} bytes each, identical: {}", a.len(), a == b),
        },
        (Err(e), _) | (_, Err(e)) => Outcome {
            name: "determinism",
            pass: false,
            detail: e.to_string(),
        },
    });

    results.push(outcome(
        "meter conservation",
        &with_builtin(conservation_violations(&runs), &["meter conservation"]),
        format!("{} runs exact in micro-dollars", runs.len()),
    ));

    let (sm, transitions) = state_machine_violations(&runs);
    results.push(outcome(
        "scheduler state machine",
        &with_builtin(sm, &["status machine", "fifo within level", "virtual clock"]),
        format!("{transitions} transitions over {} runs legal; FIFO within level holds", runs.len()),
    ));

    println!();
    for r in &results {
        println!("{} {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!(
        "\nacceptance: {} passed, {failed} failed in {:.1} s",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
