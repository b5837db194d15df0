//! Running workloads through the full stack on the virtual clock.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use super::checks::{check_run, CheckReport};
use super::scenario::{Scenario, TraceRow};
use crate::billing::{finalize_cost, CostRecord};
use crate::catalog::Catalog;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::fabric::{MeterEntry, Pool};
use crate::money::Money;
use crate::scheduler::{Coordinator, Flag, QueryStatus, ScalingEvent, ServiceLevel, Submission, Transition};
use crate::sql::{Engine, IntermediateStore};
use crate::Millis;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelCounts {
    pub submitted: usize,
    pub finished: usize,
    pub failed: usize,
    /// Still pending or running when the run ended.
    pub unfinished: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Totals {
    pub billed: Money,
    pub actual_attributable: Money,
    pub pool_overhead: Money,
    pub grand: Money,
    pub vm_metered: Money,
    pub cf_metered: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Usage {
    pub vm_busy_slot_ms: u64,
    pub vm_provisioned_slot_ms: u64,
    pub cf_busy_ms: u64,
    pub peak_vm_workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LatencyStats {
    pub started: usize,
    pub max_pending_ms: Millis,
    pub mean_pending_ms: f64,
    pub finished: usize,
    pub max_exec_ms: Millis,
    pub mean_exec_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct QueryCost {
    #[serde(flatten)]
    pub cost: CostRecord,
    pub pool: Option<Pool>,
    pub tasks: usize,
    pub escalated: bool,
    pub cap_delayed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SimReport {
    pub scenario: String,
    pub seed: u64,
    pub duration_ms: Millis,
    pub counts: BTreeMap<ServiceLevel, LevelCounts>,
    pub totals: Totals,
    pub usage: Usage,
    pub latency: BTreeMap<ServiceLevel, LatencyStats>,
    pub per_query: Vec<QueryCost>,
    pub scaling_events: Vec<ScalingEvent>,
    pub flags: Vec<Flag>,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Status history and meter log of a run, for offline inspection.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SimTrace {
    pub transitions: Vec<Transition>,
    pub meter: Vec<MeterEntry>,
}

/// Everything a run produced.
pub struct SimRun {
    pub coordinator: Coordinator,
    pub report: SimReport,
    pub checks: CheckReport,
    pub end_ms: Millis,
}

impl SimRun {
    pub fn trace(&self) -> SimTrace {
        SimTrace {
            transitions: self.coordinator.transitions().to_vec(),
            meter: self.coordinator.meter().entries().to_vec(),
        }
    }
}

/// How a run ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    /// Stop the clock at this instant; unfinished work is cut off.
    At(Millis),
    /// Run until every query has finished or failed.
    Drain,
}

/// Upper limit on how long a drained run may take after its last arrival.
pub const DRAIN_LIMIT_MS: Millis = 7 * 24 * 3_600_000;

fn sim_engine(catalog: Arc<Catalog>, config: &Config) -> Arc<Engine> {
    Arc::new(
        Engine::new(catalog, IntermediateStore::in_memory(), config.engine.clone()).with_cold_ephemeral_reads(false),
    )
}

/// Runs a list of arrivals through a fresh coordinator and checks every
/// built-in invariant. Violations are reported in [`SimRun::checks`].
pub fn simulate(
    name: &str,
    seed: u64,
    rows: &[TraceRow],
    config: Config,
    catalog: Arc<Catalog>,
    result_limit: usize,
    stop: Stop,
) -> Result<SimRun> {
    let engine = sim_engine(catalog, &config);
    let mut c = Coordinator::new(config, engine)?;
    for r in rows {
        let mut s = Submission::new(r.sql.clone(), r.level);
        s.result_limit = result_limit;
        c.schedule_arrival(r.offset_ms, s)?;
    }
    let end = match stop {
        Stop::At(end) => end,
        Stop::Drain => {
            let last = rows.last().map_or(0, |r| r.offset_ms);
            c.advance_to(last)?;
            let tick = c.config().sched.tick;
            let mut t = last;
            while !c.is_quiescent() || c.next_event_at().is_some() {
                if t - last > DRAIN_LIMIT_MS {
                    return Err(Error::Invariant("workload did not drain".into()));
                }
                t = (t / tick + 1) * tick;
                c.advance_to(t)?;
            }
            t
        }
    };
    if let Some(late) = rows.iter().find(|r| r.offset_ms > end) {
        return Err(Error::InvalidArgument(format!(
            "arrival at {} ms is after the end of the run at {end} ms",
            late.offset_ms
        )));
    }
    c.finish(end)?;
    let report = build_report(name, seed, end, &c);
    let checks = check_run(&c, end);
    Ok(SimRun {
        coordinator: c,
        report,
        checks,
        end_ms: end,
    })
}

/// Config for a scenario: defaults, then the scenario's overrides.
pub fn scenario_config(scenario: &Scenario, base: Config) -> Result<Config> {
    let config = base.with_overrides(&scenario.config)?;
    config.validate()?;
    Ok(config)
}

/// Generates the scenario's workload and simulates it for its duration.
pub fn simulate_scenario(scenario: &Scenario, base: Config, catalog: Arc<Catalog>) -> Result<SimRun> {
    let config = scenario_config(scenario, base)?;
    let rows = scenario.workload()?;
    simulate(
        &scenario.name,
        scenario.seed,
        &rows,
        config,
        catalog,
        scenario.result_limit,
        Stop::At(scenario.duration_ms()),
    )
}

/// Like [`simulate_scenario`], failing when any built-in check fails.
pub fn run_scenario(scenario: &Scenario, base: Config, catalog: Arc<Catalog>) -> Result<SimReport> {
    let run = simulate_scenario(scenario, base, catalog)?;
    if !run.checks.is_clean() {
        return Err(Error::Invariant(run.checks.summary()));
    }
    Ok(run.report)
}

/// Submits exactly the trace's queries at their offsets and runs until all
/// of them have finished or failed.
pub fn replay(rows: &[TraceRow], config: Config, catalog: Arc<Catalog>) -> Result<SimReport> {
    let run = simulate("replay", 0, rows, config, catalog, 100, Stop::Drain)?;
    if !run.checks.is_clean() {
        return Err(Error::Invariant(run.checks.summary()));
    }
    Ok(run.report)
}

pub fn build_report(name: &str, seed: u64, end: Millis, c: &Coordinator) -> SimReport {
    let sheet = c.price_sheet();
    let per_query: Vec<QueryCost> = c
        .records()
        .iter()
        .map(|r| QueryCost {
            cost: finalize_cost(r, c.meter(), sheet),
            pool: r.pool,
            tasks: r.tasks,
            escalated: r.escalated,
            cap_delayed: r.cap_delayed,
        })
        .collect();

    let mut counts = BTreeMap::new();
    let mut latency = BTreeMap::new();
    for level in ServiceLevel::ALL {
        let recs: Vec<_> = c.records().iter().filter(|r| r.level == level).collect();
        counts.insert(
            level,
            LevelCounts {
                submitted: recs.len(),
                finished: recs.iter().filter(|r| r.status == QueryStatus::Finished).count(),
                failed: recs.iter().filter(|r| r.status == QueryStatus::Failed).count(),
                unfinished: recs.iter().filter(|r| !r.status.is_terminal()).count(),
            },
        );
        let pend: Vec<Millis> = recs.iter().filter_map(|r| r.pending_ms()).collect();
        let exec: Vec<Millis> = recs.iter().filter_map(|r| r.exec_ms()).collect();
        let mean = |v: &[Millis]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<Millis>() as f64 / v.len() as f64
            }
        };
        latency.insert(
            level,
            LatencyStats {
                started: pend.len(),
                max_pending_ms: pend.iter().copied().max().unwrap_or(0),
                mean_pending_ms: mean(&pend),
                finished: exec.len(),
                max_exec_ms: exec.iter().copied().max().unwrap_or(0),
                mean_exec_ms: mean(&exec),
            },
        );
    }

    let acc = c.accounting();
    let clamp = |v: u128| u64::try_from(v).unwrap_or(u64::MAX);
    let peak = c
        .scaling_events()
        .iter()
        .map(|e| e.active_workers)
        .chain(std::iter::once(c.config().vm.floor))
        .max()
        .unwrap_or(0);
    SimReport {
        scenario: name.to_string(),
        seed,
        duration_ms: end,
        counts,
        totals: Totals {
            billed: per_query.iter().map(|q| q.cost.billed).sum(),
            actual_attributable: acc.attributable,
            pool_overhead: acc.pool_overhead,
            grand: acc.grand,
            vm_metered: acc.vm_metered,
            cf_metered: acc.cf_metered,
        },
        usage: Usage {
            vm_busy_slot_ms: clamp(acc.vm_busy_slot_ms),
            vm_provisioned_slot_ms: clamp(acc.vm_provisioned_slot_ms),
            cf_busy_ms: clamp(acc.cf_busy_ms),
            peak_vm_workers: peak,
        },
        latency,
        per_query,
        scaling_events: c.scaling_events().to_vec(),
        flags: c.flags().to_vec(),
    }
}
