//! The same workload run once per forced service level.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Serialize;

use super::harness::{simulate_scenario, SimReport};
use super::scenario::Scenario;
use crate::catalog::Catalog;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::money::Money;
use crate::scheduler::{QueryStatus, ServiceLevel};
use crate::{Millis, QueryId};

/// One forced-level run, restricted to the queries finished in every run.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelOutcome {
    pub level: ServiceLevel,
    pub finished: usize,
    /// Queries of this run that had not finished when the clock stopped.
    pub stragglers: usize,
    /// Metered cost of the common queries.
    pub common_actual: Money,
    /// Pool overhead apportioned to the common queries by their share of
    /// the run's attributable cost.
    pub common_overhead: Money,
    pub common_grand: Money,
    pub mean_pending_ms: f64,
    pub max_pending_ms: Millis,
    pub mean_exec_ms: f64,
    pub max_exec_ms: Millis,
    pub mean_latency_ms: f64,
    pub report: SimReport,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Comparison {
    pub scenario: String,
    pub common_queries: usize,
    pub outcomes: Vec<LevelOutcome>,
    /// Immediate grand total over Relaxed grand total, common set.
    pub relaxed_ratio: f64,
    /// Immediate grand total over best-of-effort grand total, common set.
    pub boe_ratio: f64,
}

impl Comparison {
    pub fn outcome(&self, level: ServiceLevel) -> &LevelOutcome {
        &self.outcomes[level.index()]
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<14} {:>9} {:>11} {:>14} {:>14} {:>14} {:>14}\n",
            "level", "finished", "stragglers", "grand $", "mean wait s", "max wait s", "mean exec s"
        );
        for o in &self.outcomes {
            out.push_str(&format!(
                "{:<14} {:>9} {:>11} {:>14.4} {:>14.1} {:>14.1} {:>14.1}\n",
                o.level.name(),
                o.finished,
                o.stragglers,
                o.common_grand.dollars_f64(),
                o.mean_pending_ms / 1000.0,
                o.max_pending_ms as f64 / 1000.0,
                o.mean_exec_ms / 1000.0,
            ));
        }
        out.push_str(&format!(
            "common queries {}; immediate/relaxed {:.3}; immediate/best_of_effort {:.3}\n",
            self.common_queries, self.relaxed_ratio, self.boe_ratio
        ));
        out
    }
}

fn ratio(a: Money, b: Money) -> f64 {
    match a.ratio_to(&b) {
        Some(r) => *r.numer() as f64 / *r.denom() as f64,
        None => f64::INFINITY,
    }
}

/// Runs the scenario three times, once per forced level, over identical
/// arrivals and SQL, and compares spend over the queries all three finished.
pub fn compare_levels(scenario: &Scenario, base: Config, catalog: Arc<Catalog>) -> Result<Comparison> {
    let mut runs = Vec::new();
    for level in ServiceLevel::ALL {
        let run = simulate_scenario(&scenario.forced(level), base.clone(), catalog.clone())?;
        if !run.checks.is_clean() {
            return Err(Error::Invariant(format!("{} run: {}", level.name(), run.checks.summary())));
        }
        runs.push(run);
    }
    let finished_in = |i: usize| -> BTreeSet<QueryId> {
        runs[i]
            .report
            .per_query
            .iter()
            .filter(|q| q.cost.status == QueryStatus::Finished)
            .map(|q| q.cost.id)
            .collect()
    };
    let common: BTreeSet<QueryId> = finished_in(0)
        .intersection(&finished_in(1))
        .copied()
        .collect::<BTreeSet<_>>()
        .intersection(&finished_in(2))
        .copied()
        .collect();

    let mut outcomes = Vec::new();
    for (level, run) in ServiceLevel::ALL.into_iter().zip(runs) {
        let report = run.report;
        let in_common: Vec<_> = report.per_query.iter().filter(|q| common.contains(&q.cost.id)).collect();
        let common_actual: Money = in_common.iter().map(|q| q.cost.actual).sum();
        let all_actual = report.totals.actual_attributable;
        let common_overhead = if all_actual.is_zero() {
            Money::ZERO
        } else {
            report.totals.pool_overhead.scale(common_actual.ratio_to(&all_actual).expect("nonzero"))
        };
        let pend: Vec<Millis> = in_common.iter().filter_map(|q| q.cost.pending_ms).collect();
        let exec: Vec<Millis> = in_common.iter().filter_map(|q| q.cost.exec_ms).collect();
        let mean = |v: &[Millis]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<Millis>() as f64 / v.len() as f64
            }
        };
        let finished = report.counts.values().map(|c| c.finished).sum();
        let stragglers = report.counts.values().map(|c| c.unfinished).sum();
        outcomes.push(LevelOutcome {
            level,
            finished,
            stragglers,
            common_actual,
            common_overhead,
            common_grand: common_actual + common_overhead,
            mean_pending_ms: mean(&pend),
            max_pending_ms: pend.iter().copied().max().unwrap_or(0),
            mean_exec_ms: mean(&exec),
            max_exec_ms: exec.iter().copied().max().unwrap_or(0),
            mean_latency_ms: mean(&pend) + mean(&exec),
            report,
        });
    }
    let imm = outcomes[0].common_grand;
    Ok(Comparison {
        scenario: scenario.name.clone(),
        common_queries: common.len(),
        relaxed_ratio: ratio(imm, outcomes[1].common_grand),
        boe_ratio: ratio(imm, outcomes[2].common_grand),
        outcomes,
    })
}
