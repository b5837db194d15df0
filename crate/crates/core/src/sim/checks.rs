//! Invariants asserted over every simulation run.

use std::collections::{BTreeMap, HashMap};

use crate::fabric::Pool;
use crate::fabric::ScalingDecision;
use crate::money::Money;
use crate::scheduler::{Coordinator, QueryStatus, ServiceLevel};
use crate::{Millis, QueryId};

/// Violations found per check; empty vectors mean the check passed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckReport {
    pub status_machine: Vec<String>,
    pub fifo: Vec<String>,
    pub pending_bounds: Vec<String>,
    pub boe_purity: Vec<String>,
    pub meter_conservation: Vec<String>,
    pub clock: Vec<String>,
}

impl CheckReport {
    pub fn is_clean(&self) -> bool {
        self.all().all(|(_, v)| v.is_empty())
    }

    pub fn all(&self) -> impl Iterator<Item = (&'static str, &Vec<String>)> {
        [
            ("status machine", &self.status_machine),
            ("fifo within level", &self.fifo),
            ("pending-time bounds", &self.pending_bounds),
            ("best-of-effort purity", &self.boe_purity),
            ("meter conservation", &self.meter_conservation),
            ("virtual clock", &self.clock),
        ]
        .into_iter()
    }

    pub fn summary(&self) -> String {
        self.all()
            .filter(|(_, v)| !v.is_empty())
            .map(|(name, v)| format!("{name}: {} violation(s), first: {}", v.len(), v[0]))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

pub fn check_run(c: &Coordinator, duration: Millis) -> CheckReport {
    let mut r = CheckReport::default();
    let tick = c.config().sched.tick;
    let lag = c.config().cf.startup_lag;

    // Status machine: every step legal, timestamps nondecreasing.
    let mut last: HashMap<QueryId, (QueryStatus, Millis)> = HashMap::new();
    for t in c.transitions() {
        let prev = last.get(&t.query_id).copied();
        if t.from != prev.map(|p| p.0) {
            r.status_machine.push(format!(
                "query {} recorded from {:?} but was {:?}",
                t.query_id,
                t.from,
                prev.map(|p| p.0)
            ));
        }
        if !QueryStatus::legal(t.from, t.to) {
            r.status_machine
                .push(format!("query {}: illegal {:?} -> {:?}", t.query_id, t.from, t.to));
        }
        if prev.is_some_and(|p| p.1 > t.at) {
            r.status_machine
                .push(format!("query {}: transition back in time at {}", t.query_id, t.at));
        }
        last.insert(t.query_id, (t.to, t.at));
    }
    for rec in c.records() {
        if last.get(&rec.id).map(|l| l.0) != Some(rec.status) {
            r.status_machine
                .push(format!("query {}: record status disagrees with its transitions", rec.id));
        }
    }

    // FIFO within level: dispatch order and start order follow submit order.
    for level in ServiceLevel::ALL {
        let recs: Vec<_> = c
            .records()
            .iter()
            .filter(|q| q.level == level && q.dispatch_ms.is_some())
            .collect();
        for (i, a) in recs.iter().enumerate() {
            for b in &recs[i + 1..] {
                if (a.submit_ms, a.id) > (b.submit_ms, b.id) {
                    continue;
                }
                if a.dispatch_ms > b.dispatch_ms {
                    r.fifo.push(format!(
                        "{level}: query {} dispatched after later query {}",
                        a.id, b.id
                    ));
                }
                if let (Some(sa), Some(sb)) = (a.start_ms, b.start_ms) {
                    if sa > sb {
                        r.fifo
                            .push(format!("{level}: query {} started after later query {}", a.id, b.id));
                    }
                }
            }
        }
        // A submitted query never waits while a later one of its level is dispatched.
        let undispatched: Vec<_> = c
            .records()
            .iter()
            .filter(|q| q.level == level && q.dispatch_ms.is_none() && q.status == QueryStatus::Pending)
            .collect();
        for u in undispatched {
            if let Some(b) = recs.iter().find(|b| (b.submit_ms, b.id) > (u.submit_ms, u.id)) {
                r.fifo.push(format!(
                    "{level}: query {} still queued while later query {} was dispatched",
                    u.id, b.id
                ));
            }
        }
    }

    // Pending-time bounds.
    for rec in c.records() {
        let Some(bound) = rec.pending_bound(tick, lag) else { continue };
        if rec.status == QueryStatus::Failed && rec.start_ms.is_none() && rec.dispatch_ms.is_none() {
            continue;
        }
        if rec.level == ServiceLevel::Relaxed && rec.cap_delayed {
            continue;
        }
        let waited = match rec.start_ms {
            Some(s) => s - rec.submit_ms,
            // Unstarted at the end of the run: it has waited at least this long.
            None => duration - rec.submit_ms,
        };
        if waited > bound {
            r.pending_bounds.push(format!(
                "{} query {} waited {waited} ms, bound {bound} ms",
                rec.level, rec.id
            ));
        }
    }

    // Best-of-effort purity.
    let level_of: HashMap<QueryId, ServiceLevel> = c.records().iter().map(|q| (q.id, q.level)).collect();
    for e in c.meter().entries() {
        if e.pool == Pool::Cf && level_of.get(&e.query_id) == Some(&ServiceLevel::BestOfEffort) {
            r.boe_purity
                .push(format!("best-of-effort query {} metered on CF", e.query_id));
        }
    }
    for s in c.scaling_events() {
        if matches!(s.decision, ScalingDecision::ScaleOut(_)) && s.pending[0] + s.pending[1] == 0 {
            r.boe_purity.push(format!(
                "scale-out at {} ms with only best-of-effort work pending",
                s.at
            ));
        }
    }
    for boe in c
        .records()
        .iter()
        .filter(|q| q.level == ServiceLevel::BestOfEffort)
    {
        let Some(t) = boe.start_ms else { continue };
        let blocker = c.records().iter().find(|q| {
            let failed_at_submit = q.status == QueryStatus::Failed && q.start_ms.is_none();
            q.level != ServiceLevel::BestOfEffort
                && q.submit_ms <= t
                && !failed_at_submit
                && q.start_ms.is_none_or(|s| s > t)
        });
        if let Some(q) = blocker {
            r.boe_purity.push(format!(
                "best-of-effort query {} started at {t} ms while {} query {} was pending",
                boe.id, q.level, q.id
            ));
        }
        if boe.pool == Some(Pool::Cf) {
            r.boe_purity.push(format!("best-of-effort query {} ran on CF", boe.id));
        }
    }

    // Meter conservation, in exact micro-dollars.
    let acc = c.accounting();
    let vm_price = c.config().vm.unit_price_per_slot_s;
    let by_pool = |pool: Pool| -> Money {
        c.meter().entries().iter().filter(|e| e.pool == pool).map(|e| e.dollars).sum()
    };
    let vm_expected = (vm_price * acc.vm_busy_slot_ms as i128) / 1000;
    if by_pool(Pool::Vm) != vm_expected {
        r.meter_conservation.push(format!(
            "VM meter entries {} differ from busy slot time priced {}",
            by_pool(Pool::Vm),
            vm_expected
        ));
    }
    if by_pool(Pool::Cf) != acc.cf_cost {
        r.meter_conservation.push(format!(
            "CF meter entries {} differ from CF busy time priced {}",
            by_pool(Pool::Cf),
            acc.cf_cost
        ));
    }
    if acc.attributable + acc.pool_overhead != acc.vm_capacity_cost + acc.cf_cost {
        r.meter_conservation.push(format!(
            "attributable {} + overhead {} != provisioned VM {} + CF {}",
            acc.attributable, acc.pool_overhead, acc.vm_capacity_cost, acc.cf_cost
        ));
    }
    let per_query: BTreeMap<QueryId, Money> = c.meter().entries().iter().fold(BTreeMap::new(), |mut m, e| {
        *m.entry(e.query_id).or_insert(Money::ZERO) += e.dollars;
        m
    });
    let summed: Money = per_query.values().copied().sum();
    if summed != acc.attributable {
        r.meter_conservation
            .push(format!("per-query totals {summed} differ from attributable {}", acc.attributable));
    }

    // Virtual clock.
    for t in c.transitions() {
        if t.at > duration {
            r.clock.push(format!("transition of query {} at {} ms after the end", t.query_id, t.at));
        }
    }
    if c.now() > duration {
        r.clock.push(format!("clock at {} ms after the end {duration} ms", c.now()));
    }
    r
}
