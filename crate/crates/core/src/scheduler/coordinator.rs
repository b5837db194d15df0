use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use super::{Flag, QueryRecord, QueryStatus, ScalingEvent, ServiceLevel, Submission, TopPlacement, Transition};
use crate::billing::PriceSheet;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::fabric::{
    CfPool, CfWorker, LazyScalingPolicy, MetricsSample, Pool, ResourceMeter, ScalingDecision, ScalingPolicy,
    SlotHandle, VmPool,
};
use crate::fabric::meter::charge;
use crate::money::Money;
use crate::sql::engine::ExecPath;
use crate::sql::task::work_ms;
use crate::sql::{plan_query, split_plan, Engine, QueryPlan, ResultSet, SplitPlan, Task};
use crate::{Millis, QueryId};

#[derive(Debug)]
enum Event {
    Arrive(Submission),
    CfStart(QueryId),
    TaskDone(QueryId, usize),
    TopDone(QueryId),
}

#[derive(Debug, Clone, Copy)]
enum Place {
    Vm(SlotHandle),
    Cf(CfWorker),
}

#[derive(Debug)]
struct TaskRun {
    place: Place,
    started: Option<Millis>,
    outcome: Option<std::result::Result<(), String>>,
    done: bool,
}

#[derive(Debug)]
struct TopRun {
    slot: Option<SlotHandle>,
    result: ResultSet,
}

#[derive(Debug)]
struct Active {
    plan: QueryPlan,
    split: SplitPlan,
    tasks: Vec<Task>,
    runs: Vec<TaskRun>,
    remaining: usize,
    started: bool,
    top: Option<TopRun>,
}

/// Spend and capacity over a run, all exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Accounting {
    pub vm_busy_slot_ms: u128,
    pub vm_provisioned_slot_ms: u128,
    pub cf_busy_ms: u128,
    /// Sum of VM meter entries.
    pub vm_metered: Money,
    /// Sum of CF meter entries.
    pub cf_metered: Money,
    /// `vm_metered + cf_metered`.
    pub attributable: Money,
    /// Provisioned but unused VM slot time, priced.
    pub pool_overhead: Money,
    /// `attributable + pool_overhead`.
    pub grand: Money,
    /// Provisioned VM slot time priced, from the pool's own bookkeeping.
    pub vm_capacity_cost: Money,
    /// CF busy time priced, from the pool's own bookkeeping.
    pub cf_cost: Money,
}

/// Single-threaded owner of queues, records and both pools.
///
/// Time only moves forward through [`Coordinator::advance_to`], which
/// interleaves queued events and scheduler ticks in timestamp order; events
/// due at a tick's instant are handled before the tick.
pub struct Coordinator {
    config: Config,
    engine: Arc<Engine>,
    sheet: PriceSheet,
    now: Millis,
    next_tick: Millis,
    vm: VmPool,
    cf: CfPool,
    meter: ResourceMeter,
    policy: Box<dyn ScalingPolicy>,
    history: VecDeque<MetricsSample>,
    records: Vec<QueryRecord>,
    queues: [VecDeque<QueryId>; 3],
    planned: BTreeMap<QueryId, QueryPlan>,
    active: BTreeMap<QueryId, Active>,
    events: BTreeMap<(Millis, u64), Event>,
    seq: u64,
    transitions: Vec<Transition>,
    scaling_events: Vec<ScalingEvent>,
    flags: Vec<Flag>,
    samples_taken: usize,
}

impl Coordinator {
    pub fn new(config: Config, engine: Arc<Engine>) -> Result<Coordinator> {
        config.validate()?;
        let policy = Box::new(LazyScalingPolicy::from_config(&config));
        Ok(Coordinator {
            sheet: PriceSheet::from_config(&config.billing),
            vm: VmPool::new(config.vm.clone()),
            cf: CfPool::new(config.cf.clone(), config.cf_unit_price()),
            config,
            engine,
            now: 0,
            next_tick: 0,
            meter: ResourceMeter::new(),
            policy,
            history: VecDeque::new(),
            records: Vec::new(),
            queues: Default::default(),
            planned: BTreeMap::new(),
            active: BTreeMap::new(),
            events: BTreeMap::new(),
            seq: 0,
            transitions: Vec::new(),
            scaling_events: Vec::new(),
            flags: Vec::new(),
            samples_taken: 0,
        })
    }

    pub fn with_policy(mut self, policy: Box<dyn ScalingPolicy>) -> Coordinator {
        self.policy = policy;
        self
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    pub fn price_sheet(&self) -> &PriceSheet {
        &self.sheet
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    pub fn records(&self) -> &[QueryRecord] {
        &self.records
    }

    pub fn record(&self, id: QueryId) -> Option<&QueryRecord> {
        id.checked_sub(1).and_then(|i| self.records.get(i as usize))
    }

    pub fn meter(&self) -> &ResourceMeter {
        &self.meter
    }

    pub fn vm(&self) -> &VmPool {
        &self.vm
    }

    pub fn cf(&self) -> &CfPool {
        &self.cf
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn scaling_events(&self) -> &[ScalingEvent] {
        &self.scaling_events
    }

    pub fn flags(&self) -> &[Flag] {
        &self.flags
    }

    pub fn samples_taken(&self) -> usize {
        self.samples_taken
    }

    /// Latest metrics sample, if one was taken.
    pub fn latest_sample(&self) -> Option<&MetricsSample> {
        self.history.back()
    }

    fn record_mut(&mut self, id: QueryId) -> &mut QueryRecord {
        &mut self.records[(id - 1) as usize]
    }

    fn push_event(&mut self, at: Millis, event: Event) {
        self.seq += 1;
        self.events.insert((at, self.seq), event);
    }

    fn transition(&mut self, id: QueryId, to: QueryStatus, at: Millis) {
        let rec = self.record_mut(id);
        let from = rec.status;
        rec.status = to;
        self.transitions.push(Transition {
            query_id: id,
            at,
            from: Some(from),
            to,
        });
    }

    fn flag(&mut self, id: QueryId, at: Millis, kind: &str) {
        self.flags.push(Flag {
            query_id: id,
            at,
            kind: kind.to_string(),
        });
    }

    /// Queues a submission to arrive at a future instant.
    pub fn schedule_arrival(&mut self, at: Millis, submission: Submission) -> Result<()> {
        if at < self.now {
            return Err(Error::InvalidArgument(format!(
                "arrival at {at} ms is before the current time {} ms",
                self.now
            )));
        }
        self.push_event(at, Event::Arrive(submission));
        Ok(())
    }

    /// Records a submission at the current instant. Queries that fail to
    /// parse or validate are stored as failed and never queued.
    pub fn submit(&mut self, submission: Submission) -> QueryId {
        let now = self.now;
        let id = self.records.len() as QueryId + 1;
        let grace = match submission.level {
            ServiceLevel::Relaxed => Some(submission.grace.unwrap_or(self.config.sched.default_grace)),
            _ => None,
        };
        self.records.push(QueryRecord {
            id,
            sql: submission.sql.clone(),
            level: submission.level,
            result_limit: submission.result_limit,
            database: submission.database.clone(),
            submit_ms: now,
            grace,
            status: QueryStatus::Pending,
            dispatch_ms: None,
            start_ms: None,
            end_ms: None,
            error: None,
            bytes_scanned: 0,
            billed_quote: Money::ZERO,
            pool: None,
            top: None,
            tasks: 0,
            escalated: false,
            cap_delayed: false,
            plan_shape: None,
            result: None,
        });
        self.transitions.push(Transition {
            query_id: id,
            at: now,
            from: None,
            to: QueryStatus::Pending,
        });

        match self.prepare(&submission, grace) {
            Ok((plan, bytes)) => {
                let quote = self.sheet.price(bytes, submission.level);
                let rec = self.record_mut(id);
                rec.database = Some(plan.database().to_string());
                rec.bytes_scanned = bytes;
                rec.billed_quote = quote;
                rec.plan_shape = Some(plan.root.shape());
                self.planned.insert(id, plan);
                self.queues[submission.level.index()].push_back(id);
            }
            Err(e) => {
                self.record_mut(id).error = Some(e.to_string());
                self.transition(id, QueryStatus::Failed, now);
            }
        }
        id
    }

    fn prepare(&self, s: &Submission, grace: Option<Millis>) -> Result<(QueryPlan, u64)> {
        if s.result_limit == 0 {
            return Err(Error::InvalidArgument("result limit must be at least 1".into()));
        }
        if grace == Some(0) {
            return Err(Error::InvalidArgument("grace period must be positive".into()));
        }
        let catalog = self.engine.catalog();
        let db = catalog.resolve_database(s.database.as_deref())?.name.clone();
        let plan = plan_query(&s.sql, catalog, &db)?;
        let bytes = catalog
            .scan_bytes(&db, &plan.scanned_tables())?
            .saturating_mul(self.engine.config().data_scale);
        Ok((plan, bytes))
    }

    /// Processes every event and tick up to and including `t`.
    pub fn advance_to(&mut self, t: Millis) -> Result<()> {
        if t < self.now {
            return Err(Error::Invariant(format!("clock moved backwards from {} to {t}", self.now)));
        }
        loop {
            let next_event = self.events.keys().next().map(|k| k.0);
            match next_event {
                Some(e) if e <= self.next_tick && e <= t => {
                    let (_, event) = self.events.pop_first().expect("peeked");
                    self.now = e;
                    self.handle(event)?;
                }
                _ if self.next_tick <= t => {
                    self.now = self.next_tick;
                    self.tick(self.now)?;
                    self.next_tick += self.config.sched.tick;
                }
                _ => break,
            }
        }
        self.now = t;
        Ok(())
    }

    /// Time of the next queued event, if any.
    pub fn next_event_at(&self) -> Option<Millis> {
        self.events.keys().next().map(|k| k.0)
    }

    /// True when no query is queued, waiting for workers or running.
    pub fn is_quiescent(&self) -> bool {
        self.queues.iter().all(VecDeque::is_empty) && self.active.is_empty()
    }

    fn handle(&mut self, event: Event) -> Result<()> {
        let now = self.now;
        match event {
            Event::Arrive(s) => {
                self.submit(s);
                Ok(())
            }
            Event::CfStart(q) => self.start_cf_tasks(q, now),
            Event::TaskDone(q, i) => self.task_done(q, i, now),
            Event::TopDone(q) => self.top_done(q, now),
        }
    }

    fn pending_count(&self, level: ServiceLevel) -> usize {
        self.queues[level.index()].len()
            + self
                .active
                .iter()
                .filter(|(id, a)| !a.started && self.records[(**id - 1) as usize].level == level)
                .count()
    }

    fn tick(&mut self, now: Millis) -> Result<()> {
        self.vm.refresh(now);
        self.schedule(now)?;
        // Sampled after dispatch, so arrivals placed at this tick are not
        // mistaken for backlog.
        if now.is_multiple_of(self.config.scaling.metrics_interval) {
            self.collect_and_scale(now);
        }
        Ok(())
    }

    fn collect_and_scale(&mut self, now: Millis) {
        let queued = self.pending_count(ServiceLevel::Immediate) + self.pending_count(ServiceLevel::Relaxed);
        let running = self.active.values().filter(|a| a.started).count();
        self.history
            .push_back(MetricsSample::collect(now, &self.vm, queued, running));
        self.samples_taken += 1;
        let keep_from = now.saturating_sub(self.config.scaling.lazy_window + self.config.scaling.metrics_interval);
        while self.history.front().is_some_and(|s| s.at < keep_from) {
            self.history.pop_front();
        }
        let decision = self.policy.evaluate(self.history.make_contiguous());
        if decision == ScalingDecision::Hold {
            return;
        }
        let pending = [
            self.pending_count(ServiceLevel::Immediate),
            self.pending_count(ServiceLevel::Relaxed),
            self.pending_count(ServiceLevel::BestOfEffort),
        ];
        let applied = self.vm.apply(decision, now);
        if applied != 0 {
            self.scaling_events.push(ScalingEvent {
                at: now,
                decision,
                applied,
                pending,
                active_workers: self.vm.active_workers(),
            });
        }
    }

    fn schedule(&mut self, now: Millis) -> Result<()> {
        // Immediate: a VM slot if one is free, otherwise cloud functions.
        while let Some(&q) = self.queues[0].front() {
            if self.vm.free_ready_slots() > 0 {
                self.queues[0].pop_front();
                self.dispatch_vm(q, now)?;
                continue;
            }
            if self.dispatch_cf(q, now)? {
                self.queues[0].pop_front();
            } else {
                break;
            }
        }

        // Relaxed: VM slots in arrival order, then escalate expired queries.
        while self.vm.free_ready_slots() > 0 {
            let Some(q) = self.queues[1].pop_front() else { break };
            self.dispatch_vm(q, now)?;
        }
        let mut i = 0;
        while i < self.queues[1].len() {
            let q = self.queues[1][i];
            let rec = &self.records[(q - 1) as usize];
            let deadline = rec.submit_ms + rec.grace.unwrap_or(0);
            if now < deadline {
                i += 1;
                continue;
            }
            if self.dispatch_cf(q, now)? {
                self.queues[1].remove(i);
                self.record_mut(q).escalated = true;
            } else {
                break;
            }
        }

        // Best-of-effort: only while nothing else is waiting.
        while self.vm.free_ready_slots() > 0
            && self.pending_count(ServiceLevel::Immediate) == 0
            && self.pending_count(ServiceLevel::Relaxed) == 0
        {
            let Some(q) = self.queues[2].pop_front() else { break };
            self.dispatch_vm(q, now)?;
        }
        Ok(())
    }

    fn dispatch_vm(&mut self, q: QueryId, now: Millis) -> Result<()> {
        let plan = self
            .planned
            .remove(&q)
            .ok_or_else(|| Error::Invariant(format!("query {q} dispatched without a plan")))?;
        let mut slots = Vec::new();
        while slots.len() < self.config.sched.vm_parallelism.max(1) {
            match self.vm.acquire(now) {
                Some(s) => slots.push(s),
                None => break,
            }
        }
        if slots.is_empty() {
            return Err(Error::Invariant(format!("query {q} dispatched to VM without a free slot")));
        }
        let split = split_plan(&plan.root);
        let tasks = self.engine.tasks(q, &plan, &split, slots.len())?;
        for extra in slots.drain(tasks.len()..) {
            self.vm.release(extra, now)?;
        }
        let mut runs = Vec::with_capacity(tasks.len());
        for (task, slot) in tasks.iter().zip(slots) {
            let outcome = self.engine.run_task(task, ExecPath::VmSlot).map(|_| ()).map_err(|e| e.to_string());
            self.push_event(now + task.estimated_work_ms, Event::TaskDone(q, task.task_id));
            runs.push(TaskRun {
                place: Place::Vm(slot),
                started: Some(now),
                outcome: Some(outcome),
                done: false,
            });
        }
        let rec = self.record_mut(q);
        rec.dispatch_ms = Some(now);
        rec.start_ms = Some(now);
        rec.pool = Some(Pool::Vm);
        rec.tasks = tasks.len();
        self.transition(q, QueryStatus::Running, now);
        self.active.insert(
            q,
            Active {
                plan,
                split,
                remaining: tasks.len(),
                tasks,
                runs,
                started: true,
                top: None,
            },
        );
        Ok(())
    }

    /// Spawns one cloud-function worker per task. Returns false when the
    /// concurrency cap refused the spawn; the query then stays queued.
    fn dispatch_cf(&mut self, q: QueryId, now: Millis) -> Result<bool> {
        let plan = self
            .planned
            .get(&q)
            .ok_or_else(|| Error::Invariant(format!("query {q} dispatched without a plan")))?;
        let split = split_plan(&plan.root);
        let tasks = self.engine.tasks(q, plan, &split, self.config.sched.cf_parallelism)?;
        let workers = match self.cf.spawn(tasks.len(), now) {
            Ok(w) => w,
            Err(Error::CfCapExceeded { .. }) => {
                if !self.records[(q - 1) as usize].cap_delayed {
                    self.record_mut(q).cap_delayed = true;
                    self.flag(q, now, "cf_cap_delayed");
                }
                return Ok(false);
            }
            Err(e) => return Err(e),
        };
        let plan = self.planned.remove(&q).expect("checked above");
        let ready_at = workers[0].ready_at;
        let runs = workers
            .into_iter()
            .map(|w| TaskRun {
                place: Place::Cf(w),
                started: None,
                outcome: None,
                done: false,
            })
            .collect();
        let rec = self.record_mut(q);
        rec.dispatch_ms = Some(now);
        rec.pool = Some(Pool::Cf);
        rec.tasks = tasks.len();
        self.active.insert(
            q,
            Active {
                plan,
                split,
                remaining: tasks.len(),
                tasks,
                runs,
                started: false,
                top: None,
            },
        );
        self.push_event(ready_at, Event::CfStart(q));
        Ok(true)
    }

    fn start_cf_tasks(&mut self, q: QueryId, now: Millis) -> Result<()> {
        let mut done_events = Vec::new();
        {
            let a = self
                .active
                .get_mut(&q)
                .ok_or_else(|| Error::Invariant(format!("CF start for inactive query {q}")))?;
            a.started = true;
            for (task, run) in a.tasks.iter().zip(a.runs.iter_mut()) {
                run.started = Some(now);
                run.outcome = Some(
                    self.engine
                        .run_task(task, ExecPath::CfEphemeral)
                        .map(|_| ())
                        .map_err(|e| e.to_string()),
                );
                done_events.push((now + task.estimated_work_ms, task.task_id));
            }
        }
        for (at, t) in done_events {
            self.push_event(at, Event::TaskDone(q, t));
        }
        self.record_mut(q).start_ms = Some(now);
        self.transition(q, QueryStatus::Running, now);
        Ok(())
    }

    /// Gives a task's worker back and meters the time it was used.
    fn release_run(&mut self, q: QueryId, run: &TaskRun, now: Millis) -> Result<()> {
        match (run.place, run.started) {
            (Place::Vm(slot), _) => {
                let held = self.vm.release(slot, now)?;
                self.meter
                    .meter(q, Pool::Vm, held, self.config.vm.unit_price_per_slot_s);
            }
            (Place::Cf(w), Some(started)) => {
                let ms = self.cf.finish(w, started, now)?;
                self.meter.meter(q, Pool::Cf, ms, self.cf.unit_price());
            }
            (Place::Cf(w), None) => self.cf.cancel(w)?,
        }
        Ok(())
    }

    fn task_done(&mut self, q: QueryId, i: usize, now: Millis) -> Result<()> {
        let Some(a) = self.active.get_mut(&q) else {
            return Ok(());
        };
        let run = &mut a.runs[i];
        if run.done {
            return Ok(());
        }
        run.done = true;
        a.remaining -= 1;
        let outcome = run.outcome.clone();
        let snapshot = TaskRun {
            place: run.place,
            started: run.started,
            outcome: None,
            done: true,
        };
        let remaining = a.remaining;
        self.release_run(q, &snapshot, now)?;
        match outcome {
            Some(Err(message)) => self.fail(q, now, format!("task {i} failed: {message}")),
            None => Err(Error::Invariant(format!("task {i} of query {q} finished without running"))),
            Some(Ok(())) if remaining == 0 => self.start_top(q, now),
            Some(Ok(())) => Ok(()),
        }
    }

    fn start_top(&mut self, q: QueryId, now: Millis) -> Result<()> {
        let a = self.active.get(&q).expect("caller checked");
        let limit = self.records[(q - 1) as usize].result_limit;
        let outcome = self
            .engine
            .gather(q, &a.split, a.tasks.len())
            .and_then(|(rows, bytes)| {
                let result = self.engine.run_top(&a.plan, &a.split, &rows, Some(limit))?;
                Ok((result, bytes))
            });
        let (result, bytes) = match outcome {
            Ok(v) => v,
            Err(e) => return self.fail(q, now, format!("top-level plan failed: {e}")),
        };
        let duration = if a.split.top_is_pass_through() {
            0
        } else {
            work_ms(bytes, self.engine.config())
        };
        let slot = if duration > 0 { self.vm.acquire(now) } else { None };
        self.record_mut(q).top = Some(if slot.is_some() {
            TopPlacement::Vm
        } else {
            TopPlacement::Coordinator
        });
        self.active.get_mut(&q).expect("caller checked").top = Some(TopRun { slot, result });
        self.push_event(now + duration, Event::TopDone(q));
        Ok(())
    }

    fn top_done(&mut self, q: QueryId, now: Millis) -> Result<()> {
        let Some(mut a) = self.active.remove(&q) else {
            return Ok(());
        };
        let top = a
            .top
            .take()
            .ok_or_else(|| Error::Invariant(format!("top-level plan of query {q} missing")))?;
        if let Some(slot) = top.slot {
            let held = self.vm.release(slot, now)?;
            self.meter
                .meter(q, Pool::Vm, held, self.config.vm.unit_price_per_slot_s);
        }
        self.engine.store().release(q);
        let rec = self.record_mut(q);
        rec.end_ms = Some(now);
        rec.result = Some(Arc::new(top.result));
        self.transition(q, QueryStatus::Finished, now);
        Ok(())
    }

    fn fail(&mut self, q: QueryId, now: Millis, message: String) -> Result<()> {
        let Some(mut a) = self.active.remove(&q) else {
            return Ok(());
        };
        for run in a.runs.iter_mut().filter(|r| !r.done) {
            run.done = true;
            let snapshot = TaskRun {
                place: run.place,
                started: run.started,
                outcome: None,
                done: true,
            };
            self.release_run(q, &snapshot, now)?;
        }
        if let Some(TopRun { slot: Some(slot), .. }) = a.top.take() {
            let held = self.vm.release(slot, now)?;
            self.meter
                .meter(q, Pool::Vm, held, self.config.vm.unit_price_per_slot_s);
        }
        self.engine.store().release(q);
        let rec = self.record_mut(q);
        rec.end_ms = Some(now);
        rec.error = Some(message);
        self.transition(q, QueryStatus::Failed, now);
        Ok(())
    }

    /// Advances to `end` and then stops the clock: resources still held
    /// are released and metered up to `end`, and unfinished queries keep
    /// their current status.
    pub fn finish(&mut self, end: Millis) -> Result<()> {
        self.advance_to(end)?;
        let ids: Vec<QueryId> = self.active.keys().copied().collect();
        for q in ids {
            let mut a = self.active.remove(&q).expect("listed");
            for run in a.runs.iter_mut().filter(|r| !r.done) {
                run.done = true;
                let snapshot = TaskRun {
                    place: run.place,
                    started: run.started,
                    outcome: None,
                    done: true,
                };
                self.release_run(q, &snapshot, end)?;
            }
            if let Some(TopRun { slot: Some(slot), .. }) = a.top.take() {
                let held = self.vm.release(slot, end)?;
                self.meter
                    .meter(q, Pool::Vm, held, self.config.vm.unit_price_per_slot_s);
            }
            self.engine.store().release(q);
        }
        self.events.clear();
        Ok(())
    }

    pub fn accounting(&self) -> Accounting {
        let now = self.now;
        let vm_price = self.config.vm.unit_price_per_slot_s;
        let vm_busy = self.vm.busy_slot_ms();
        let vm_prov = self.vm.provisioned_slot_ms(now);
        let cf_busy = self.cf.busy_ms();
        let vm_metered: Money = self
            .meter
            .entries()
            .iter()
            .filter(|e| e.pool == Pool::Vm)
            .map(|e| e.dollars)
            .sum();
        let cf_metered: Money = self
            .meter
            .entries()
            .iter()
            .filter(|e| e.pool == Pool::Cf)
            .map(|e| e.dollars)
            .sum();
        let priced = |price: Money, ms: u128| charge_wide(price, ms);
        let pool_overhead = priced(vm_price, vm_prov.saturating_sub(vm_busy));
        let attributable = vm_metered + cf_metered;
        Accounting {
            vm_busy_slot_ms: vm_busy,
            vm_provisioned_slot_ms: vm_prov,
            cf_busy_ms: cf_busy,
            vm_metered,
            cf_metered,
            attributable,
            pool_overhead,
            grand: attributable + pool_overhead,
            vm_capacity_cost: priced(vm_price, vm_prov),
            cf_cost: priced(self.cf.unit_price(), cf_busy),
        }
    }
}

fn charge_wide(price: Money, ms: u128) -> Money {
    match u64::try_from(ms) {
        Ok(ms) => charge(price, ms),
        Err(_) => (price * ms as i128) / 1000,
    }
}
