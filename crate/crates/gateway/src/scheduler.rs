//! The scheduling loop behind the API. One thread owns the coordinator,
//! takes submissions over a channel, follows the wall clock and publishes
//! an immutable snapshot whenever anything changed.

use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;
use tokio::sync::{oneshot, watch};
use turbodb_core::billing::{finalize_cost, CostRecord};
use turbodb_core::fabric::Pool;
use turbodb_core::money::Money;
use turbodb_core::scheduler::{Coordinator, QueryRecord, QueryStatus, ServiceLevel, Submission};
use turbodb_core::sql::ResultSet;
use turbodb_core::{Millis, QueryId};

/// What a client sees of one query.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct QueryView {
    pub query_id: QueryId,
    pub sql: String,
    pub level: ServiceLevel,
    pub status: QueryStatus,
    pub database: Option<String>,
    pub result_limit: usize,
    pub submit_ms: Millis,
    pub start_ms: Option<Millis>,
    pub end_ms: Option<Millis>,
    pub pending_ms: Option<Millis>,
    pub exec_ms: Option<Millis>,
    pub bytes_scanned: u64,
    pub billed_price_quote: Money,
    pub billed: Money,
    pub actual: Money,
    pub pool: Option<Pool>,
    pub escalated: bool,
    pub cap_delayed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_message: Option<String>,
    #[serde(skip)]
    pub cost: CostRecord,
    #[serde(skip)]
    pub result: Option<Arc<ResultSet>>,
}

impl QueryView {
    fn new(r: &QueryRecord, cost: CostRecord) -> QueryView {
        QueryView {
            query_id: r.id,
            sql: r.sql.clone(),
            level: r.level,
            status: r.status,
            database: r.database.clone(),
            result_limit: r.result_limit,
            submit_ms: r.submit_ms,
            start_ms: r.start_ms,
            end_ms: r.end_ms,
            pending_ms: r.pending_ms(),
            exec_ms: r.exec_ms(),
            bytes_scanned: r.bytes_scanned,
            billed_price_quote: r.billed_quote,
            billed: cost.billed,
            actual: cost.actual,
            pool: r.pool,
            escalated: r.escalated,
            cap_delayed: r.cap_delayed,
            error_message: r.error.clone(),
            cost,
            result: r.result.clone(),
        }
    }
}

/// State published after a scheduling step.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    pub now_ms: Millis,
    /// Indexed by query id minus one.
    pub queries: Vec<QueryView>,
    /// Set when the loop stopped on an internal error.
    pub fault: Option<String>,
}

impl Snapshot {
    pub fn query(&self, id: QueryId) -> Option<&QueryView> {
        let i = usize::try_from(id.checked_sub(1)?).ok()?;
        self.queries.get(i)
    }

    pub fn cost_records(&self) -> Vec<CostRecord> {
        self.queries.iter().map(|q| q.cost.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmitOutcome {
    pub query_id: QueryId,
    pub status: QueryStatus,
    pub quote: Money,
    pub error: Option<String>,
}

enum Command {
    Submit(Submission, oneshot::Sender<SubmitOutcome>),
}

#[derive(Debug, thiserror::Error)]
#[error("the scheduler has stopped")]
pub struct Stopped;

/// Cheap to clone; the loop stops once every handle is dropped.
#[derive(Clone)]
pub struct SchedulerHandle {
    commands: mpsc::Sender<Command>,
    snapshots: watch::Receiver<Arc<Snapshot>>,
}

impl SchedulerHandle {
    /// Starts the loop on its own thread. Virtual time follows the wall
    /// clock from this call on.
    pub fn spawn(coordinator: Coordinator) -> SchedulerHandle {
        let (commands, rx) = mpsc::channel();
        let (tx, snapshots) = watch::channel(Arc::new(Snapshot::default()));
        std::thread::Builder::new()
            .name("turbodb-scheduler".into())
            .spawn(move || run(coordinator, rx, tx, Instant::now()))
            .expect("spawn scheduler thread");
        SchedulerHandle { commands, snapshots }
    }

    pub async fn submit(&self, submission: Submission) -> Result<SubmitOutcome, Stopped> {
        let (reply, wait) = oneshot::channel();
        self.commands
            .send(Command::Submit(submission, reply))
            .map_err(|_| Stopped)?;
        wait.await.map_err(|_| Stopped)
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshots.borrow().clone()
    }
}

fn elapsed_ms(start: Instant) -> Millis {
    start.elapsed().as_millis() as Millis
}

fn run(mut c: Coordinator, rx: mpsc::Receiver<Command>, tx: watch::Sender<Arc<Snapshot>>, start: Instant) {
    let tick = c.config().sched.tick;
    let mut published = None;
    loop {
        if let Err(e) = c.advance_to(elapsed_ms(start).max(c.now())) {
            fail(&tx, &c, e.to_string());
            return;
        }
        publish(&c, &tx, &mut published);

        let now = c.now();
        let next_tick = (now / tick + 1) * tick;
        let wake = c.next_event_at().map_or(next_tick, |e| e.min(next_tick));
        let wait = Duration::from_millis(wake.saturating_sub(elapsed_ms(start)));
        match rx.recv_timeout(wait) {
            Ok(Command::Submit(submission, reply)) => {
                if let Err(e) = c.advance_to(elapsed_ms(start).max(c.now())) {
                    fail(&tx, &c, e.to_string());
                    return;
                }
                let id = c.submit(submission);
                publish(&c, &tx, &mut published);
                let r = c.record(id).expect("just submitted");
                let _ = reply.send(SubmitOutcome {
                    query_id: id,
                    status: r.status,
                    quote: r.billed_quote,
                    error: r.error.clone(),
                });
            }
            Err(mpsc::RecvTimeoutError::Timeout) => {}
            Err(mpsc::RecvTimeoutError::Disconnected) => return,
        }
    }
}

/// Rebuilds the snapshot when records, transitions or meter entries moved.
fn publish(c: &Coordinator, tx: &watch::Sender<Arc<Snapshot>>, published: &mut Option<(usize, usize, usize)>) {
    let marker = (c.records().len(), c.transitions().len(), c.meter().entries().len());
    if *published == Some(marker) {
        return;
    }
    *published = Some(marker);
    tx.send_replace(Arc::new(build(c, None)));
}

fn fail(tx: &watch::Sender<Arc<Snapshot>>, c: &Coordinator, message: String) {
    tx.send_replace(Arc::new(build(c, Some(message))));
}

fn build(c: &Coordinator, fault: Option<String>) -> Snapshot {
    Snapshot {
        now_ms: c.now(),
        queries: c
            .records()
            .iter()
            .map(|r| QueryView::new(r, finalize_cost(r, c.meter(), c.price_sheet())))
            .collect(),
        fault,
    }
}
