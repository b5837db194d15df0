//! Service levels and the coordinator that places queries on the pools.
//!
//! Immediate queries start at once, on a free VM slot or else on freshly
//! spawned cloud-function workers. Relaxed queries wait for VM capacity up
//! to their grace period and are then treated as Immediate. Best-of-effort
//! queries only take VM slots nobody else wants and never cause a
//! scale-out or touch the cloud-function pool.

mod coordinator;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use coordinator::{Accounting, Coordinator};

use crate::error::{Error, Result};
use crate::fabric::{Pool, ScalingDecision};
use crate::money::Money;
use crate::sql::ResultSet;
use crate::{Millis, QueryId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceLevel {
    Immediate,
    Relaxed,
    BestOfEffort,
}

impl ServiceLevel {
    pub const ALL: [ServiceLevel; 3] = [
        ServiceLevel::Immediate,
        ServiceLevel::Relaxed,
        ServiceLevel::BestOfEffort,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ServiceLevel::Immediate => "immediate",
            ServiceLevel::Relaxed => "relaxed",
            ServiceLevel::BestOfEffort => "best_of_effort",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ServiceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ServiceLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<ServiceLevel> {
        ServiceLevel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown service level {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryStatus {
    Pending,
    Running,
    Finished,
    Failed,
}

impl QueryStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, QueryStatus::Finished | QueryStatus::Failed)
    }

    pub fn name(self) -> &'static str {
        match self {
            QueryStatus::Pending => "pending",
            QueryStatus::Running => "running",
            QueryStatus::Finished => "finished",
            QueryStatus::Failed => "failed",
        }
    }

    /// Whether `from → to` is a legal step; `None` is "not yet submitted".
    pub fn legal(from: Option<QueryStatus>, to: QueryStatus) -> bool {
        use QueryStatus::*;
        matches!(
            (from, to),
            (None, Pending)
                | (Some(Pending), Running)
                | (Some(Pending), Failed)
                | (Some(Running), Finished)
                | (Some(Running), Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Submission {
    pub sql: String,
    pub level: ServiceLevel,
    pub result_limit: usize,
    /// Relaxed only; the configured default when `None`.
    pub grace: Option<Millis>,
    /// The catalog's only database when `None`.
    pub database: Option<String>,
}

impl Submission {
    pub fn new(sql: impl Into<String>, level: ServiceLevel) -> Submission {
        Submission {
            sql: sql.into(),
            level,
            result_limit: 1000,
            grace: None,
            database: None,
        }
    }
}

/// Where the top-level plan of a query ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TopPlacement {
    Vm,
    /// The coordinator's own reserved slot, used when the pool is saturated.
    Coordinator,
}

#[derive(Debug, Clone)]
pub struct QueryRecord {
    pub id: QueryId,
    pub sql: String,
    pub level: ServiceLevel,
    pub result_limit: usize,
    pub database: Option<String>,
    pub submit_ms: Millis,
    /// Relaxed only.
    pub grace: Option<Millis>,
    pub status: QueryStatus,
    /// When the scheduler assigned resources.
    pub dispatch_ms: Option<Millis>,
    pub start_ms: Option<Millis>,
    pub end_ms: Option<Millis>,
    pub error: Option<String>,
    pub bytes_scanned: u64,
    pub billed_quote: Money,
    /// Pool the sub-plan ran on.
    pub pool: Option<Pool>,
    pub top: Option<TopPlacement>,
    pub tasks: usize,
    /// Relaxed query whose grace period expired before VM capacity appeared.
    pub escalated: bool,
    /// Escalation or start held back by the CF concurrency cap.
    pub cap_delayed: bool,
    pub plan_shape: Option<String>,
    pub result: Option<Arc<ResultSet>>,
}

impl QueryRecord {
    pub fn pending_ms(&self) -> Option<Millis> {
        self.start_ms.map(|s| s - self.submit_ms)
    }

    pub fn exec_ms(&self) -> Option<Millis> {
        Some(self.end_ms? - self.start_ms?)
    }

    /// Longest the query may wait before starting, if bounded.
    pub fn pending_bound(&self, tick: Millis, cf_lag: Millis) -> Option<Millis> {
        pending_bound(self.level, self.grace, tick, cf_lag)
    }
}

/// Immediate: one tick plus CF startup. Relaxed: grace plus the same.
/// Best-of-effort: unbounded.
pub fn pending_bound(level: ServiceLevel, grace: Option<Millis>, tick: Millis, cf_lag: Millis) -> Option<Millis> {
    match level {
        ServiceLevel::Immediate => Some(tick + cf_lag),
        ServiceLevel::Relaxed => Some(grace.unwrap_or(0) + tick + cf_lag),
        ServiceLevel::BestOfEffort => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Transition {
    pub query_id: QueryId,
    pub at: Millis,
    pub from: Option<QueryStatus>,
    pub to: QueryStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScalingEvent {
    pub at: Millis,
    pub decision: ScalingDecision,
    /// Workers added (positive) or taken out of service (negative).
    pub applied: i64,
    /// Pending queries per level (immediate, relaxed, best-of-effort) at
    /// the moment of the decision.
    pub pending: [usize; 3],
    pub active_workers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Flag {
    pub query_id: QueryId,
    pub at: Millis,
    pub kind: String,
}
