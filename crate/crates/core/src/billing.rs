//! Per-TB-scan pricing and the cost-visibility report.

use serde::Serialize;

use crate::config::BillingConfig;
use crate::error::{Error, Result};
use crate::fabric::ResourceMeter;
use crate::money::Money;
use crate::scheduler::{QueryRecord, QueryStatus, ServiceLevel};
use crate::{Millis, QueryId};

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSheet {
    pub immediate: Money,
    pub relaxed: Money,
    pub best_of_effort: Money,
    /// Bytes in one TB.
    pub tb_bytes: i128,
}

impl PriceSheet {
    pub fn from_config(c: &BillingConfig) -> PriceSheet {
        PriceSheet {
            immediate: c.rate_immediate,
            relaxed: c.rate_relaxed,
            best_of_effort: c.rate_best_of_effort,
            tb_bytes: c.tb_unit.bytes(),
        }
    }

    pub fn rate(&self, level: ServiceLevel) -> Money {
        match level {
            ServiceLevel::Immediate => self.immediate,
            ServiceLevel::Relaxed => self.relaxed,
            ServiceLevel::BestOfEffort => self.best_of_effort,
        }
    }

    /// `rate × bytes / TB`, exact.
    pub fn price(&self, bytes: u64, level: ServiceLevel) -> Money {
        (self.rate(level) * bytes as i128) / self.tb_bytes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CostRecord {
    pub id: QueryId,
    pub level: ServiceLevel,
    pub status: QueryStatus,
    pub submit_ms: Millis,
    pub bytes_scanned: u64,
    pub billed: Money,
    pub actual: Money,
    pub pending_ms: Option<Millis>,
    pub exec_ms: Option<Millis>,
}

/// Pairs a query's billed price with the resources metered for it. Failed
/// queries are billed nothing but keep their actual cost; queries that have
/// not finished are not billed yet.
pub fn finalize_cost(record: &QueryRecord, meter: &ResourceMeter, sheet: &PriceSheet) -> CostRecord {
    let billed = match record.status {
        QueryStatus::Finished => sheet.price(record.bytes_scanned, record.level),
        _ => Money::ZERO,
    };
    CostRecord {
        id: record.id,
        level: record.level,
        status: record.status,
        submit_ms: record.submit_ms,
        bytes_scanned: record.bytes_scanned,
        billed,
        actual: meter.total_for(record.id),
        pending_ms: record.pending_ms(),
        exec_ms: record.exec_ms(),
    }
}

pub const MINUTE_MS: Millis = 60_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MinuteCount {
    /// Start of the minute, in milliseconds.
    pub t: Millis,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    #[serde(rename = "perMinute")]
    pub per_minute: Vec<MinuteCount>,
    pub queries: Vec<CostRecord>,
}

/// Queries submitted within `[from, to]`, ordered by submission, with a
/// count for every minute touching the window.
pub fn build_report(from: Millis, to: Millis, records: &[CostRecord]) -> Result<Report> {
    if from > to {
        return Err(Error::InvalidArgument(format!(
            "report window is inverted: from {from} > to {to}"
        )));
    }
    let mut queries: Vec<CostRecord> = records
        .iter()
        .filter(|r| (from..=to).contains(&r.submit_ms))
        .cloned()
        .collect();
    queries.sort_by_key(|r| (r.submit_ms, r.id));
    let first = from / MINUTE_MS;
    let last = to / MINUTE_MS;
    let mut per_minute: Vec<MinuteCount> = (first..=last)
        .map(|m| MinuteCount {
            t: m * MINUTE_MS,
            n: 0,
        })
        .collect();
    for q in &queries {
        per_minute[(q.submit_ms / MINUTE_MS - first) as usize].n += 1;
    }
    Ok(Report { per_minute, queries })
}
