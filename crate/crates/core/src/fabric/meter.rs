use serde::Serialize;

use crate::money::Money;
use crate::{Millis, QueryId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Pool {
    #[serde(rename = "VM")]
    Vm,
    #[serde(rename = "CF")]
    Cf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MeterEntry {
    pub query_id: QueryId,
    pub pool: Pool,
    pub worker_ms: Millis,
    pub dollars: Money,
}

/// Append-only log of resources consumed per query.
#[derive(Debug, Clone, Default)]
pub struct ResourceMeter {
    entries: Vec<MeterEntry>,
}

/// `unit_price_per_s × ms / 1000`, exactly.
pub fn charge(unit_price_per_s: Money, ms: Millis) -> Money {
    (unit_price_per_s * ms as i128) / 1000
}

impl ResourceMeter {
    pub fn new() -> ResourceMeter {
        ResourceMeter::default()
    }

    pub fn meter(&mut self, query_id: QueryId, pool: Pool, worker_ms: Millis, unit_price_per_s: Money) -> &MeterEntry {
        self.entries.push(MeterEntry {
            query_id,
            pool,
            worker_ms,
            dollars: charge(unit_price_per_s, worker_ms),
        });
        self.entries.last().expect("just pushed")
    }

    pub fn entries(&self) -> &[MeterEntry] {
        &self.entries
    }

    pub fn total_for(&self, query_id: QueryId) -> Money {
        self.entries
            .iter()
            .filter(|e| e.query_id == query_id)
            .map(|e| e.dollars)
            .sum()
    }

    pub fn total(&self) -> Money {
        self.entries.iter().map(|e| e.dollars).sum()
    }

    pub fn total_ms(&self, pool: Pool) -> u128 {
        self.entries
            .iter()
            .filter(|e| e.pool == pool)
            .map(|e| e.worker_ms as u128)
            .sum()
    }
}
