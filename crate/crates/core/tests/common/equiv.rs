//! Split execution against the brute-force oracle.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use turbodb_core::catalog::Catalog;
use turbodb_core::config::EngineConfig;
use turbodb_core::sql::exec::TableCache;
use turbodb_core::sql::{execute_oracle, plan_query, Engine, ExecPath, IntermediateStore, ResultSet};

pub const PARALLELISM: [usize; 4] = [1, 2, 4, 8];
pub const PATHS: [ExecPath; 2] = [ExecPath::VmSlot, ExecPath::CfEphemeral];

pub struct Checker {
    catalog: Arc<Catalog>,
    engine: Engine,
    oracle_source: TableCache,
    next_id: AtomicU64,
}

fn sorted(rs: &ResultSet) -> Vec<turbodb_core::value::Row> {
    let mut rows = rs.rows.clone();
    rows.sort();
    rows
}

impl Checker {
    pub fn new(catalog: Arc<Catalog>) -> Checker {
        let config = EngineConfig {
            scan_throughput_bytes_s: 64 * 1024 * 1024,
            data_scale: 1,
        };
        Checker {
            engine: Engine::new(catalog.clone(), IntermediateStore::in_memory(), config),
            oracle_source: TableCache::new(catalog.clone()),
            catalog,
            next_id: AtomicU64::new(1),
        }
    }

    /// Compares every parallelism and path with the oracle. Returns a
    /// description of the first mismatch, or the oracle's row count.
    pub fn check(&self, database: &str, sql: &str) -> Result<usize, String> {
        let plan = plan_query(sql, &self.catalog, database).map_err(|e| format!("{sql}: plan failed: {e}"))?;
        let want = execute_oracle(&plan.bound, &self.oracle_source, None).map_err(|e| format!("{sql}: oracle: {e}"))?;
        let ordered = plan.bound.is_ordered();
        for path in PATHS {
            for p in PARALLELISM {
                let id = self.next_id.fetch_add(1, Ordering::Relaxed);
                let got = self
                    .engine
                    .run_query(id, &plan, p, path, None)
                    .map_err(|e| format!("{sql}: {path:?} p={p}: {e}"))?;
                let same = got.columns == want.columns
                    && got.types == want.types
                    && if ordered { got.rows == want.rows } else { sorted(&got) == sorted(&want) };
                if !same {
                    return Err(format!(
                        "{sql}: {path:?} p={p}: {} rows vs oracle {} rows\n got {:?}\nwant {:?}",
                        got.rows.len(),
                        want.rows.len(),
                        &got.rows[..got.rows.len().min(5)],
                        &want.rows[..want.rows.len().min(5)]
                    ));
                }
            }
        }
        Ok(want.rows.len())
    }
}
